"""Tests for the manifest-driven extern interface generator."""

import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pichan.ifgen import (ACCOUNT_MANIFEST, AliasClash, ClassManifest,
                          DuplicateMethod, ManifestMethod, ManifestParseError,
                          UnknownSort, generate_interface, load_manifest,
                          parse_manifest)
from pichan.interop import build_std_registry, resolve_externs
from pichan.parser import parse_program
from pichan.typecheck import check_protocol_schema


def test_parse_account_manifest():
    m = parse_manifest(ACCOUNT_MANIFEST)
    assert m.class_name == "Account"
    assert m.methods == (ManifestMethod("readn", (), "void"),
                         ManifestMethod("read", (), "int"))


def test_empty_methods_valid():
    m = parse_manifest({"class": "C"})
    assert m.methods == ()
    text = generate_interface(m, "X")
    assert parse_program(text + "nil").externs[0].methods == ()


def test_unknown_sort():
    with pytest.raises(UnknownSort):
        parse_manifest({"class": "C", "methods": [
            {"name": "m", "params": [], "returns": "float"}]})


def test_void_param_rejected():
    with pytest.raises(UnknownSort):
        parse_manifest({"class": "C", "methods": [
            {"name": "m", "params": ["void"], "returns": "void"}]})


def test_duplicate_method():
    with pytest.raises(DuplicateMethod):
        parse_manifest({"class": "C", "methods": [
            {"name": "m"}, {"name": "m"}]})


def test_bad_method_name():
    with pytest.raises(ManifestParseError):
        parse_manifest({"class": "C", "methods": [{"name": "new"}]})


def test_load_manifest_file(tmp_path):
    path = tmp_path / "acct.manifest.json"
    path.write_text(json.dumps(ACCOUNT_MANIFEST))
    assert load_manifest(path) == parse_manifest(ACCOUNT_MANIFEST)
    with pytest.raises(ManifestParseError):
        load_manifest(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ManifestParseError):
        load_manifest(bad)


def test_generate_account_interface():
    text = generate_interface(parse_manifest(ACCOUNT_MANIFEST), "FClass")
    program = parse_program(text + "nil")
    d = program.externs[0]
    assert d.alias == "FClass" and d.class_name == "Account"
    assert [m.name for m in d.methods] == ["readn", "read"]
    assert [m.return_channel.display for m in d.methods] == ["Ret1", "Ret2"]
    assert check_protocol_schema(d) == []
    assert "FClass" in resolve_externs([d], build_std_registry())


def test_alias_clash():
    with pytest.raises(AliasClash):
        generate_interface(parse_manifest(ACCOUNT_MANIFEST), "read")


def test_ret_channel_collision_suffixed():
    m = parse_manifest({"class": "C", "methods": [
        {"name": "Ret1", "params": [], "returns": "void"}]})
    text = generate_interface(m, "X")
    d = parse_program(text + "nil").externs[0]
    assert d.methods[0].call_channel.display == "Ret1"
    assert d.methods[0].return_channel.display == "Ret1_"


def _random_manifest(rng):
    sorts = ["int", "string", "bool"]
    methods = []
    for i in range(rng.randint(0, 10)):
        methods.append({
            "name": f"m{i}",
            "params": [rng.choice(sorts) for _ in range(rng.randint(0, 3))],
            "returns": rng.choice(sorts + ["void"]),
        })
    return parse_manifest({"class": f"C{rng.randint(0, 9)}", "methods": methods})


@given(st.integers(0, 10**6))
@settings(max_examples=100, deadline=None)
def test_generated_interface_round_trip(seed):
    m = _random_manifest(random.Random(seed))
    text = generate_interface(m, "Alias")
    d = parse_program(text + "nil").externs[0]
    assert check_protocol_schema(d) == []
    assert len(d.methods) == len(m.methods)
    # channel-count law: one call + one return port per method
    assert len(d.channels()) == 2 * len(m.methods)
    for mm, dm in zip(m.methods, d.methods):
        assert dm.name == mm.name
        assert dm.call_channel.display == mm.name
        assert tuple(str(s) for s in dm.param_sorts) == mm.params
        want_ret = () if mm.returns == "void" else (mm.returns,)
        assert tuple(str(s) for s in dm.return_payload) == want_ret


@given(st.integers(0, 10**6))
@settings(max_examples=60, deadline=None)
def test_adding_a_method_is_incremental(seed):
    rng = random.Random(seed)
    m = _random_manifest(rng)
    extra = ManifestMethod(f"m{len(m.methods)}", ("int",), "bool")
    m2 = ClassManifest(m.class_name, m.methods + (extra,))
    d1 = parse_program(generate_interface(m, "A") + "nil").externs[0]
    d2 = parse_program(generate_interface(m2, "A") + "nil").externs[0]
    # existing entries unchanged (modulo fresh name ids), one appended
    assert len(d2.methods) == len(d1.methods) + 1
    for a, b in zip(d1.methods, d2.methods):
        assert (a.name, a.param_sorts, a.return_payload) == \
            (b.name, b.param_sorts, b.return_payload)
        assert a.return_channel.display == b.return_channel.display
    assert d2.methods[-1].name == extra.name
    assert d2.methods[-1].return_channel.display == f"Ret{len(m2.methods)}"
