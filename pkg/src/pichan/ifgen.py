"""Interface generator: turn a JSON class manifest into an extern block.

The manifest replaces scanning a foreign assembly: it lists a class's
methods with their parameter and return sorts.  Generation emits one call
channel per method (named like the method) and return channels Ret1..RetN
in declaration order, each with the canonical call-then-return protocol.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .parser import KEYWORDS


class ManifestError(Exception):
    pass


class ManifestParseError(ManifestError):
    pass


class UnknownSort(ManifestError):
    pass


class DuplicateMethod(ManifestError):
    pass


class AliasClash(ManifestError):
    pass


SORT_NAMES = {"void", "int", "string", "bool"}


@dataclass(frozen=True)
class ManifestMethod:
    name: str
    params: tuple  # tuple of sort names, never void
    returns: str  # a sort name, possibly void


@dataclass(frozen=True)
class ClassManifest:
    class_name: str
    methods: tuple  # tuple[ManifestMethod, ...]
    constructor_effects: bool = False  # documentation only


def load_manifest(path) -> ClassManifest:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestParseError(f"{path}: {exc}")
    return parse_manifest(raw, source=str(path))


def parse_manifest(raw, source: str = "<manifest>") -> ClassManifest:
    if not isinstance(raw, dict) or not isinstance(raw.get("class"), str):
        raise ManifestParseError(f"{source}: expected an object with a 'class' name")
    methods = []
    seen = set()
    for entry in raw.get("methods", []):
        if not isinstance(entry, dict) or not isinstance(entry.get("name"), str):
            raise ManifestParseError(f"{source}: method entries need a 'name'")
        name = entry["name"]
        if (not name or name in KEYWORDS or not name[0].isalpha()
                or not all(c.isalnum() or c == "_" for c in name)):
            raise ManifestParseError(
                f"{source}: method name {name!r} is not a valid identifier")
        if name in seen:
            raise DuplicateMethod(f"{source}: duplicate method {name}")
        seen.add(name)
        params = entry.get("params", [])
        for s in params:
            if s not in SORT_NAMES:
                raise UnknownSort(f"{source}: unknown sort {s!r} in {name}")
            if s == "void":
                raise UnknownSort(f"{source}: void cannot be a parameter of {name}")
        returns = entry.get("returns", "void")
        if returns not in SORT_NAMES:
            raise UnknownSort(f"{source}: unknown sort {returns!r} in {name}")
        methods.append(ManifestMethod(name, tuple(params), returns))
    return ClassManifest(raw["class"], tuple(methods),
                         bool(raw.get("constructor_effects", False)))


def generate_interface(manifest: ClassManifest, alias: str) -> str:
    """Extern-block source for the manifest; parses cleanly and passes the
    protocol schema check by construction."""
    taken = {m.name for m in manifest.methods}
    if alias in taken:
        raise AliasClash(f"alias {alias} collides with a method name")
    lines = [f"extern {alias} -> class {manifest.class_name} {{"]
    ret_channels = []
    for i, m in enumerate(manifest.methods, start=1):
        ret_chan = f"Ret{i}"
        while ret_chan in taken:
            ret_chan += "_"
        taken.add(ret_chan)
        ret_channels.append(ret_chan)
    if alias in taken:
        raise AliasClash(f"alias {alias} collides with a channel name")
    for m, ret_chan in zip(manifest.methods, ret_channels):
        params = ", ".join(m.params)
        payload = ", ".join(m.params) if m.params else "void"
        result = m.returns
        proto_args = ", ".join(m.params)
        proto_ret = result if result != "void" else ""
        lines.append(f"  {result} {m.name}({params}) {{")
        lines.append(f"    call {m.name}: {payload};")
        lines.append(f"    return {ret_chan}: {result};")
        lines.append(f"  }} acceded as {{rec S {{{m.name}({proto_args})."
                     f"{ret_chan}({proto_ret}).S}}}}")
    lines.append("}")
    return "\n".join(lines) + "\n"


ACCOUNT_MANIFEST = {
    "class": "Account",
    "methods": [
        {"name": "readn", "params": [], "returns": "void"},
        {"name": "read", "params": [], "returns": "int"},
    ],
}
