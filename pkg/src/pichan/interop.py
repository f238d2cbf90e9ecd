"""Extern channel bindings to in-process host classes.

This is the stand-in for a real foreign runtime: a registry of host classes
with signature tables, bound to extern declarations at startup but
instantiated lazily at first call so that declaration order can never be
observed through constructor side effects.  Every call/return is checked
against the method's protocol automaton at run time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

from .core import Name
from .typecheck import INT, ProtocolAutomaton, canonical_protocol


class DuplicateClass(Exception):
    pass


class UnknownClass(Exception):
    pass


class SignatureMismatch(Exception):
    pass


class UngroundArgument(Exception):
    """A name argument crossed the host boundary without an attached literal."""


class HostFault(Exception):
    """The host function itself raised."""


class ProtocolViolation(Exception):
    pass


# ---------------------------------------------------------------------------
# Extern declarations (the parsed `extern A -> class C { ... }` block)


@dataclass(frozen=True)
class MethodDecl:
    name: str
    call_channel: Name
    param_sorts: tuple  # tuple[BaseSort, ...], empty for void
    return_channel: Name
    return_payload: tuple  # () for void, else a 1-tuple
    protocol: ProtocolAutomaton
    protocol_declared: bool = field(compare=False, default=False)
    span: object = field(compare=False, default=None)

    def canonical_automaton(self) -> ProtocolAutomaton:
        return canonical_protocol(self.call_channel.display, self.param_sorts,
                                  self.return_channel.display, self.return_payload)


@dataclass(frozen=True)
class ExternDecl:
    alias: str
    class_name: str
    methods: tuple  # tuple[MethodDecl, ...]
    span: object = field(compare=False, default=None)

    def channels(self) -> list:
        out = []
        for m in self.methods:
            out.append(m.call_channel)
            out.append(m.return_channel)
        return out


# ---------------------------------------------------------------------------
# Host side


@dataclass
class HostClass:
    class_name: str
    signatures: dict  # method -> (param sorts tuple, return sort BaseSort | None)
    constructor: Callable  # (log: Callable[[str], None]) -> instance object

    # instance objects expose one callable per method plus optionally use log


class HostRegistry:
    """Host classes by name plus an append-only effect log.  Read-only after
    VM start except the log."""

    def __init__(self):
        self.classes: dict[str, HostClass] = {}
        self.effect_log: list[tuple[str, str, int]] = []  # (class, event, step)

    def register(self, c: HostClass) -> "HostRegistry":
        if c.class_name in self.classes:
            raise DuplicateClass(c.class_name)
        self.classes[c.class_name] = c
        return self

    def log(self, class_name: str, event: str, step: int) -> None:
        self.effect_log.append((class_name, event, step))

    def effect_log_lines(self) -> str:
        return "\n".join(
            json.dumps({"class": c, "event": e, "step": s}, sort_keys=True)
            for (c, e, s) in self.effect_log)


def register_host_class(registry: HostRegistry, c: HostClass) -> HostRegistry:
    return registry.register(c)


# ---------------------------------------------------------------------------
# Endpoints


class Endpoint:
    """Runtime state for one extern declaration: lazily created instance,
    per-method protocol monitor state, and at most one staged return."""

    def __init__(self, decl: ExternDecl, host: HostClass):
        self.decl = decl
        self.host = host
        self.instance = None  # Uninstantiated until first call
        self.monitor = {m.name: 0 for m in decl.methods}
        self.pending: Optional[tuple[str, object]] = None  # (method, value)

    @property
    def live(self) -> bool:
        return self.instance is not None

    def method(self, name: str) -> MethodDecl:
        for m in self.decl.methods:
            if m.name == name:
                return m
        raise KeyError(name)

    def method_for_call_channel(self, name_id: int) -> Optional[MethodDecl]:
        for m in self.decl.methods:
            if m.call_channel.id == name_id:
                return m
        return None

    def call_accepted(self, method: MethodDecl) -> bool:
        tm = method.protocol.transition_map()
        return (self.monitor[method.name], method.call_channel.display) in tm

    def copy(self) -> "Endpoint":
        ep = Endpoint(self.decl, self.host)
        ep.instance = self.instance
        ep.monitor = dict(self.monitor)
        ep.pending = self.pending
        return ep


def resolve_externs(decls, registry: HostRegistry) -> dict:
    """Bind every declaration to a registered class with matching method
    signatures.  No constructor runs here; endpoints start uninstantiated."""
    bindings = {}
    for d in decls:
        host = registry.classes.get(d.class_name)
        if host is None:
            raise UnknownClass(f"extern {d.alias}: no host class {d.class_name}")
        for m in d.methods:
            sig = host.signatures.get(m.name)
            if sig is None:
                raise SignatureMismatch(
                    f"{d.class_name} has no method {m.name}")
            params, ret = sig
            decl_ret = m.return_payload[0] if m.return_payload else None
            if tuple(params) != tuple(m.param_sorts) or ret != decl_ret:
                raise SignatureMismatch(
                    f"{d.class_name}.{m.name}: declared "
                    f"({','.join(map(str, m.param_sorts))})"
                    f"->{decl_ret or 'void'} does not match host "
                    f"({','.join(map(str, params))})->{ret or 'void'}")
        bindings[d.alias] = Endpoint(d, host)
    return bindings


def dispatch_call(endpoint: Endpoint, method_name: str, args: list,
                  registry: HostRegistry, step: int) -> None:
    """Run one host call: instantiate on first use, advance the monitor,
    invoke the host function and stage its result for return delivery."""
    m = endpoint.method(method_name)
    tm = m.protocol.transition_map()
    key = (endpoint.monitor[method_name], m.call_channel.display)
    if key not in tm:
        raise ProtocolViolation(
            f"call to {method_name} on {endpoint.decl.alias} violates its "
            f"protocol (awaiting return?)")
    if endpoint.pending is not None:
        raise ProtocolViolation(
            f"call to {method_name} on {endpoint.decl.alias} while a return "
            f"is pending")
    log = lambda event: registry.log(endpoint.host.class_name, event, step)
    if endpoint.instance is None:
        endpoint.instance = endpoint.host.constructor(log)
    endpoint.instance._pichan_log = log
    endpoint.monitor[method_name] = tm[key][1]
    fn = getattr(endpoint.instance, method_name)
    try:
        value = fn(*args)
    except Exception as exc:  # host code is foreign; wrap everything
        raise HostFault(f"{endpoint.decl.alias}.{method_name}: {exc}") from exc
    endpoint.pending = (method_name, value)


def complete_return(endpoint: Endpoint) -> tuple[str, object]:
    """Consume the staged return, advancing the monitor back along the
    return transition.  The caller fuses the value with the receiver."""
    if endpoint.pending is None:
        raise ProtocolViolation(f"no pending return on {endpoint.decl.alias}")
    method_name, value = endpoint.pending
    m = endpoint.method(method_name)
    tm = m.protocol.transition_map()
    key = (endpoint.monitor[method_name], m.return_channel.display)
    if key not in tm:
        raise ProtocolViolation(
            f"return from {method_name} on {endpoint.decl.alias} violates "
            f"its protocol")
    endpoint.monitor[method_name] = tm[key][1]
    endpoint.pending = None
    return method_name, value


# ---------------------------------------------------------------------------
# Built-in fixture classes


class _Account:
    PIN = 1976528

    def __init__(self, log):
        log("ctor")

    def readn(self):
        return None

    def read(self):
        return self.PIN


class _Console:
    def __init__(self, log):
        log("ctor")

    def print(self, value):
        self._pichan_log(f"print:{value}")
        return None


class _LoggingCtor:
    def __init__(self, log):
        log("ctor")

    def poke(self):
        self._pichan_log("poke")
        return None


class _Counter:
    def __init__(self, log):
        log("ctor")
        self.count = 0

    def inc(self):
        self.count += 1
        return self.count


def build_std_registry() -> HostRegistry:
    """The default fixture set: Account, Console, LoggingCtor, Counter."""
    reg = HostRegistry()
    reg.register(HostClass("Account", {
        "readn": ((), None),
        "read": ((), INT),
    }, _Account))
    reg.register(HostClass("Console", {
        "print": ((INT,), None),
    }, _Console))
    reg.register(HostClass("LoggingCtor", {
        "poke": ((), None),
    }, _LoggingCtor))
    reg.register(HostClass("Counter", {
        "inc": ((), INT),
    }, _Counter))
    return reg


REGISTRY_BUILDERS = {"std": build_std_registry}


def build_registry(name: str) -> HostRegistry:
    try:
        return REGISTRY_BUILDERS[name]()
    except KeyError:
        raise UnknownClass(f"no built-in registry named {name}")
