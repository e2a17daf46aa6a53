"""Flat SPICE-subset netlist model: parse, emit, validate, and rewrite.

The dialect is deliberately small and line oriented:

    M<name> <d> <g> <s> <b> <model> W=<val> L=<val> [nf=<int>]
    R<name> <a> <b> <value>
    C<name> <a> <b> <value>
    I<name> <a> <b> <value>
    V<name> <a> <b> <value>
    X<name> <net> ... <net> <subcircuit-name>
    .subckt <name> <port> ... <port>
    .ends
    .title <text>
    .end

Lines starting with '*' are comments, a leading '+' continues the previous
card, and numeric values accept the usual engineering suffixes
(f, p, n, u, m, k, meg, g).  Net names are case sensitive and the net "0"
is ground.  Anything that is not one of the cards above is a parse error:
silently skipping unknown input is how netlist bugs hide.

Netlist values are immutable; every rewrite (`apply_sizing`, `merge_nets`,
`with_net_role`) returns a new object.  Emission is deterministic, so a
netlist built the same way twice serializes to identical bytes.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Sequence

GROUND_NET = "0"

__all__ = [
    "GROUND_NET",
    "DeviceKind",
    "Component",
    "Subcircuit",
    "Netlist",
    "NetlistError",
    "ParseError",
    "Diagnostic",
    "parse",
    "emit",
    "validate",
    "apply_sizing",
    "merge_nets",
    "parse_value",
    "format_value",
    "structurally_equal",
    "equivalent_up_to_net_names",
    "load_net_roles",
    "save_net_roles",
]


class NetlistError(Exception):
    """Base class for netlist failures."""


class ParseError(NetlistError):
    def __init__(self, message: str, line: int, column: int = 0):
        super().__init__(f"line {line}: {message}" if column == 0
                         else f"line {line}, col {column}: {message}")
        self.line = line
        self.column = column


class DeviceKind(Enum):
    MOS = "mos"
    RESISTOR = "resistor"
    CAPACITOR = "capacitor"
    CURRENT_SOURCE = "current_source"
    VOLTAGE_SOURCE = "voltage_source"
    SUBCIRCUIT = "subcircuit"
    # Junction is a connectivity artifact used by schematic tracing.  It can
    # be held in a Netlist while a trace is being reduced but has no card
    # format and is rejected by emit().
    JUNCTION = "junction"

    @property
    def prefix(self) -> str:
        return _KIND_TO_PREFIX[self]

    @property
    def pin_count(self) -> int | None:
        """Required pin count, or None when variable (X cards, junctions)."""
        return _KIND_PIN_COUNT[self]

    @property
    def pin_names(self) -> tuple[str, ...] | None:
        return _KIND_PIN_NAMES[self]


_KIND_TO_PREFIX = {
    DeviceKind.MOS: "M",
    DeviceKind.RESISTOR: "R",
    DeviceKind.CAPACITOR: "C",
    DeviceKind.CURRENT_SOURCE: "I",
    DeviceKind.VOLTAGE_SOURCE: "V",
    DeviceKind.SUBCIRCUIT: "X",
}
_PREFIX_TO_KIND = {v: k for k, v in _KIND_TO_PREFIX.items()}

_KIND_PIN_COUNT = {
    DeviceKind.MOS: 4,
    DeviceKind.RESISTOR: 2,
    DeviceKind.CAPACITOR: 2,
    DeviceKind.CURRENT_SOURCE: 2,
    DeviceKind.VOLTAGE_SOURCE: 2,
    DeviceKind.SUBCIRCUIT: None,
    DeviceKind.JUNCTION: None,
}

_KIND_PIN_NAMES = {
    DeviceKind.MOS: ("d", "g", "s", "b"),
    DeviceKind.RESISTOR: ("a", "b"),
    DeviceKind.CAPACITOR: ("a", "b"),
    DeviceKind.CURRENT_SOURCE: ("p", "n"),
    DeviceKind.VOLTAGE_SOURCE: ("p", "n"),
    DeviceKind.SUBCIRCUIT: None,
    DeviceKind.JUNCTION: None,
}

# Engineering suffixes, decimal exponents.  "meg" must be matched before "m".
_SUFFIX_EXP = {
    "f": -15, "p": -12, "n": -9, "u": -6, "m": -3,
    "k": 3, "meg": 6, "g": 9,
}
_EXP_SUFFIX = {v: k for k, v in _SUFFIX_EXP.items()}

_VALUE_RE = re.compile(
    r"^([+-]?)(\d+\.?\d*|\.\d+)(?:[eE]([+-]?\d+))?(meg|[fpnumkg])?$",
    re.IGNORECASE,
)


def parse_value(token: str) -> float:
    """Parse a numeric token with an optional engineering suffix into SI units.

    The decimal string is rebuilt and converted with a single float() call so
    that e.g. "100n" and "1e-7" parse to bit-identical floats.
    """
    m = _VALUE_RE.match(token.strip())
    if m is None:
        raise ValueError(f"malformed numeric value {token!r}")
    sign, mantissa, exp, suffix = m.groups()
    decades = int(exp) if exp else 0
    if suffix:
        decades += _SUFFIX_EXP[suffix.lower()]
    return float(f"{sign}{mantissa}e{decades}")


def _split_repr(r: str) -> tuple[str, int]:
    """Decompose repr(abs(v)) into (digit string, exponent of last digit)."""
    if "e" in r or "E" in r:
        mant, _, exp = r.lower().partition("e")
        e10 = int(exp)
    else:
        mant, e10 = r, 0
    if "." in mant:
        whole, _, frac = mant.partition(".")
        digits = (whole + frac).lstrip("0") or "0"
        e10 -= len(frac)
    else:
        digits = mant.lstrip("0") or "0"
    # drop trailing zeros into the exponent so "1000" -> ("1", 3)
    if digits != "0":
        t = len(digits) - len(digits.rstrip("0"))
        if t:
            digits = digits[:-t]
            e10 += t
    return digits, e10


def format_value(v: float) -> str:
    """Format an SI value with an engineering suffix when that round-trips.

    The mantissa is derived from repr(v) by shifting the decimal point (pure
    string manipulation), so parse_value(format_value(v)) == v exactly.
    """
    if not math.isfinite(v):
        raise ValueError(f"cannot emit non-finite value {v!r}")
    if v == 0:
        return "0"
    sign = "-" if v < 0 else ""
    digits, lsd = _split_repr(repr(abs(v)))
    msd = lsd + len(digits) - 1
    k = (msd // 3) * 3
    if k == 0 or k not in _EXP_SUFFIX:
        r = repr(abs(v))
        return sign + r
    shift = lsd - k
    if shift >= 0:
        mant = digits + "0" * shift
    else:
        p = len(digits) + shift
        if p <= 0:
            mant = "0." + "0" * (-p) + digits
        else:
            mant = digits[:p] + "." + digits[p:]
    return f"{sign}{mant}{_EXP_SUFFIX[k]}"


@dataclass(frozen=True)
class Component:
    """A single card: name, device kind, ordered pins, numeric parameters.

    Pin order is meaningful (MOS pins are drain, gate, source, body) and is
    preserved by every operation.  `line` records where the card came from
    for diagnostics and never participates in equality.
    """

    name: str
    kind: DeviceKind
    pins: tuple[str, ...]
    params: Mapping[str, float] = field(default_factory=dict)
    model: str | None = None
    line: int = field(default=0, compare=False)

    def __post_init__(self):
        if not self.name:
            raise NetlistError("component name must be non-empty")
        object.__setattr__(self, "pins", tuple(self.pins))
        object.__setattr__(self, "params", dict(self.params))

    def param_paths(self) -> list[str]:
        return [f"{self.name}.{p}" for p in self.params]

    def with_params(self, params: Mapping[str, float]) -> "Component":
        merged = dict(self.params)
        merged.update(params)
        return replace(self, params=merged)


@dataclass(frozen=True)
class Subcircuit:
    name: str
    ports: tuple[str, ...]
    body: "Netlist"


@dataclass(frozen=True)
class Netlist:
    """An immutable flat netlist plus optional subcircuit definitions.

    `net_roles` maps a net name to a functional label (e.g. "output",
    "supply").  Roles travel in a sidecar file, not in the netlist text, so
    they are excluded from structural comparison.
    """

    title: str = ""
    components: tuple[Component, ...] = ()
    subcircuits: tuple[Subcircuit, ...] = ()
    net_roles: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "subcircuits", tuple(self.subcircuits))
        object.__setattr__(self, "net_roles", dict(self.net_roles))
        seen: set[str] = set()
        for c in self.components:
            if c.name in seen:
                raise NetlistError(f"duplicate component name {c.name!r}")
            seen.add(c.name)

    @property
    def nets(self) -> set[str]:
        out: set[str] = set()
        for c in self.components:
            out.update(c.pins)
        out.update(self.net_roles)
        return out

    def component(self, name: str) -> Component:
        for c in self.components:
            if c.name == name:
                return c
        raise KeyError(name)

    def subcircuit(self, name: str) -> Subcircuit | None:
        for s in self.subcircuits:
            if s.name == name:
                return s
        return None

    def net_pin_count(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for c in self.components:
            for n in c.pins:
                counts[n] = counts.get(n, 0) + 1
        return counts

    def with_component(self, comp: Component) -> "Netlist":
        return replace(self, components=self.components + (comp,))

    def with_net_role(self, net: str, role: str) -> "Netlist":
        roles = dict(self.net_roles)
        roles[net] = role
        return replace(self, net_roles=roles)

    def without_net_roles(self) -> "Netlist":
        return replace(self, net_roles={})


# ---------------------------------------------------------------------------
# parsing


def _logical_lines(text: str):
    """Yield (first line number, joined card text) after '+' continuation."""
    pending: str | None = None
    pending_line = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("*"):
            continue
        if stripped.startswith("+"):
            if pending is None:
                raise ParseError("continuation line with nothing to continue",
                                 lineno)
            pending += " " + stripped[1:].strip()
            continue
        if pending is not None:
            yield pending_line, pending
        pending = stripped
        pending_line = lineno
    if pending is not None:
        yield pending_line, pending


def _parse_params(tokens: Sequence[str], lineno: int,
                  required: Sequence[str],
                  optional: Sequence[str]) -> dict[str, float]:
    canon = {k.lower(): k for k in (*required, *optional)}
    out: dict[str, float] = {}
    for tok in tokens:
        key, sep, val = tok.partition("=")
        if not sep:
            raise ParseError(f"expected KEY=value parameter, got {tok!r}",
                             lineno)
        k = canon.get(key.lower())
        if k is None:
            raise ParseError(f"unknown parameter {key!r}", lineno)
        if k in out:
            raise ParseError(f"duplicate parameter {k!r}", lineno)
        try:
            v = parse_value(val)
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        if k == "nf":
            if v != int(v):
                raise ParseError(f"nf must be an integer, got {val!r}", lineno)
            v = float(int(v))
        out[k] = v
    for k in required:
        if k not in out:
            raise ParseError(f"missing required parameter {k}", lineno)
    return out


def _parse_card(lineno: int, card: str) -> Component:
    tokens = card.split()
    head = tokens[0]
    kind = _PREFIX_TO_KIND.get(head[0].upper())
    if kind is None:
        raise ParseError(f"unrecognized card {head!r}", lineno)
    name = head[0].upper() + head[1:]
    if len(name) < 2:
        raise ParseError(f"component {head!r} needs a name after the prefix",
                         lineno)
    if kind is DeviceKind.MOS:
        if len(tokens) < 6:
            raise ParseError("MOS card needs 4 nets and a model", lineno)
        pins = tuple(tokens[1:5])
        model = tokens[5]
        if "=" in model:
            raise ParseError("MOS card needs 4 nets and a model", lineno)
        params = _parse_params(tokens[6:], lineno,
                               required=("W", "L"), optional=("nf",))
        return Component(name, kind, pins, params, model, line=lineno)
    if kind is DeviceKind.SUBCIRCUIT:
        if len(tokens) < 3:
            raise ParseError("X card needs at least one net and a "
                             "subcircuit name", lineno)
        return Component(name, kind, tuple(tokens[1:-1]), {}, tokens[-1],
                         line=lineno)
    # two-terminal value devices
    if len(tokens) != 4:
        raise ParseError(f"{head[0].upper()} card needs 2 nets and a value",
                         lineno)
    try:
        value = parse_value(tokens[3])
    except ValueError as exc:
        raise ParseError(str(exc), lineno) from None
    return Component(name, kind, (tokens[1], tokens[2]), {"value": value},
                     line=lineno)


def parse(text: str) -> Netlist:
    """Parse netlist text.  Unrecognized cards raise ParseError."""
    title: str | None = None
    top: list[Component] = []
    subckts: list[Subcircuit] = []
    sub_name: str | None = None
    sub_ports: tuple[str, ...] = ()
    sub_comps: list[Component] = []

    for lineno, card in _logical_lines(text):
        lower = card.lower()
        if lower.startswith("."):
            directive = lower.split()[0]
            if directive == ".title":
                if sub_name is not None:
                    raise ParseError(".title not allowed inside .subckt",
                                     lineno)
                if title is not None:
                    raise ParseError("duplicate .title", lineno)
                title = card[len(".title"):].strip()
            elif directive == ".subckt":
                if sub_name is not None:
                    raise ParseError("nested .subckt is not supported", lineno)
                tokens = card.split()
                if len(tokens) < 3:
                    raise ParseError(".subckt needs a name and at least one "
                                     "port", lineno)
                sub_name = tokens[1]
                sub_ports = tuple(tokens[2:])
                sub_comps = []
            elif directive == ".ends":
                if sub_name is None:
                    raise ParseError(".ends without .subckt", lineno)
                subckts.append(Subcircuit(sub_name, sub_ports,
                                          Netlist(components=tuple(sub_comps))))
                sub_name = None
            elif directive == ".end":
                break
            else:
                raise ParseError(f"unrecognized directive {directive!r}",
                                 lineno)
            continue
        comp = _parse_card(lineno, card)
        if sub_name is not None:
            sub_comps.append(comp)
        else:
            top.append(comp)

    if sub_name is not None:
        raise ParseError(f".subckt {sub_name!r} never closed with .ends", 0)

    try:
        netlist = Netlist(title=title or "", components=tuple(top),
                          subcircuits=tuple(subckts))
    except NetlistError as exc:
        raise ParseError(str(exc), 0) from None

    # check X-card arity against locally defined subcircuits
    for c in netlist.components:
        if c.kind is DeviceKind.SUBCIRCUIT:
            sub = netlist.subcircuit(c.model or "")
            if sub is not None and len(c.pins) != len(sub.ports):
                raise ParseError(
                    f"{c.name} connects {len(c.pins)} nets but subcircuit "
                    f"{sub.name!r} has {len(sub.ports)} ports", c.line)
    return netlist


# ---------------------------------------------------------------------------
# emission


def _emit_component(c: Component) -> str:
    if c.kind is DeviceKind.JUNCTION:
        raise NetlistError(f"junction {c.name!r} has no card format; remove "
                           "it before emitting")
    parts = [c.name] + list(c.pins)
    if c.kind is DeviceKind.MOS:
        parts.append(c.model or "")
        parts.append(f"W={format_value(c.params['W'])}")
        parts.append(f"L={format_value(c.params['L'])}")
        if "nf" in c.params:
            parts.append(f"nf={int(c.params['nf'])}")
    elif c.kind is DeviceKind.SUBCIRCUIT:
        parts.append(c.model or "")
    else:
        parts.append(format_value(c.params["value"]))
    return " ".join(p for p in parts if p != "")


def emit(netlist: Netlist) -> str:
    """Serialize deterministically: title, subcircuits, cards, .end."""
    lines = [f".title {netlist.title}".rstrip()]
    for sub in netlist.subcircuits:
        lines.append(f".subckt {sub.name} {' '.join(sub.ports)}")
        for c in sub.body.components:
            lines.append(_emit_component(c))
        lines.append(".ends")
    for c in netlist.components:
        lines.append(_emit_component(c))
    lines.append(".end")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Diagnostic:
    code: str
    subject: str
    message: str

    def __str__(self):
        return f"{self.code}({self.subject}): {self.message}"


def validate(netlist: Netlist) -> list[Diagnostic]:
    """Structural checks.  An empty list means the netlist is clean.

    Flags dangling nets (touched by one pin, no role label, not ground),
    floating components, pin-count violations, missing MOS geometry, and
    X cards whose local subcircuit arity does not match.
    """
    out: list[Diagnostic] = []
    counts = netlist.net_pin_count()
    for net, n in sorted(counts.items()):
        if n == 1 and net != GROUND_NET and net not in netlist.net_roles:
            out.append(Diagnostic("dangling_net", net,
                                  "net is touched by exactly one pin and "
                                  "carries no role label"))
    for c in netlist.components:
        expected = c.kind.pin_count
        if expected is not None and len(c.pins) != expected:
            out.append(Diagnostic("arity", c.name,
                                  f"{c.kind.value} device has {len(c.pins)} "
                                  f"pins, expected {expected}"))
        elif c.kind is DeviceKind.JUNCTION and len(c.pins) < 3:
            out.append(Diagnostic("arity", c.name,
                                  f"junction has {len(c.pins)} pins, "
                                  "expected at least 3"))
        if c.kind is DeviceKind.MOS:
            for p in ("W", "L"):
                if p not in c.params:
                    out.append(Diagnostic("missing_param", c.name,
                                          f"MOS device lacks {p}"))
        if c.kind is DeviceKind.SUBCIRCUIT:
            sub = netlist.subcircuit(c.model or "")
            if sub is None:
                out.append(Diagnostic("unknown_subcircuit", c.name,
                                      f"no local definition for "
                                      f"{c.model!r}"))
            elif len(c.pins) != len(sub.ports):
                out.append(Diagnostic("arity", c.name,
                                      f"instance has {len(c.pins)} nets but "
                                      f"{sub.name!r} has {len(sub.ports)} "
                                      "ports"))
    if len(netlist.components) > 1:
        shared = {n for n, k in counts.items() if k > 1}
        for c in netlist.components:
            if c.pins and not (set(c.pins) & shared):
                out.append(Diagnostic("floating_component", c.name,
                                      "component shares no net with the "
                                      "rest of the netlist"))
    return out


# ---------------------------------------------------------------------------
# rewrites


def apply_sizing(netlist: Netlist, assignment: Mapping[str, float]) -> Netlist:
    """Set device parameters from a {"M1.W": value, ...} assignment.

    Unknown paths and non-finite or non-positive values are rejected
    (voltage and current sources may be negative, geometry may not).
    """
    by_comp: dict[str, dict[str, float]] = {}
    for path, value in assignment.items():
        comp_name, sep, param = path.partition(".")
        if not sep:
            raise NetlistError(f"malformed parameter path {path!r}")
        by_comp.setdefault(comp_name, {})[param] = value

    new_comps: list[Component] = []
    names = {c.name for c in netlist.components}
    for missing in sorted(set(by_comp) - names):
        raise NetlistError(f"sizing refers to unknown component {missing!r}")
    signed_ok = (DeviceKind.VOLTAGE_SOURCE, DeviceKind.CURRENT_SOURCE)
    for c in netlist.components:
        updates = by_comp.get(c.name)
        if not updates:
            new_comps.append(c)
            continue
        for param, value in updates.items():
            if param not in c.params:
                raise NetlistError(
                    f"component {c.name!r} has no parameter {param!r}")
            if not math.isfinite(value):
                raise NetlistError(f"{c.name}.{param} set to non-finite "
                                   f"value {value!r}")
            if value <= 0 and c.kind not in signed_ok:
                raise NetlistError(f"{c.name}.{param} must be positive, "
                                   f"got {value!r}")
            if param == "nf" and value != int(value):
                raise NetlistError(f"{c.name}.nf must be an integer, "
                                   f"got {value!r}")
        new_comps.append(c.with_params(updates))
    return replace(netlist, components=tuple(new_comps))


def merge_nets(netlist: Netlist, a: str, b: str, survivor: str) -> Netlist:
    """Merge net `a` and net `b` into `survivor` (one of the two).

    Ground may take part in a merge but can never be renamed away.  Role
    labels are unioned with the survivor's own label taking precedence.
    """
    if survivor not in (a, b):
        raise NetlistError(f"survivor {survivor!r} must be {a!r} or {b!r}")
    loser = b if survivor == a else a
    if loser == GROUND_NET:
        raise NetlistError('net "0" is ground and cannot be merged away')
    nets = netlist.nets
    for net in (a, b):
        if net not in nets:
            raise NetlistError(f"net {net!r} does not exist")
    if a == b:
        return netlist
    new_comps = tuple(
        replace(c, pins=tuple(survivor if p == loser else p for p in c.pins))
        for c in netlist.components)
    roles = dict(netlist.net_roles)
    loser_role = roles.pop(loser, None)
    if loser_role is not None and survivor not in roles:
        roles[survivor] = loser_role
    return replace(netlist, components=new_comps, net_roles=roles)


# ---------------------------------------------------------------------------
# comparison

def _canon_components(n: Netlist):
    return sorted(((c.name, c.kind, c.pins, tuple(sorted(c.params.items())),
                    c.model) for c in n.components))


def structurally_equal(a: Netlist, b: Netlist) -> bool:
    """Equality up to comment text and component ordering.

    Pin order, names, models, and parameter values must all agree exactly.
    Net role labels travel in the sidecar and are not compared here.
    """
    if a.title != b.title:
        return False
    if _canon_components(a) != _canon_components(b):
        return False
    sa = {s.name: s for s in a.subcircuits}
    sb = {s.name: s for s in b.subcircuits}
    if set(sa) != set(sb):
        return False
    return all(sa[k].ports == sb[k].ports
               and structurally_equal(sa[k].body, sb[k].body) for k in sa)


def _incidence_signature(n: Netlist) -> dict[str, tuple]:
    """Map each net to the sorted (component, pin index) pairs touching it."""
    sig: dict[str, list] = {}
    for c in n.components:
        for i, p in enumerate(c.pins):
            sig.setdefault(p, []).append((c.name, i))
    return {net: tuple(sorted(v)) for net, v in sig.items()}


def equivalent_up_to_net_names(a: Netlist, b: Netlist) -> bool:
    """True when `b` is `a` with nets renamed (component names fixed).

    Because component names pin down the incidence structure, the only
    possible net bijection maps nets with identical (component, pin index)
    incidence onto each other; ground must map to ground.
    """
    sig_a = _incidence_signature(a)
    sig_b = _incidence_signature(b)
    if len(sig_a) != len(sig_b):
        return False
    by_sig = {v: k for k, v in sig_b.items()}
    if len(by_sig) != len(sig_b):  # degenerate: identical incidence
        return False
    mapping: dict[str, str] = {}
    for net, sig in sig_a.items():
        other = by_sig.get(sig)
        if other is None:
            return False
        mapping[net] = other
    if mapping.get(GROUND_NET, GROUND_NET) != GROUND_NET:
        return False
    comps_a = {c.name: c for c in a.components}
    comps_b = {c.name: c for c in b.components}
    if set(comps_a) != set(comps_b):
        return False
    for name, ca in comps_a.items():
        cb = comps_b[name]
        if ca.kind is not cb.kind or ca.params != cb.params \
                or ca.model != cb.model:
            return False
        if tuple(mapping[p] for p in ca.pins) != cb.pins:
            return False
    return True


# ---------------------------------------------------------------------------
# net-role sidecar files


def save_net_roles(netlist: Netlist, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"net_roles": dict(sorted(netlist.net_roles.items()))},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_net_roles(netlist: Netlist, path) -> Netlist:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    roles = data.get("net_roles")
    if not isinstance(roles, dict):
        raise NetlistError(f"{path}: missing net_roles object")
    return replace(netlist, net_roles=dict(roles))
