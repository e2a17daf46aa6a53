"""Compose stored circuit blocks into one flat design and strap benches on.

A multi-stage amplifier in the store is kept as reusable parts (bias
reference, gain stages, compensation network).  This module plans how the
parts' labelled pins join up, merges the pieces into a single flat netlist
with full name provenance, and wraps the result in a testbench deck ready
for evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .kg import CircuitEntity, TieGroup
from .netlist import (
    GROUND_NET,
    Component,
    DeviceKind,
    Netlist,
    Subcircuit,
    merge_nets,
    validate,
)
from .simbridge import DUT_NAME, SimulationDeck

__all__ = [
    "AssembledCircuit",
    "AssemblyError",
    "ConnectionPlan",
    "DEFAULT_WIRING",
    "Endpoint",
    "assemble",
    "attach_testbench",
    "plan_connections",
    "plan_from_dict",
    "plan_to_dict",
]


class AssemblyError(Exception):
    pass


# ---------------------------------------------------------------------------
# plan types


@dataclass(frozen=True)
class Endpoint:
    """One side of a binding: a part (by list index) and a pin role."""

    part: int
    role: str

    def __post_init__(self):
        if self.part < 0:
            raise AssemblyError("part index must be non-negative")
        if not self.role:
            raise AssemblyError("endpoint role must be non-empty")


@dataclass(frozen=True)
class ConnectionPlan:
    """Which part pins get joined and which become the outer boundary.

    `bindings` are explicit pairwise joins on the signal/bias path.  Supply
    pins are not listed there: every part index in `supply_parts` has its
    supply-role net merged onto one shared rail.  Ground is the global net
    and needs no entry at all.  `exposures` name the nets that survive as
    the assembled circuit's boundary, keyed by role.
    """

    bindings: tuple[tuple[Endpoint, Endpoint], ...] = ()
    exposures: Mapping[str, Endpoint] = field(default_factory=dict)
    supply_parts: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "bindings",
                           tuple((a, b) for a, b in self.bindings))
        object.__setattr__(self, "exposures", dict(self.exposures))
        object.__setattr__(self, "supply_parts", tuple(self.supply_parts))


@dataclass(frozen=True)
class AssembledCircuit:
    """A flat netlist stitched from parts, with provenance kept.

    `provenance` maps every component name back to the entity it came
    from; `exposures` maps boundary roles to net names in the flat
    netlist (ground is always present, mapped to net "0").
    """

    netlist: Netlist
    provenance: Mapping[str, str]
    tie_groups: tuple[TieGroup, ...]
    exposures: Mapping[str, str]
    parts: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "provenance", dict(self.provenance))
        object.__setattr__(self, "tie_groups", tuple(self.tie_groups))
        object.__setattr__(self, "exposures", dict(self.exposures))
        object.__setattr__(self, "parts", tuple(self.parts))


# ---------------------------------------------------------------------------
# planning

# Role-wiring table.  This is data, not code: which annotation marks a part
# as a bias generator or a compensation network, how signal stages are
# ordered, and which roles join between neighbours.  Swap in a different
# table to wire other topologies without touching the planner.
DEFAULT_WIRING: Mapping[str, object] = {
    # annotation (key, value) pairs that pull a part out of the signal path
    "classes": {
        "bias": ("function", "bias generation"),
        "compensation": ("function", "frequency compensation"),
    },
    # ordering of the "stage" annotation values along the signal path
    "stage_order": ("first", "second", "third", "fourth"),
    # roles joined between consecutive stages: previous output, next input
    "cascade": ("output", "input"),
    # the bias part's output drives every stage that exposes a bias pin
    "bias": ("output", "bias"),
    # the compensation network straddles the last inter-stage transition:
    # its input joins the second-to-last stage output, its output the last
    "compensation": ("input", "output"),
    # boundary roles taken from the first and the last stage
    "expose_first": ("input", "input+", "input-", "clock"),
    "expose_last": ("output", "output+", "output-"),
    "supply_role": "supply",
}


def _resolve_role(part: CircuitEntity, role: str) -> str:
    """The single net carrying `role` in a part, or a planning error."""
    nets = part.nets_with_role(role)
    if not nets:
        raise AssemblyError(
            f"part {part.entity_id!r} has no pin with role {role!r}")
    if len(nets) > 1:
        raise AssemblyError(
            f"part {part.entity_id!r} is ambiguous: nets "
            f"{', '.join(map(repr, nets))} all carry role {role!r}")
    return nets[0]


def _classify(parts: Sequence[CircuitEntity], wiring: Mapping):
    """Split part indices into (ordered stages, bias, compensation)."""
    classes: dict[str, list[int]] = {name: [] for name in wiring["classes"]}
    stages: list[int] = []
    for i, part in enumerate(parts):
        for name, (key, value) in wiring["classes"].items():
            if part.annotations.get(key) == value:
                classes[name].append(i)
                break
        else:
            stages.append(i)
    order = list(wiring["stage_order"])

    def stage_rank(i: int) -> tuple[int, int]:
        label = parts[i].annotations.get("stage", "")
        rank = order.index(label) if label in order else len(order)
        return (rank, i)

    stages.sort(key=stage_rank)
    for name, members in classes.items():
        if len(members) > 1:
            raise AssemblyError(
                f"more than one {name} part: "
                + ", ".join(parts[i].entity_id for i in members))
    return stages, classes


def plan_connections(parts: Sequence[CircuitEntity],
                     wiring: Mapping = DEFAULT_WIRING) -> ConnectionPlan:
    """Derive the binding list for a set of parts from the wiring table.

    Consecutive signal stages are chained output-to-input, a bias part
    feeds every stage with a bias pin, and a compensation part bridges
    the final inter-stage transition.  Every endpoint the plan mentions
    is checked to resolve to exactly one net up front.
    """
    if not parts:
        raise AssemblyError("cannot plan an empty part list")
    stages, classes = _classify(parts, wiring)
    if not stages:
        raise AssemblyError("no signal-path part among "
                            + ", ".join(p.entity_id for p in parts))
    bindings: list[tuple[Endpoint, Endpoint]] = []

    def bind(i: int, role_i: str, j: int, role_j: str):
        _resolve_role(parts[i], role_i)
        _resolve_role(parts[j], role_j)
        bindings.append((Endpoint(i, role_i), Endpoint(j, role_j)))

    out_role, in_role = wiring["cascade"]
    for prev, nxt in zip(stages, stages[1:]):
        bind(prev, out_role, nxt, in_role)

    if classes.get("bias"):
        bias = classes["bias"][0]
        src_role, dst_role = wiring["bias"]
        fed = [i for i in stages if parts[i].nets_with_role(dst_role)]
        if not fed:
            raise AssemblyError(
                f"bias part {parts[bias].entity_id!r} present but no stage "
                f"has a pin with role {dst_role!r}")
        for i in fed:
            bind(bias, src_role, i, dst_role)

    if classes.get("compensation"):
        comp = classes["compensation"][0]
        if len(stages) < 2:
            raise AssemblyError(
                f"compensation part {parts[comp].entity_id!r} needs at "
                "least two stages to bridge")
        comp_in, comp_out = wiring["compensation"]
        # stage side listed first: the first endpoint's net survives the
        # merge, keeping stage net names visible in the assembled circuit
        bind(stages[-2], out_role, comp, comp_in)
        bind(stages[-1], out_role, comp, comp_out)

    exposures: dict[str, Endpoint] = {}
    for role in wiring["expose_first"]:
        if parts[stages[0]].nets_with_role(role):
            _resolve_role(parts[stages[0]], role)
            exposures[role] = Endpoint(stages[0], role)
    for role in wiring["expose_last"]:
        if parts[stages[-1]].nets_with_role(role):
            _resolve_role(parts[stages[-1]], role)
            exposures[role] = Endpoint(stages[-1], role)

    supply_role = wiring["supply_role"]
    supply_parts = tuple(i for i, p in enumerate(parts)
                         if p.nets_with_role(supply_role))
    for i in supply_parts:
        _resolve_role(parts[i], supply_role)
    return ConnectionPlan(bindings=tuple(bindings), exposures=exposures,
                          supply_parts=supply_parts)


def plan_to_dict(plan: ConnectionPlan) -> dict:
    return {
        "schema": 1,
        "bindings": [[[a.part, a.role], [b.part, b.role]]
                     for a, b in plan.bindings],
        "exposures": {role: [e.part, e.role]
                      for role, e in plan.exposures.items()},
        "supply_parts": list(plan.supply_parts),
    }


def plan_from_dict(data: Mapping) -> ConnectionPlan:
    if data.get("schema") != 1:
        raise AssemblyError(f"unsupported plan schema {data.get('schema')!r}")
    try:
        bindings = tuple(
            (Endpoint(int(a[0]), a[1]), Endpoint(int(b[0]), b[1]))
            for a, b in data["bindings"])
        exposures = {role: Endpoint(int(e[0]), e[1])
                     for role, e in data["exposures"].items()}
        supply = tuple(int(i) for i in data["supply_parts"])
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise AssemblyError(f"malformed plan record: {exc}") from exc
    return ConnectionPlan(bindings=bindings, exposures=exposures,
                          supply_parts=supply)


# ---------------------------------------------------------------------------
# assembly


def _prefixed_net(prefix: str, net: str) -> str:
    return net if net == GROUND_NET else prefix + net


def assemble(parts: Sequence[CircuitEntity],
             plan: ConnectionPlan) -> AssembledCircuit:
    """Materialize a plan: one flat netlist with merged nets and provenance.

    Net names get a per-part prefix (s1_, s2_, ...) and component names a
    matching suffix (M1 -> M1_s1) so parts may repeat without collision;
    the suffix form keeps the leading device-type letter intact, which is
    what lets an emitted assembly be parsed back.  Ground is global and
    never renamed.  The result always passes structural validation or an
    error is raised.
    """
    if not parts:
        raise AssemblyError("cannot assemble an empty part list")
    for endpoint in [e for pair in plan.bindings for e in pair]:
        if endpoint.part >= len(parts):
            raise AssemblyError(f"binding references part {endpoint.part} "
                                f"but only {len(parts)} parts were given")
    for i in plan.supply_parts:
        if i >= len(parts):
            raise AssemblyError(f"supply list references part {i} but only "
                                f"{len(parts)} parts were given")

    components: list[Component] = []
    provenance: dict[str, str] = {}
    tie_groups: list[TieGroup] = []
    prefixes: list[str] = []
    for i, part in enumerate(parts, start=1):
        prefix = f"s{i}_"
        prefixes.append(prefix)
        if part.netlist.subcircuits:
            raise AssemblyError(
                f"part {part.entity_id!r} contains subcircuit definitions; "
                "only flat parts can be assembled")
        for c in part.netlist.components:
            renamed = replace(
                c, name=f"{c.name}_s{i}",
                pins=tuple(_prefixed_net(prefix, n) for n in c.pins))
            components.append(renamed)
            provenance[renamed.name] = part.entity_id
        for tg in part.local.tie_groups:
            tie_groups.append(replace(
                tg, components=tuple(f"{n}_s{i}" for n in tg.components)))

    title = "assembly of " + " + ".join(p.entity_id for p in parts)
    net = Netlist(title=title, components=tuple(components))

    # merged names chain through `alias` so later bindings can refer to a
    # net by any of its pre-merge names
    alias: dict[str, str] = {}

    def canon(name: str) -> str:
        while name in alias:
            name = alias[name]
        return name

    def join(net_a: str, net_b: str) -> None:
        nonlocal net
        a, b = canon(net_a), canon(net_b)
        if a == b:
            return
        if b == GROUND_NET:
            a, b = b, a
        net = merge_nets(net, a, b, survivor=a)
        alias[b] = a

    supply_role = "supply"
    rail: str | None = None
    for i in plan.supply_parts:
        n = _prefixed_net(prefixes[i],
                          _resolve_role(parts[i], supply_role))
        if rail is None:
            rail = n
        else:
            join(rail, n)

    for a, b in plan.bindings:
        na = _prefixed_net(prefixes[a.part],
                           _resolve_role(parts[a.part], a.role))
        nb = _prefixed_net(prefixes[b.part],
                           _resolve_role(parts[b.part], b.role))
        join(na, nb)

    exposures: dict[str, str] = {}
    for role, endpoint in plan.exposures.items():
        n = _prefixed_net(prefixes[endpoint.part],
                          _resolve_role(parts[endpoint.part], endpoint.role))
        exposures[role] = canon(n)
    if rail is not None:
        exposures[supply_role] = canon(rail)
    exposures["ground"] = GROUND_NET
    for role, n in exposures.items():
        if n != GROUND_NET:
            net = net.with_net_role(n, role)

    problems = validate(net)
    if problems:
        raise AssemblyError("assembled netlist fails validation: "
                            + "; ".join(str(p) for p in problems))
    return AssembledCircuit(
        netlist=net, provenance=provenance, tie_groups=tuple(tie_groups),
        exposures=exposures, parts=tuple(p.entity_id for p in parts))


# ---------------------------------------------------------------------------
# testbench attachment


def attach_testbench(dut: AssembledCircuit,
                     tb: CircuitEntity) -> SimulationDeck:
    """Wrap the assembled circuit in a bench as a self-contained deck.

    The circuit body becomes a local subcircuit named "dut" whose ports
    follow the bench's declared DUT port roles; the bench instantiates it
    against its own labelled nets.  Ground is the global net and is not
    passed as a port.
    """
    if tb.entity_class != "testbench":
        raise AssemblyError(f"entity {tb.entity_id!r} is not a testbench")
    missing = [r for r in tb.dut_ports
               if r != "ground" and r not in dut.exposures]
    if missing:
        raise AssemblyError(
            f"testbench {tb.entity_id!r} drives roles the assembled "
            f"circuit does not expose: {', '.join(missing)}")

    port_order = [r for r in tb.dut_ports if r != "ground"]
    ports = tuple(dut.exposures[r] for r in port_order)
    try:
        bench_nets = tuple(_resolve_role(tb, r) for r in port_order)
    except AssemblyError as exc:
        raise AssemblyError(f"testbench {tb.entity_id!r}: {exc}") from exc

    body = dut.netlist
    if body.subcircuit(DUT_NAME) is not None or any(
            c.kind is DeviceKind.SUBCIRCUIT for c in body.components):
        raise AssemblyError("assembled circuit already contains subcircuit "
                            "structure; cannot nest it as the DUT")
    instance = Component(name="XDUT", kind=DeviceKind.SUBCIRCUIT,
                         pins=bench_nets, model=DUT_NAME)
    deck_netlist = Netlist(
        title=tb.netlist.title,
        components=tb.netlist.components + (instance,),
        subcircuits=(Subcircuit(DUT_NAME, ports, body),),
        net_roles=tb.netlist.net_roles)

    measurements = tuple(m.replace(" ", "_") for m in tb.measures)
    slots = tuple(path for c in body.components for path in c.param_paths())
    port_roles = {n: role for role, n in dut.exposures.items()
                  if role != "ground"}
    return SimulationDeck(name=tb.entity_id, netlist=deck_netlist,
                          measurements=measurements, slots=slots,
                          port_roles=port_roles)
