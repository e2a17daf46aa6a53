"""In-memory circuit knowledge store with triplet retrieval and persistence.

Circuits are stored as entities carrying a netlist plus two annotation
layers: local annotations describe wiring roles and matched-device tie
groups inside one circuit, global annotations describe the circuit as a
whole ("input": "differential input pair", "gain": "high").  Global
annotations double as (subject, relation, object) triplets, which is what
`Store.query` matches against.

Object values are normalized (lowercase, punctuation and extra whitespace
folded away) so "Strong-Arm  Latch" and "strong arm latch" land on the
same annotation node, and equal values share one node in the exported
graph statements.
"""

from __future__ import annotations

import json
import re
import string
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

from .netlist import Netlist, NetlistError, emit, parse

SCHEMA_VERSION = 1

#: Functional roles a net may carry inside an entity.
ROLE_VOCABULARY = frozenset({
    "input", "input+", "input-",
    "output", "output+", "output-",
    "bias", "supply", "ground", "clock",
})

#: Entity classes the assembly and design layers understand.
ENTITY_CLASSES = frozenset({"amplifier", "comparator", "part", "testbench"})

TIE_PARAMS = frozenset({"W", "L", "nf", "value"})

_PUNCT_TABLE = str.maketrans({c: " " for c in string.punctuation})
_ID_RE = re.compile(r"^[A-Za-z0-9_\-]+$")


class KGError(Exception):
    """Raised for malformed entities, stores, or store files."""


def normalize_text(value: str) -> str:
    """Fold case, punctuation, and whitespace for annotation matching."""
    return re.sub(r"\s+", " ", value.translate(_PUNCT_TABLE)).strip().lower()


@dataclass(frozen=True)
class Triplet:
    """(subject, relation, object); a None subject is a query wildcard."""

    subject: str | None
    relation: str
    obj: str

    def __str__(self):
        return f"<{self.subject or '_'}, {self.relation}, {self.obj}>"


@dataclass(frozen=True)
class TieGroup:
    """Devices that must share parameter values (matched layout pairs).

    `mode` is "equal" (all share the leader's value) or "ratio" (follower i
    takes leader * factors[i]).  The first listed component is the leader.
    """

    components: tuple[str, ...]
    params: tuple[str, ...]
    mode: str = "equal"
    factors: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "params", tuple(self.params))
        object.__setattr__(self, "factors", tuple(self.factors))
        if len(self.components) < 2:
            raise KGError("tie group needs at least two components")
        if len(set(self.components)) != len(self.components):
            raise KGError("tie group lists a component twice")
        if not self.params:
            raise KGError("tie group ties no parameters")
        for p in self.params:
            if p not in TIE_PARAMS:
                raise KGError(f"cannot tie unknown parameter {p!r}")
        if self.mode == "equal":
            if self.factors:
                raise KGError("equal-mode tie group takes no factors")
        elif self.mode == "ratio":
            if len(self.factors) != len(self.components) - 1:
                raise KGError("ratio tie group needs one factor per follower")
            if any(f <= 0 for f in self.factors):
                raise KGError("ratio factors must be positive")
        else:
            raise KGError(f"unknown tie mode {self.mode!r}")


@dataclass(frozen=True)
class LocalAnnotation:
    """Per-net roles and matched-device groups for one circuit."""

    pin_functions: Mapping[str, str] = field(default_factory=dict)
    tie_groups: tuple[TieGroup, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "pin_functions", dict(self.pin_functions))
        object.__setattr__(self, "tie_groups", tuple(self.tie_groups))
        for net, role in self.pin_functions.items():
            if role not in ROLE_VOCABULARY:
                raise KGError(f"unknown pin function {role!r} on net {net!r}")


@dataclass(frozen=True)
class CircuitEntity:
    """A stored circuit: netlist + annotations, optionally a testbench.

    Testbench entities declare which metrics they measure and which DUT
    port roles they expect to drive.
    """

    entity_id: str
    entity_class: str
    netlist: Netlist
    local: LocalAnnotation = field(default_factory=LocalAnnotation)
    annotations: Mapping[str, str] = field(default_factory=dict)
    measures: tuple[str, ...] = ()
    dut_ports: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "annotations", dict(self.annotations))
        object.__setattr__(self, "measures",
                           tuple(normalize_text(m) for m in self.measures))
        object.__setattr__(self, "dut_ports", tuple(self.dut_ports))
        if not _ID_RE.match(self.entity_id):
            raise KGError(f"entity id {self.entity_id!r} must be of the form "
                          "[A-Za-z0-9_-]+")
        if self.entity_class not in ENTITY_CLASSES:
            raise KGError(f"unknown entity class {self.entity_class!r}")
        nets = self.netlist.nets
        for net in self.local.pin_functions:
            if net not in nets:
                raise KGError(f"{self.entity_id}: pin function on unknown "
                              f"net {net!r}")
        names = {c.name for c in self.netlist.components}
        for tg in self.local.tie_groups:
            for comp in tg.components:
                if comp not in names:
                    raise KGError(f"{self.entity_id}: tie group references "
                                  f"unknown component {comp!r}")
                for p in tg.params:
                    if p not in self.netlist.component(comp).params:
                        raise KGError(
                            f"{self.entity_id}: component {comp!r} has no "
                            f"parameter {p!r} to tie")
        if self.entity_class == "testbench" and not self.measures:
            raise KGError(f"{self.entity_id}: testbench declares no metrics")
        # carry pin functions onto the netlist role labels
        roles = dict(self.netlist.net_roles)
        roles.update(self.local.pin_functions)
        object.__setattr__(self, "netlist",
                           replace(self.netlist, net_roles=roles))

    def triplets(self) -> list[Triplet]:
        """The entity's global annotations as concrete triplets."""
        out = [Triplet(self.entity_id, "class", self.entity_class)]
        for key in sorted(self.annotations):
            out.append(Triplet(self.entity_id, key, self.annotations[key]))
        return out

    def nets_with_role(self, role: str) -> list[str]:
        return sorted(n for n, r in self.local.pin_functions.items()
                      if r == role)


class QueryHit(NamedTuple):
    entity: CircuitEntity
    matched: int


class TestbenchSelection(NamedTuple):
    entities: list[CircuitEntity]
    missing: list[str]


class Store:
    """Container of circuit entities with triplet-pattern retrieval."""

    def __init__(self, entities: Iterable[CircuitEntity] = ()):
        self._entities: dict[str, CircuitEntity] = {}
        for e in entities:
            self.add_circuit(e)

    def __len__(self):
        return len(self._entities)

    def __contains__(self, entity_id: str):
        return entity_id in self._entities

    def get(self, entity_id: str) -> CircuitEntity:
        try:
            return self._entities[entity_id]
        except KeyError:
            raise KGError(f"no entity {entity_id!r} in store") from None

    def entities(self) -> list[CircuitEntity]:
        return [self._entities[k] for k in sorted(self._entities)]

    def add_circuit(self, entity: CircuitEntity) -> None:
        if entity.entity_id in self._entities:
            raise KGError(f"duplicate entity id {entity.entity_id!r}")
        self._entities[entity.entity_id] = entity

    # -- retrieval ---------------------------------------------------------

    def _normalized_triplets(self, entity: CircuitEntity) -> set[tuple]:
        return {(normalize_text(t.relation), normalize_text(t.obj))
                for t in entity.triplets()}

    def query(self, patterns: Sequence[Triplet]) -> list[QueryHit]:
        """Rank entities by how many patterns they satisfy.

        Patterns use a wildcard subject; relation and object match exactly
        after normalization.  Entities matching no pattern are dropped, ties
        break by ascending entity id.
        """
        wanted = [(normalize_text(p.relation), normalize_text(p.obj))
                  for p in patterns]
        hits = []
        for entity_id in sorted(self._entities):
            entity = self._entities[entity_id]
            have = self._normalized_triplets(entity)
            matched = sum(1 for w in wanted if w in have)
            if matched > 0:
                hits.append(QueryHit(entity, matched))
        hits.sort(key=lambda h: (-h.matched, h.entity.entity_id))
        return hits

    def get_testbenches(self, metrics: Sequence[str]) -> TestbenchSelection:
        """Select testbench entities covering the requested metrics.

        Returns the matching benches (ascending id) together with the
        metrics nothing in the store can measure.
        """
        wanted = [normalize_text(m) for m in metrics]
        selected = []
        covered: set[str] = set()
        for entity in self.entities():
            if entity.entity_class != "testbench":
                continue
            overlap = set(entity.measures) & set(wanted)
            if overlap:
                selected.append(entity)
                covered |= overlap
        missing = [m for m in wanted if m not in covered]
        return TestbenchSelection(selected, missing)

    def distinct_objects(self) -> dict[str, list[tuple[str, str]]]:
        """Normalized object value -> sorted (subject, relation) pairs.

        Entities annotated with equal values share a single object node.
        """
        nodes: dict[str, set[tuple[str, str]]] = {}
        for entity in self.entities():
            for t in entity.triplets():
                key = normalize_text(t.obj)
                nodes.setdefault(key, set()).add(
                    (t.subject, normalize_text(t.relation)))
        return {k: sorted(v) for k, v in sorted(nodes.items())}

    # -- persistence -------------------------------------------------------

    def save(self, directory) -> None:
        """Write an index file plus one record file per entity."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        ids = sorted(self._entities)
        for entity_id in ids:
            record = _entity_to_record(self._entities[entity_id])
            with open(directory / f"{entity_id}.json", "w",
                      encoding="utf-8") as fh:
                json.dump(record, fh, indent=2, sort_keys=True)
                fh.write("\n")
        with open(directory / "index.json", "w", encoding="utf-8") as fh:
            json.dump({"schema": SCHEMA_VERSION, "entities": ids},
                      fh, indent=2)
            fh.write("\n")

    @classmethod
    def load(cls, directory) -> "Store":
        """Read a store directory; any malformed file aborts the whole load."""
        directory = Path(directory)
        index_path = directory / "index.json"
        try:
            with open(index_path, "r", encoding="utf-8") as fh:
                index = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise KGError(f"cannot read store index {index_path}: {exc}") \
                from None
        if not isinstance(index, dict) or index.get("schema") != SCHEMA_VERSION:
            raise KGError(f"{index_path}: unsupported store schema "
                          f"{index.get('schema')!r}"
                          if isinstance(index, dict)
                          else f"{index_path}: index is not an object")
        loaded = []
        for entity_id in index.get("entities", []):
            record_path = directory / f"{entity_id}.json"
            try:
                with open(record_path, "r", encoding="utf-8") as fh:
                    record = json.load(fh)
                loaded.append(_entity_from_record(record))
            except (OSError, json.JSONDecodeError, KeyError, TypeError,
                    NetlistError) as exc:
                raise KGError(f"corrupt entity record {record_path}: {exc}") \
                    from None
        store = cls()
        for entity in loaded:
            store.add_circuit(entity)
        return store

    # -- interop -----------------------------------------------------------

    def export_statements(self) -> list[str]:
        """Graph CREATE statements (circuit nodes, shared value nodes, edges)."""
        lines = []
        for entity in self.entities():
            lines.append(
                f'CREATE (c_{entity.entity_id}:Circuit '
                f'{{id: "{entity.entity_id}", '
                f'class: "{entity.entity_class}"}})')
        objects = self.distinct_objects()
        node_names = {}
        for i, value in enumerate(objects):
            node_names[value] = f"v_{i}"
            lines.append(f'CREATE (v_{i}:Annotation {{value: "{value}"}})')
        for value, edges in objects.items():
            for subject, relation in edges:
                rel = re.sub(r"[^A-Z0-9_]", "_", relation.upper())
                lines.append(f'CREATE (c_{subject})-[:{rel}]->'
                             f'({node_names[value]})')
        return lines


def _entity_to_record(entity: CircuitEntity) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "id": entity.entity_id,
        "class": entity.entity_class,
        "netlist": emit(entity.netlist),
        "pin_functions": dict(sorted(entity.local.pin_functions.items())),
        "tie_groups": [
            {"components": list(tg.components), "params": list(tg.params),
             "mode": tg.mode, "factors": list(tg.factors)}
            for tg in entity.local.tie_groups],
        "annotations": dict(sorted(entity.annotations.items())),
        "measures": list(entity.measures),
        "dut_ports": list(entity.dut_ports),
    }


def _entity_from_record(record: dict) -> CircuitEntity:
    if record.get("schema") != SCHEMA_VERSION:
        raise KeyError(f"unsupported entity schema {record.get('schema')!r}")
    local = LocalAnnotation(
        pin_functions=record["pin_functions"],
        tie_groups=tuple(
            TieGroup(components=tuple(tg["components"]),
                     params=tuple(tg["params"]),
                     mode=tg["mode"],
                     factors=tuple(tg.get("factors", ())))
            for tg in record["tie_groups"]),
    )
    return CircuitEntity(
        entity_id=record["id"],
        entity_class=record["class"],
        netlist=parse(record["netlist"]),
        local=local,
        annotations=record["annotations"],
        measures=tuple(record.get("measures", ())),
        dut_ports=tuple(record.get("dut_ports", ())),
    )
