"""Wire tracing: from a binarized schematic raster to a netlist.

Pipeline: threshold the raster, collect the wire pixels each labeled
bounding box touches, group contacts by wire connectivity, then sort the
groups into four cases — isolated pin, plain two-pin connection, an odd
cluster (a drawn junction dot is missing; the schematic is flagged), or an
even cluster of four or more produced by wires crossing without a dot.
Crossings are located with a box-filter convolution, split, and rerouted
so that opposite arms connect through.  Drawn junction dots arrive as
boxes of kind JUNCTION and union their incident groups into one net.

Pixels are (x, y) pairs with x as column; angles are degrees with 0 to the
right and 90 up (image rows grow downward).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import ndimage
from scipy.signal import convolve2d

from ..netlist import Component, DeviceKind, Netlist
from .raster import WireMask, binarize

__all__ = [
    "GroupCase",
    "JunctionRecord",
    "LabeledBox",
    "Orientation",
    "PinContact",
    "TraceConfig",
    "TraceError",
    "TraceGroup",
    "TraceResult",
    "boxes_from_file",
    "boxes_to_file",
    "classify_group",
    "group_components",
    "order_pins",
    "report_to_dict",
    "resolve_intersection",
    "trace_to_netlist",
]


class TraceError(Exception):
    pass


class PairingError(TraceError):
    """No consistent opposite-arm pairing at a crossing."""


class Orientation(Enum):
    """Rotation in degrees, optionally mirrored about the vertical axis.

    Mirroring is applied after rotation, in the image frame.
    """

    R0 = "0"
    R90 = "90"
    R180 = "180"
    R270 = "270"
    M0 = "m0"
    M90 = "m90"
    M180 = "m180"
    M270 = "m270"

    @property
    def mirrored(self) -> bool:
        return self.value.startswith("m")

    @property
    def rotation(self) -> int:
        return int(self.value.lstrip("m"))


def to_local_angle(orientation: Orientation, global_angle: float) -> float:
    """Undo a box's orientation: world-frame angle to symbol-frame angle."""
    a = global_angle % 360.0
    if orientation.mirrored:
        a = (180.0 - a) % 360.0
    return (a - orientation.rotation) % 360.0


def to_global_angle(orientation: Orientation, local_angle: float) -> float:
    a = (local_angle + orientation.rotation) % 360.0
    if orientation.mirrored:
        a = (180.0 - a) % 360.0
    return a


@dataclass(frozen=True)
class LabeledBox:
    """A pre-labeled component bounding box on the raster.

    `rect` is (x0, y0, x1, y1), inclusive pixel bounds.  `params` and
    `model` ride along so the recovered netlist can carry device values.
    """

    id: str
    kind: DeviceKind
    orientation: Orientation
    rect: tuple[int, int, int, int]
    model: str | None = None
    params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "rect", tuple(int(v) for v in self.rect))
        object.__setattr__(self, "params", dict(self.params))
        x0, y0, x1, y1 = self.rect
        if x1 < x0 or y1 < y0:
            raise TraceError(f"box {self.id!r} rect {self.rect} is inverted")
        if not self.id:
            raise TraceError("box id must be non-empty")

    @property
    def center(self) -> tuple[float, float]:
        x0, y0, x1, y1 = self.rect
        return ((x0 + x1) / 2.0, (y0 + y1) / 2.0)


@dataclass(frozen=True)
class PinContact:
    """A wire pixel on a box boundary, with its angle from the box center."""

    box: str
    pixel: tuple[int, int]
    angle: float

    def __post_init__(self):
        object.__setattr__(self, "pixel",
                           (int(self.pixel[0]), int(self.pixel[1])))


class GroupCase(Enum):
    SINGLETON = "singleton"
    PAIR = "pair"
    ODD_EXCEPTION = "odd_exception"
    EVEN_CROSSING = "even_crossing"


@dataclass(frozen=True)
class TraceGroup:
    """Contacts mutually reachable over one set of wire pixels.

    Fresh groups are single connected blobs.  Once a crossing has been
    cut out of a group, its pieces stay associated through `links`: pairs
    of wire pixels rerouted as directly connected when the crossing was
    deleted.
    """

    contacts: tuple[PinContact, ...]
    pixels: frozenset
    links: tuple[tuple[tuple[int, int], tuple[int, int]], ...] = ()

    def __post_init__(self):
        object.__setattr__(
            self, "contacts",
            tuple(sorted(self.contacts, key=lambda c: (c.box, c.pixel))))
        object.__setattr__(self, "pixels", frozenset(self.pixels))
        object.__setattr__(
            self, "links",
            tuple(sorted((min(a, b), max(a, b)) for a, b in self.links)))


@dataclass(frozen=True)
class JunctionRecord:
    """One resolved wire crossing."""

    pixel: tuple[int, int]
    arm_angles: tuple[float, ...]
    multiple_maxima: bool
    pair_pixels: tuple[tuple[int, int], ...] = ()


@dataclass(frozen=True)
class TraceConfig:
    threshold: int = 128
    kernel: int = 5
    angle_tolerance: float = 15.0
    eight_neighbor: bool = False
    title: str = "traced schematic"

    def __post_init__(self):
        if self.kernel < 3 or self.kernel % 2 == 0:
            raise TraceError("kernel must be an odd integer >= 3")
        if not 0 < self.angle_tolerance < 90:
            raise TraceError("angle tolerance must be in (0, 90) degrees")


@dataclass(frozen=True)
class TraceResult:
    nets: tuple[frozenset, ...]
    junctions: tuple[Component, ...]
    junction_records: tuple[JunctionRecord, ...]
    exceptions: tuple[tuple[str, tuple[str, ...]], ...]

    @property
    def clean(self) -> bool:
        return not self.exceptions


# ---------------------------------------------------------------------------
# grouping


def _structure(eight_neighbor: bool) -> np.ndarray:
    if eight_neighbor:
        return np.ones((3, 3), dtype=bool)
    return np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


def _ring_pixels(rect) -> list[tuple[int, int]]:
    x0, y0, x1, y1 = rect
    ring = [(x, y0) for x in range(x0, x1 + 1)]
    ring += [(x, y1) for x in range(x0, x1 + 1)] if y1 > y0 else []
    ring += [(x0, y) for y in range(y0 + 1, y1)]
    ring += [(x1, y) for y in range(y0 + 1, y1)] if x1 > x0 else []
    return ring


def _contact_angle(box: LabeledBox, pixel: tuple[int, int]) -> float:
    cx, cy = box.center
    return math.degrees(math.atan2(cy - pixel[1], pixel[0] - cx)) % 360.0


def _box_contacts(mask: WireMask, box: LabeledBox) -> list[PinContact]:
    """Wire pixels on the box ring, with adjacent runs collapsed to one."""
    hits = [(x, y) for x, y in _ring_pixels(box.rect)
            if 0 <= x < mask.width and 0 <= y < mask.height
            and mask.bits[y, x]]
    if not hits:
        return []
    hit_set = set(hits)
    runs: list[list[tuple[int, int]]] = []
    seen: set[tuple[int, int]] = set()
    for px in sorted(hits):
        if px in seen:
            continue
        stack, run = [px], []
        seen.add(px)
        while stack:
            x, y = stack.pop()
            run.append((x, y))
            for nx, ny in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1),
                           (x + 1, y + 1), (x - 1, y - 1),
                           (x + 1, y - 1), (x - 1, y + 1)):
                if (nx, ny) in hit_set and (nx, ny) not in seen:
                    seen.add((nx, ny))
                    stack.append((nx, ny))
        runs.append(sorted(run))
    out = []
    for run in runs:
        rep = run[len(run) // 2]
        out.append(PinContact(box.id, rep, _contact_angle(box, rep)))
    return sorted(out, key=lambda c: c.pixel)


def _rects_overlap(a, b) -> bool:
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    return not (ax1 < bx0 or bx1 < ax0 or ay1 < by0 or by1 < ay0)


def group_components(mask: WireMask, boxes: Sequence[LabeledBox],
                     eight_neighbor: bool = False) -> list[TraceGroup]:
    """Connected-component grouping of box contacts over wire pixels.

    Every returned group owns its traversed pixel set; wire blobs touching
    no box are in no group.
    """
    for i, a in enumerate(boxes):
        for b in boxes[i + 1:]:
            if _rects_overlap(a.rect, b.rect):
                raise TraceError(f"boxes {a.id!r} and {b.id!r} overlap")
    labels, _ = ndimage.label(mask.bits,
                              structure=_structure(eight_neighbor))
    buckets: dict[int, list[PinContact]] = {}
    for box in boxes:
        for contact in _box_contacts(mask, box):
            x, y = contact.pixel
            buckets.setdefault(int(labels[y, x]), []).append(contact)
    groups = []
    for label, contacts in sorted(buckets.items()):
        ys, xs = np.nonzero(labels == label)
        pixels = frozenset(zip(xs.tolist(), ys.tolist()))
        groups.append(TraceGroup(tuple(contacts), pixels))
    return sorted(groups,
                  key=lambda g: (g.contacts[0].box, g.contacts[0].pixel))


def classify_group(group: TraceGroup) -> GroupCase:
    n = len(group.contacts)
    if n <= 1:
        return GroupCase.SINGLETON
    if n == 2:
        return GroupCase.PAIR
    if n % 2 == 1:
        return GroupCase.ODD_EXCEPTION
    return GroupCase.EVEN_CROSSING


# ---------------------------------------------------------------------------
# crossing resolution


def _arm_direction(pixels: set, start: tuple[int, int],
                   depth: int) -> float:
    """Direction of travel into an arm from its cut end, in degrees."""
    frontier = [start]
    dist = {start: 0}
    far = start
    while frontier:
        nxt = []
        for x, y in frontier:
            for nb in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
                if nb in pixels and nb not in dist:
                    dist[nb] = dist[(x, y)] + 1
                    if dist[nb] <= depth:
                        nxt.append(nb)
                    if dist[nb] > dist[far] or (dist[nb] == dist[far]
                                                and nb < far):
                        far = nb
        frontier = nxt
    dx = far[0] - start[0]
    dy_up = start[1] - far[1]
    if dx == 0 and dy_up == 0:
        return 0.0
    return math.degrees(math.atan2(dy_up, dx)) % 360.0


def _circular_diff(a: float, b: float) -> float:
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


def resolve_intersection(mask: WireMask, group: TraceGroup,
                         kernel: int = 5, angle_tolerance: float = 15.0,
                         ) -> tuple[JunctionRecord, list[TraceGroup]]:
    """Cut one wire crossing out of an even contact group.

    The crossing is the box-filter argmax over the group's own pixels
    (first maximum in row-major order; ties are recorded).  A kernel-sized
    square is deleted there, and the wire stubs left on the square's rim
    are paired by opposite entry direction: each pair is rerouted as a
    direct connection.  Pairing looks only at the rim, never at global
    connectivity, so schematics whose crossings chain many wires into one
    blob still come apart one cut at a time; pieces held together by
    earlier reroutes travel in the group's link list.
    """
    if classify_group(group) is not GroupCase.EVEN_CROSSING:
        raise TraceError("only even groups of four or more can be resolved")
    xs = [p[0] for p in group.pixels]
    ys = [p[1] for p in group.pixels]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    sub = np.zeros((y1 - y0 + 1, x1 - x0 + 1), dtype=np.float64)
    for x, y in group.pixels:
        sub[y - y0, x - x0] = 1.0
    scores = convolve2d(sub, np.ones((kernel, kernel)), mode="same")
    scores[sub == 0] = -1.0  # the junction must sit on a wire pixel
    best = scores.max()
    flat = int(np.argmax(scores))  # row-major first maximum
    jy, jx = np.unravel_index(flat, scores.shape)
    multiple = int((scores == best).sum()) > 1
    junction = (int(jx) + x0, int(jy) + y0)

    half = kernel // 2
    square = {p for p in group.pixels
              if abs(p[0] - junction[0]) <= half
              and abs(p[1] - junction[1]) <= half}
    remaining = set(group.pixels) - square
    contact_pixels = {c.pixel for c in group.contacts}
    if contact_pixels & square:
        raise PairingError(
            f"crossing at {junction}: cut square reaches a component "
            "contact")
    for a, b in group.links:
        if a not in remaining or b not in remaining:
            raise PairingError(
                f"crossing at {junction}: cut square overlaps an earlier "
                "reroute")

    edge = set()
    for sx, sy in square:
        for nb in ((sx + 1, sy), (sx - 1, sy), (sx, sy + 1), (sx, sy - 1)):
            if nb in remaining:
                edge.add(nb)
    entries = []
    for stub in _collapse_stubs(edge):
        ordered = sorted(stub)
        rep = ordered[len(ordered) // 2]
        angle = _arm_direction(remaining, rep, kernel + 2)
        entries.append((angle, rep))
    entries.sort()

    pairs: list[tuple[tuple[int, int], tuple[int, int]]] = []
    used = [False] * len(entries)
    for i, (angle, rep) in enumerate(entries):
        if used[i]:
            continue
        candidates = [j for j in range(len(entries))
                      if j != i and not used[j]
                      and _circular_diff(angle, entries[j][0] - 180.0)
                      <= angle_tolerance]
        if len(candidates) != 1:
            raise PairingError(
                f"crossing at {junction}: arm at {angle:.1f} deg has "
                f"{len(candidates)} opposite arms within "
                f"{angle_tolerance} deg")
        j = candidates[0]
        used[i] = used[j] = True
        pairs.append((rep, entries[j][1]))

    # regroup: pixel components plus every reroute, old and new
    comps = _split_arms(remaining)
    comp_of: dict[tuple[int, int], int] = {}
    for ci, comp in enumerate(comps):
        for p in comp:
            comp_of[p] = ci
    uf = _UnionFind()
    for ci in range(len(comps)):
        uf.find(ci)
    all_links = list(group.links) + pairs
    for a, b in all_links:
        uf.union(comp_of[a], comp_of[b])
    cls_pixels: dict[int, set] = {}
    for ci, comp in enumerate(comps):
        cls_pixels.setdefault(uf.find(ci), set()).update(comp)
    cls_contacts: dict[int, list] = {root: [] for root in cls_pixels}
    for c in group.contacts:
        cls_contacts[uf.find(comp_of[c.pixel])].append(c)
    cls_links: dict[int, list] = {root: [] for root in cls_pixels}
    for a, b in all_links:
        cls_links[uf.find(comp_of[a])].append((a, b))

    new_groups = [TraceGroup(contacts=tuple(cls_contacts[root]),
                             pixels=frozenset(cls_pixels[root]),
                             links=tuple(cls_links[root]))
                  for root in cls_pixels]
    new_groups.sort(key=lambda g: (0, g.contacts[0].box, g.contacts[0].pixel)
                    if g.contacts else (1, min(g.pixels), (0, 0)))

    record = JunctionRecord(
        pixel=junction,
        arm_angles=tuple(round(a, 3) for a, _ in entries),
        multiple_maxima=multiple,
        pair_pixels=tuple(min(pair) for pair in pairs))
    return record, new_groups


def _collapse_stubs(edge: set) -> list[set]:
    """Runs of rim pixels, one per wire entering the deleted square."""
    out = []
    left = set(edge)
    while left:
        seed = min(left)
        run = {seed}
        stack = [seed]
        left.discard(seed)
        while stack:
            x, y = stack.pop()
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    nb = (x + dx, y + dy)
                    if nb in left:
                        left.discard(nb)
                        run.add(nb)
                        stack.append(nb)
        out.append(run)
    return out


def _split_arms(pixels: set) -> list[set]:
    out = []
    left = set(pixels)
    while left:
        seed = next(iter(left))
        stack = [seed]
        comp = {seed}
        left.discard(seed)
        while stack:
            x, y = stack.pop()
            for nb in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
                if nb in left:
                    left.discard(nb)
                    comp.add(nb)
                    stack.append(nb)
        out.append(comp)
    return out


# ---------------------------------------------------------------------------
# pin ordering

# Symbol-frame pin directions.  MOS: drain up, gate left, source down,
# body right; two-terminal devices run top-to-bottom (first named pin up).
_MOS_ORDER = ("d", "g", "s", "b")
_MOS_SECTOR_TO_PIN = {1: "d", 2: "g", 3: "s", 0: "b"}

_TWO_PIN_KINDS = {DeviceKind.RESISTOR, DeviceKind.CAPACITOR,
                  DeviceKind.CURRENT_SOURCE, DeviceKind.VOLTAGE_SOURCE}


def _sector(local_angle: float) -> int:
    """Quadrant index: 0 right, 1 top, 2 left, 3 bottom."""
    return int(((local_angle + 45.0) % 360.0) // 90.0)


def order_pins(box: LabeledBox,
               contacts: Sequence[PinContact]) -> list[PinContact]:
    """Assign contacts to the kind's named pins by entry-angle sector.

    Returns contacts in pin order (MOS: drain, gate, source, body).  For
    two-terminal devices any assignment is electrically valid, so ties
    break deterministically by angle from the top, then pixel.
    """
    assigned = assign_pins(box, contacts)
    missing = [pin for pin, c in assigned.items() if c is None]
    if missing:
        raise TraceError(f"box {box.id!r}: no contact in sector of pin(s) "
                         + ", ".join(missing))
    return [assigned[pin] for pin in _pin_names(box.kind)]


def _pin_names(kind: DeviceKind) -> tuple[str, ...]:
    if kind is DeviceKind.MOS:
        return _MOS_ORDER
    if kind in _TWO_PIN_KINDS:
        return ("a", "b")
    raise TraceError(f"no pin-order table for device kind {kind.value!r}")


def assign_pins(box: LabeledBox, contacts: Sequence[PinContact]
                ) -> dict[str, PinContact | None]:
    """Sector assignment allowing missing pins (mapped to None)."""
    names = _pin_names(box.kind)
    if len(contacts) > len(names):
        raise TraceError(f"box {box.id!r} has {len(contacts)} contacts but "
                         f"kind {box.kind.value!r} has {len(names)} pins")
    out: dict[str, PinContact | None] = {p: None for p in names}
    if box.kind is DeviceKind.MOS:
        for c in contacts:
            pin = _MOS_SECTOR_TO_PIN[_sector(
                to_local_angle(box.orientation, c.angle))]
            if out[pin] is not None:
                raise TraceError(f"box {box.id!r}: contacts at {c.pixel} "
                                 f"and {out[pin].pixel} fall in the same "
                                 f"sector ({pin})")
            out[pin] = c
        return out
    # two-terminal: order by distance clockwise from straight up
    ranked = sorted(contacts, key=lambda c: (
        (to_local_angle(box.orientation, c.angle) - 90.0) % 360.0, c.pixel))
    for pin, c in zip(names, ranked):
        out[pin] = c
    return out


# ---------------------------------------------------------------------------
# end-to-end tracing


class _UnionFind:
    def __init__(self):
        self.parent: dict = {}

    def find(self, a):
        self.parent.setdefault(a, a)
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def trace_to_netlist(image: np.ndarray, boxes: Sequence[LabeledBox],
                     config: TraceConfig = TraceConfig(),
                     ) -> tuple[Netlist, TraceResult]:
    """Full trace: raster plus boxes in, netlist plus trace report out.

    Junction-dot boxes union their incident groups into one net and are
    dropped from the netlist.  Odd groups and unresolvable crossings do
    not raise; they land in the result's exception list and the affected
    contacts yield no connection.
    """
    mask = binarize(image, config.threshold, boxes)
    groups = group_components(mask, boxes, config.eight_neighbor)

    final: list[TraceGroup] = []
    records: list[JunctionRecord] = []
    exceptions: list[tuple[str, tuple[str, ...]]] = []
    queue = list(groups)
    guard = 0
    while queue:
        guard += 1
        if guard > 10000:
            raise TraceError("crossing resolution did not terminate")
        g = queue.pop(0)
        case = classify_group(g)
        if case in (GroupCase.SINGLETON, GroupCase.PAIR):
            final.append(g)
        elif case is GroupCase.ODD_EXCEPTION:
            exceptions.append((
                f"odd group of {len(g.contacts)} contacts; a junction dot "
                "is likely missing", tuple(sorted({c.box
                                                   for c in g.contacts}))))
        else:
            try:
                record, subgroups = resolve_intersection(
                    mask, g, config.kernel, config.angle_tolerance)
            except PairingError as exc:
                exceptions.append((str(exc),
                                   tuple(sorted({c.box
                                                 for c in g.contacts}))))
                continue
            records.append(record)
            queue.extend(subgroups)

    # union groups that meet at a junction-dot box
    junction_ids = {b.id for b in boxes if b.kind is DeviceKind.JUNCTION}
    uf = _UnionFind()
    for idx in range(len(final)):
        uf.find(idx)
    by_junction: dict[str, list[int]] = {}
    for idx, g in enumerate(final):
        for c in g.contacts:
            if c.box in junction_ids:
                by_junction.setdefault(c.box, []).append(idx)
    for members in by_junction.values():
        for other in members[1:]:
            uf.union(members[0], other)
    merged: dict[int, list[TraceGroup]] = {}
    for idx, g in enumerate(final):
        merged.setdefault(uf.find(idx), []).append(g)
    classes = [gs for gs in merged.values()
               if any(g.contacts for g in gs)]
    classes.sort(key=lambda gs: min((c.box, c.pixel)
                                    for g in gs for c in g.contacts))
    nets = [frozenset(c for g in gs for c in g.contacts) for gs in classes]

    contact_net: dict[PinContact, str] = {}
    pixel_net: dict[tuple[int, int], str] = {}
    for i, gs in enumerate(classes, start=1):
        for g in gs:
            for c in g.contacts:
                contact_net[c] = f"n{i}"
            for p in g.pixels:
                pixel_net[p] = f"n{i}"

    components: list[Component] = []
    fresh = 0
    for box in boxes:
        if box.kind is DeviceKind.JUNCTION:
            continue
        contacts = sorted((c for net in nets for c in net
                           if c.box == box.id),
                          key=lambda c: (c.box, c.pixel))
        try:
            assigned = assign_pins(box, contacts)
        except TraceError as exc:
            exceptions.append((str(exc), (box.id,)))
            continue
        pins = []
        for pin in _pin_names(box.kind):
            c = assigned[pin]
            if c is None:
                fresh += 1
                pins.append(f"u{fresh}")
            else:
                pins.append(contact_net[c])
        components.append(Component(
            name=box.id, kind=box.kind, pins=tuple(pins),
            params=box.params, model=box.model))

    junction_comps = []
    for i, record in enumerate(records, start=1):
        pin_nets = tuple(pixel_net.get(p, "?")
                         for p in record.pair_pixels)
        junction_comps.append(Component(
            name=f"J{i}", kind=DeviceKind.JUNCTION, pins=pin_nets))

    netlist = Netlist(title=config.title, components=tuple(components))
    result = TraceResult(
        nets=tuple(nets), junctions=tuple(junction_comps),
        junction_records=tuple(records), exceptions=tuple(exceptions))
    return netlist, result


# ---------------------------------------------------------------------------
# files: box sidecars and trace reports


def boxes_to_file(boxes: Iterable[LabeledBox], path) -> None:
    """One JSON record per line: id, kind, orientation, rect, extras."""
    with open(path, "w", encoding="utf-8") as fh:
        for b in boxes:
            rec = {"id": b.id, "kind": b.kind.value,
                   "orientation": b.orientation.value,
                   "x0": b.rect[0], "y0": b.rect[1],
                   "x1": b.rect[2], "y1": b.rect[3]}
            if b.model is not None:
                rec["model"] = b.model
            if b.params:
                rec["params"] = {k: v for k, v in sorted(b.params.items())}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


def boxes_from_file(path) -> list[LabeledBox]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                out.append(LabeledBox(
                    id=rec["id"], kind=DeviceKind(rec["kind"]),
                    orientation=Orientation(rec["orientation"]),
                    rect=(rec["x0"], rec["y0"], rec["x1"], rec["y1"]),
                    model=rec.get("model"),
                    params=rec.get("params", {})))
            except (KeyError, ValueError, TypeError) as exc:
                raise TraceError(f"{path}:{lineno}: bad box record: {exc}"
                                 ) from exc
    return out


def report_to_dict(netlist: Netlist, result: TraceResult) -> dict:
    """Structured trace report: nets, junctions, exceptions."""
    net_names = {net: f"n{i}" for i, net in enumerate(result.nets, start=1)}
    return {
        "schema": 1,
        "title": netlist.title,
        "nets": [
            {"name": net_names[net],
             "contacts": [{"box": c.box, "pixel": list(c.pixel),
                           "angle": round(c.angle, 3)}
                          for c in sorted(net,
                                          key=lambda c: (c.box, c.pixel))]}
            for net in result.nets],
        "junctions": [
            {"name": comp.name, "pixel": list(rec.pixel),
             "arm_angles": list(rec.arm_angles),
             "multiple_maxima": rec.multiple_maxima,
             "nets": list(comp.pins)}
            for comp, rec in zip(result.junctions, result.junction_records)],
        "exceptions": [{"reason": reason, "boxes": list(ids)}
                       for reason, ids in result.exceptions],
    }
