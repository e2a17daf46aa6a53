"""Synthetic schematic renderer: draw a netlist as a traceable raster.

This is the ground-truth source for exercising the tracer: it draws a
known netlist as dark 1-pixel wires on a light canvas, records exactly
which pixels are wire, where every wire crossing lies, and which boxes
were placed.  Tracing the rendered image back must reproduce the input
netlist up to net renaming.

Layout scheme: components sit in one row; every multi-pin net gets its
own horizontal channel below the boxes, and each pin drops a vertical
lane onto its net's channel.  Where three or more lanes meet a channel, a
junction-dot box is placed, so every wire segment between boxes touches
exactly two of them.  Lanes of different nets cross foreign channels at
plain (dotless) intersections.  Geometry constants keep every crossing
far enough from bends, dots, and other crossings for the tracer's
convolution and angle tests to be unambiguous.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..netlist import Component, DeviceKind, GROUND_NET, Netlist
from .tracer import LabeledBox, Orientation, to_global_angle

__all__ = [
    "LayoutError",
    "RenderedSchematic",
    "five_transistor_demo",
    "generate_schematic",
    "layout_netlist",
]

# geometry constants (pixels); see safety notes above each use
BOX = 22            # square box edge length
PITCH = 80          # column spacing between box origins
STUB = 8            # dangling-pin stub length
JOG = 8             # clearance of the top-pin jog above the box
ROW_GAP = 18        # vertical spacing between net channels
ROW_BASE = 24       # first channel's clearance below the box row
DOT = 3             # junction dot box half-size
TOP_MARGIN = 30

_SIDE_ANGLE = {"right": 0.0, "top": 90.0, "left": 180.0, "bottom": 270.0}
_ANGLE_SIDE = {0: "right", 90: "top", 180: "left", 270: "bottom"}

# symbol-frame pin directions, mirroring the tracing convention
_MOS_LOCAL = {"d": 90.0, "g": 180.0, "s": 270.0, "b": 0.0}
_TWO_PIN_LOCAL = {"a": 90.0, "b": 270.0}


class LayoutError(Exception):
    pass


@dataclass
class RenderedSchematic:
    """A drawn schematic plus everything the tracer should rediscover."""

    image: np.ndarray
    boxes: list[LabeledBox]
    netlist: Netlist
    wire_pixels: frozenset
    crossings: tuple[tuple[int, int], ...]
    omitted_dots: int = 0

    @property
    def wire_count(self) -> int:
        return len(self.wire_pixels)


class _Canvas:
    def __init__(self, width: int, height: int):
        self.image = np.full((height, width), 255, dtype=np.uint8)
        self.wire: set[tuple[int, int]] = set()

    def _stroke(self, x: int, y: int, structural: bool):
        self.image[y, x] = 0
        if structural:
            self.wire.add((x, y))

    def line(self, a: tuple[int, int], b: tuple[int, int],
             structural: bool = True):
        (x0, y0), (x1, y1) = a, b
        if x0 != x1 and y0 != y1:
            raise LayoutError(f"only axis-aligned segments: {a} -> {b}")
        if x0 == x1:
            for y in range(min(y0, y1), max(y0, y1) + 1):
                self._stroke(x0, y, structural)
        else:
            for x in range(min(x0, x1), max(x0, x1) + 1):
                self._stroke(x, y0, structural)

    def polyline(self, points, structural: bool = True):
        for a, b in zip(points, points[1:]):
            self.line(a, b, structural)


def _glyph(canvas: _Canvas, rect, kind: DeviceKind):
    """Cosmetic symbol artwork, strictly inside the box interior."""
    x0, y0, x1, y1 = rect
    cx, cy = (x0 + x1) // 2, (y0 + y1) // 2
    if kind is DeviceKind.JUNCTION:
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                canvas._stroke(cx + dx, cy + dy, structural=False)
        return
    if kind is DeviceKind.MOS:
        canvas.line((cx - 2, y0 + 4), (cx - 2, y1 - 4), structural=False)
        canvas.line((cx + 2, y0 + 6), (cx + 2, y1 - 6), structural=False)
        canvas.line((cx + 2, cy), (x1 - 4, cy), structural=False)
    elif kind is DeviceKind.CAPACITOR:
        canvas.line((x0 + 5, cy - 2), (x1 - 5, cy - 2), structural=False)
        canvas.line((x0 + 5, cy + 2), (x1 - 5, cy + 2), structural=False)
    else:
        canvas.line((x0 + 4, cy - 3), (x1 - 4, cy - 3), structural=False)
        canvas.line((x0 + 4, cy + 3), (x1 - 4, cy + 3), structural=False)
        canvas.line((cx, cy - 3), (cx, cy + 3), structural=False)


def _pin_sides(comp: Component, orientation: Orientation) -> dict[str, str]:
    """Which box side each named pin faces under the given orientation."""
    if comp.kind is DeviceKind.MOS:
        local = _MOS_LOCAL
        names = ("d", "g", "s", "b")
    else:
        local = _TWO_PIN_LOCAL
        names = ("a", "b")
    out = {}
    for pin in names:
        angle = to_global_angle(orientation, local[pin])
        out[pin] = _ANGLE_SIDE[int(round(angle)) % 360]
    return out


_PIN_ORDER = {DeviceKind.MOS: ("d", "g", "s", "b")}


def _pin_names(kind: DeviceKind) -> tuple[str, ...]:
    return _PIN_ORDER.get(kind, ("a", "b"))


def layout_netlist(netlist: Netlist,
                   orientations: dict[str, Orientation] | None = None,
                   omit_dots_for: set[str] = frozenset(),
                   ) -> RenderedSchematic:
    """Draw a flat netlist; the input netlist is the trace ground truth.

    Components are laid out in declaration order.  `omit_dots_for` names
    nets whose junction dots are deliberately left out — the resulting
    raster is defective on purpose and should be flagged by the tracer.
    Ground ("0") cannot be drawn: there is no implicit rail on a raster,
    so rename it to an ordinary net first.
    """
    orientations = orientations or {}
    comps = [c for c in netlist.components]
    if not comps:
        raise LayoutError("nothing to draw")
    if netlist.subcircuits:
        raise LayoutError("only flat netlists can be drawn")

    pin_of: dict[tuple[str, str], str] = {}   # (component, pin) -> net
    for c in comps:
        if c.kind not in (DeviceKind.MOS, DeviceKind.RESISTOR,
                          DeviceKind.CAPACITOR, DeviceKind.CURRENT_SOURCE,
                          DeviceKind.VOLTAGE_SOURCE):
            raise LayoutError(f"cannot draw device kind {c.kind.value!r}")
        if c.name.startswith("JD"):
            raise LayoutError(f"component name {c.name!r} collides with "
                              "junction-dot ids")
        for pin, net in zip(_pin_names(c.kind), c.pins):
            if net == GROUND_NET:
                raise LayoutError(
                    'net "0" cannot be drawn; rename ground to an ordinary '
                    "net before rendering")
            pin_of[(c.name, pin)] = net

    # column placement, one box per component
    rects: dict[str, tuple[int, int, int, int]] = {}
    orient: dict[str, Orientation] = {}
    x = 30
    for c in comps:
        rects[c.name] = (x, TOP_MARGIN, x + BOX, TOP_MARGIN + BOX)
        orient[c.name] = orientations.get(c.name, Orientation.R0)
        x += PITCH
    width = x - PITCH + BOX + 40
    by0, by1 = TOP_MARGIN, TOP_MARGIN + BOX

    # each pin gets a lane: an x column (and the exit path to reach it)
    def lane_x(name: str, side: str) -> int:
        x0, _, x1, _ = rects[name]
        return {"left": x0 - STUB, "right": x1 + STUB,
                "bottom": (x0 + x1) // 2, "top": x1 + 3 * STUB}[side]

    net_pins: dict[str, list[tuple[str, str, str]]] = {}
    for c in comps:
        sides = _pin_sides(c, orient[c.name])
        for pin in _pin_names(c.kind):
            net = pin_of[(c.name, pin)]
            net_pins.setdefault(net, []).append((c.name, pin, sides[pin]))

    lanes_used: dict[int, tuple[str, str]] = {}
    for net, pins in net_pins.items():
        for name, pin, side in pins:
            lx = lane_x(name, side)
            if lx in lanes_used and lanes_used[lx] != (name, side):
                raise LayoutError(f"lane collision at x={lx}")
            lanes_used[lx] = (name, side)

    # channel rows, ordered by net name
    channel_nets = sorted(n for n, p in net_pins.items() if len(p) > 1)
    row_y = {net: by1 + ROW_BASE + ROW_GAP * i
             for i, net in enumerate(channel_nets)}
    height = by1 + ROW_BASE + ROW_GAP * max(len(channel_nets), 1) + 20
    canvas = _Canvas(width, height)

    boxes: list[LabeledBox] = []
    for c in comps:
        boxes.append(LabeledBox(id=c.name, kind=c.kind,
                                orientation=orient[c.name],
                                rect=rects[c.name], model=c.model,
                                params=c.params))
        _glyph(canvas, rects[c.name], c.kind)

    verticals: list[tuple[int, int, int, str]] = []  # x, y0, y1, net

    def exit_path(name: str, side: str, drop_to: int | None):
        """Wire from the pin point; returns the lane column when dropped."""
        x0, y0, x1, y1 = rects[name]
        cx = (x0 + x1) // 2
        cy = (y0 + y1) // 2
        if side == "left":
            canvas.line((x0 - STUB, cy), (x0, cy))
            if drop_to is not None:
                canvas.line((x0 - STUB, cy), (x0 - STUB, drop_to))
                verticals.append((x0 - STUB, cy, drop_to, ""))
            return x0 - STUB
        if side == "right":
            canvas.line((x1, cy), (x1 + STUB, cy))
            if drop_to is not None:
                canvas.line((x1 + STUB, cy), (x1 + STUB, drop_to))
                verticals.append((x1 + STUB, cy, drop_to, ""))
            return x1 + STUB
        if side == "bottom":
            if drop_to is None:
                canvas.line((cx, y1), (cx, y1 + STUB))
            else:
                canvas.line((cx, y1), (cx, drop_to))
                verticals.append((cx, y1, drop_to, ""))
            return cx
        # top: short riser, jog right, then down past the box
        canvas.line((cx, y0), (cx, y0 - JOG))
        if drop_to is not None:
            lx = x1 + 3 * STUB
            canvas.line((cx, y0 - JOG), (lx, y0 - JOG))
            canvas.line((lx, y0 - JOG), (lx, drop_to))
            verticals.append((lx, y0 - JOG, drop_to, ""))
            return lx
        return cx

    dot_count = 0
    spans: dict[str, tuple[int, int]] = {}
    for net in channel_nets:
        y = row_y[net]
        cols = []
        for name, pin, side in net_pins[net]:
            cols.append(exit_path(name, side, y))
        cols.sort()
        spans[net] = (cols[0], cols[-1])
        interior = cols[1:-1]
        if net in omit_dots_for:
            canvas.line((cols[0], y), (cols[-1], y))
            continue
        segment_start = cols[0]
        for col in interior:
            dot_count += 1
            rect = (col - DOT, y - DOT, col + DOT, y + DOT)
            boxes.append(LabeledBox(id=f"JD{dot_count}",
                                    kind=DeviceKind.JUNCTION,
                                    orientation=Orientation.R0, rect=rect))
            _glyph(canvas, rect, DeviceKind.JUNCTION)
            canvas.line((segment_start, y), (col - DOT, y))
            segment_start = col + DOT
        canvas.line((segment_start, y), (cols[-1], y))

    for net, pins in net_pins.items():
        if len(pins) == 1:
            name, pin, side = pins[0]
            exit_path(name, side, None)

    # interior lanes stop at their dot's top ring; redraw those verticals
    # short.  exit_path drew them to the row, so erase the overlap inside
    # each dot interior.
    for box in boxes:
        if box.kind is DeviceKind.JUNCTION:
            x0, y0, x1, y1 = box.rect
            for yy in range(y0 + 1, y1):
                for xx in range(x0 + 1, x1):
                    if (xx, yy) in canvas.wire:
                        canvas.wire.discard((xx, yy))
                        canvas.image[yy, xx] = 255

    # true crossings: a net's lane passing over a foreign channel
    crossings = []
    for x, ya, yb, _ in verticals:
        lane_owner = lanes_used[x]
        owner_net = pin_of[(lane_owner[0], _owner_pin(
            lane_owner, net_pins))]
        for net in channel_nets:
            y = row_y[net]
            lo, hi = spans[net]
            if net != owner_net and min(ya, yb) < y < max(ya, yb) \
                    and lo < x < hi:
                crossings.append((x, y))
    crossings.sort()

    return RenderedSchematic(
        image=canvas.image, boxes=boxes, netlist=netlist,
        wire_pixels=frozenset(canvas.wire),
        crossings=tuple(crossings),
        omitted_dots=sum(max(len(net_pins[n]) - 2, 0)
                         for n in omit_dots_for))


def _owner_pin(owner: tuple[str, str], net_pins) -> str:
    name, side = owner
    for net, pins in net_pins.items():
        for pname, pin, pside in pins:
            if pname == name and pside == side:
                return pin
    raise LayoutError(f"no pin found for lane owner {owner}")


# ---------------------------------------------------------------------------
# generated corpus


_TWO_PIN_CHOICES = (
    (DeviceKind.RESISTOR, "R", (1e3, 100e3)),
    (DeviceKind.CAPACITOR, "C", (1e-12, 10e-12)),
    (DeviceKind.CURRENT_SOURCE, "I", (1e-6, 100e-6)),
    (DeviceKind.VOLTAGE_SOURCE, "V", (0.5, 1.8)),
)


class _CorpusBuilder:
    """Accumulates components/nets unit by unit, tracking pin sides."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.counters: dict[str, int] = {}
        self.comps: list[tuple[str, DeviceKind, str | None, dict]] = []
        self.orients: dict[str, Orientation] = {}
        self.side_net: dict[tuple[str, str], str] = {}
        self.net_seq = 0

    def new_net(self) -> str:
        self.net_seq += 1
        return f"w{self.net_seq:03d}"

    def add_two_pin(self, mirrored: bool | None = None) -> str:
        kind, prefix, (lo, hi) = _TWO_PIN_CHOICES[
            int(self.rng.integers(len(_TWO_PIN_CHOICES)))]
        self.counters[prefix] = self.counters.get(prefix, 0) + 1
        name = f"{prefix}{self.counters[prefix]}"
        value = float(np.round(self.rng.uniform(lo, hi), 15))
        if mirrored is None:
            mirrored = bool(self.rng.integers(2))
        self.comps.append((name, kind, None, {"value": value}))
        self.orients[name] = Orientation.M90 if mirrored else Orientation.R90
        return name

    def add_mos(self, orientation: Orientation = Orientation.R0) -> str:
        self.counters["M"] = self.counters.get("M", 0) + 1
        name = f"M{self.counters['M']}"
        params = {"W": float(self.rng.integers(1, 20)) * 1e-7,
                  "L": float(self.rng.integers(3, 10)) * 1e-8}
        model = "nmos" if self.rng.integers(2) else "pmos"
        self.comps.append((name, DeviceKind.MOS, model, params))
        self.orients[name] = orientation
        return name

    def connect(self, endpoints: list[tuple[str, str]], net: str | None = None
                ) -> str:
        net = net or self.new_net()
        for name, side in endpoints:
            self.side_net[(name, side)] = net
        return net

    def finish(self, title: str) -> Netlist:
        components = []
        for name, kind, model, params in self.comps:
            sides = _pin_sides(
                Component(name=name, kind=kind, pins=("x",) * (
                    4 if kind is DeviceKind.MOS else 2), params=params,
                    model=model),
                self.orients[name])
            pins = []
            for pin in _pin_names(kind):
                key = (name, sides[pin])
                if key not in self.side_net:
                    self.side_net[key] = self.new_net()
                pins.append(self.side_net[key])
            components.append(Component(name=name, kind=kind,
                                        pins=tuple(pins), params=params,
                                        model=model))
        return Netlist(title=title, components=tuple(components))


def _unit_chain(b: _CorpusBuilder, length: int):
    names = [b.add_two_pin() for _ in range(length)]
    for a, c in zip(names, names[1:]):
        b.connect([(a, "right"), (c, "left")])


def _unit_tee(b: _CorpusBuilder):
    names = [b.add_two_pin() for _ in range(3)]
    b.connect([(names[0], "right"), (names[1], "left"),
               (names[1], "right"), (names[2], "left")])


def _unit_jumper(b: _CorpusBuilder):
    """A MOS whose drain hops over its own body net: exactly one crossing."""
    m = b.add_mos(Orientation.R0)
    p = b.add_two_pin(mirrored=False)
    b.connect([(m, "right"), (p, "left")])   # body chain, upper channel
    b.connect([(m, "top"), (p, "right")])    # drain hop, lower channel


def _unit_mos_star(b: _CorpusBuilder):
    m = b.add_mos(Orientation.R0)
    p = b.add_two_pin(mirrored=False)
    b.connect([(m, "top"), (p, "left")])
    b.connect([(m, "right"), (p, "right")])


def _unit_rotated_mos(b: _CorpusBuilder):
    orientation = list(Orientation)[int(b.rng.integers(len(Orientation)))]
    b.add_mos(orientation)  # all four pins become dangling singleton nets


def generate_schematic(seed: int, crossings: int | None = None,
                       with_odd_group: bool = False) -> RenderedSchematic:
    """A seeded random schematic with an exact number of wire crossings.

    Crossings come only from dedicated jumper units, one each, so the
    requested count (0..3) is hit exactly.  `with_odd_group` additionally
    appends a three-pin net drawn without its junction dot, which a
    correct tracer must flag instead of resolving.
    """
    rng = np.random.default_rng(seed)
    if crossings is None:
        crossings = int(rng.integers(0, 4))
    if not 0 <= crossings <= 3:
        raise LayoutError("crossing count must be within 0..3")
    b = _CorpusBuilder(rng)
    units = [lambda: _unit_jumper(b)] * crossings
    fillers = [lambda: _unit_chain(b, int(rng.integers(2, 5))),
               lambda: _unit_tee(b),
               lambda: _unit_mos_star(b),
               lambda: _unit_rotated_mos(b)]
    for _ in range(int(rng.integers(2, 5))):
        units.append(fillers[int(rng.integers(len(fillers)))])
    order = rng.permutation(len(units))
    for idx in order:
        units[int(idx)]()
    omit: set[str] = set()
    if with_odd_group:
        names = [b.add_two_pin(mirrored=False) for _ in range(3)]
        omit.add(b.connect([(names[0], "right"), (names[1], "left"),
                            (names[2], "left")]))
    netlist = b.finish(title=f"synthetic schematic {seed}")
    rendered = layout_netlist(netlist, b.orients, omit_dots_for=omit)
    if len(rendered.crossings) != crossings:
        raise LayoutError(
            f"seed {seed}: expected {crossings} crossings, "
            f"got {len(rendered.crossings)}")
    return rendered


def five_transistor_demo() -> RenderedSchematic:
    """The classic five-transistor amplifier, drawn and ready to trace.

    Ground is renamed `gnd` because a raster has no implicit global net.
    """
    text = """\
.title five transistor amplifier schematic
M1 mid inp tail gnd nmos W=4u L=400n
M2 out1 inn tail gnd nmos W=4u L=400n
M3 mid mid vdd vdd pmos W=6u L=400n
M4 out1 mid vdd vdd pmos W=6u L=400n
M5 tail vbias gnd gnd nmos W=3u L=500n
"""
    from ..netlist import parse
    return layout_netlist(parse(text))
