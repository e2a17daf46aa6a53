"""Analytic stand-ins for a circuit simulator.

Each model maps a sized deck to a metric dictionary deterministically and
in microseconds, which is what the sizing tests and demos need.  The two
circuit surrogates inspect the DUT subcircuit *structurally* (input pair,
tail, cascodes, mirrors, compensation network) rather than relying on
device names, so they respond to topology the way a simulator would:
cascoded first stages gain more, device mismatch between paired devices
degrades rejection ratios and offset, and the compensation capacitor
trades bandwidth against phase margin.

Device geometry enters through log-normalized coordinates over fixed
canonical ranges, keeping every coefficient dimensionless.
"""

from __future__ import annotations

import math
from typing import Mapping

from .netlist import Component, DeviceKind, Netlist

MODELS = {}


class SyntheticFailure(Exception):
    """Raised by a model to signal a failed (not erroneous) evaluation."""


def register(name):
    def deco(fn):
        MODELS[name] = fn
        return fn
    return deco


def get_model(name: str):
    return MODELS[name]


# canonical geometry ranges for log-normalized coordinates
U_RANGES = {
    "W": (100e-9, 3e-6),
    "L": (30e-9, 1e-6),
    "R": (100.0, 1e6),
    "C": (50e-15, 100e-12),
    "I": (1e-6, 1e-3),
}


def _u(value: float, kind: str) -> float:
    lo, hi = U_RANGES[kind]
    if value <= 0.0:
        raise SyntheticFailure(f"non-positive {kind} value {value!r}")
    z = math.log(value / lo) / math.log(hi / lo)
    return min(1.0, max(0.0, z))


def _sig(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def _peak(u: float, u0: float) -> float:
    """Quadratic bump over [0, 1]: 1 at u0, falling toward the edges.

    Geometry sweet spots sit inside the range (oversized devices load
    themselves), so gain terms use this instead of a straight ramp.
    """
    s = max(u0, 1.0 - u0)
    z = (u - u0) / s
    return 1.0 - z * z


def _vector(assignment: Mapping[str, float]) -> list[float]:
    return [float(assignment[k]) for k in sorted(assignment)]


# ---------------------------------------------------------------------------
# benchmark models


@register("sphere")
def sphere_model(deck, assignment, params):
    """Sum of squared distances to a center point (default 0.55)."""
    center = params.get("center", 0.55)
    x = _vector(assignment)
    if not x:
        raise SyntheticFailure("sphere model needs at least one parameter")
    if isinstance(center, (int, float)):
        center = [float(center)] * len(x)
    if len(center) != len(x):
        raise SyntheticFailure("center length does not match parameters")
    value = sum((xi - ci) ** 2 for xi, ci in zip(x, center))
    return {"sphere": value}, {"sphere": ""}


@register("rosenbrock")
def rosenbrock_model(deck, assignment, params):
    x = _vector(assignment)
    if len(x) < 2:
        raise SyntheticFailure("rosenbrock needs at least two parameters")
    value = sum(100.0 * (x[i + 1] - x[i] ** 2) ** 2 + (1.0 - x[i]) ** 2
                for i in range(len(x) - 1))
    return {"rosenbrock": value}, {"rosenbrock": ""}


@register("flaky_sphere")
def flaky_sphere_model(deck, assignment, params):
    """Sphere with deterministic, input-dependent failures for testing."""
    mod = int(params.get("fail_mod", 5))
    x = _vector(assignment)
    if x and int(round(x[0] * 1000.0)) % mod == 0:
        raise SyntheticFailure("synthetic convergence failure")
    return sphere_model(deck, assignment, params)


# ---------------------------------------------------------------------------
# structural helpers for circuit surrogates


def _is_pmos(comp: Component) -> bool:
    return (comp.model or "").lower().startswith("p")


def _pin(comp: Component, name: str) -> str:
    return comp.pins[comp.kind.pin_names.index(name)]


def _d(comp):
    return _pin(comp, "d")


def _g(comp):
    return _pin(comp, "g")


def _s(comp):
    return _pin(comp, "s")


def _pval(comp: Component, param: str, assignment) -> float:
    key = f"{comp.name}.{param}"
    if key in assignment:
        return float(assignment[key])
    if param in comp.params:
        return float(comp.params[param])
    raise SyntheticFailure(f"{comp.name} has no {param} value")


class _DutView:
    """Structural index over a DUT subcircuit body."""

    def __init__(self, deck, assignment):
        if deck is None:
            raise SyntheticFailure("circuit surrogates need a deck")
        self.body: Netlist = deck.dut_body()
        self.assignment = dict(assignment)
        self.roles = {role: net for net, role in deck.port_roles.items()}
        self.mos = [c for c in self.body.components
                    if c.kind is DeviceKind.MOS]

    def port(self, role: str) -> str:
        if role not in self.roles:
            raise SyntheticFailure(f"DUT exposes no {role!r} port")
        return self.roles[role]

    def uw(self, comp: Component) -> float:
        return _u(_pval(comp, "W", self.assignment), "W")

    def ul(self, comp: Component) -> float:
        return _u(_pval(comp, "L", self.assignment), "L")

    def pair_mismatch(self, pairs) -> float:
        mm = 0.0
        for a, b in pairs:
            mm += abs(self.uw(a) - self.uw(b)) + abs(self.ul(a) - self.ul(b))
        return mm

    def input_pair(self):
        inp, inn = self.port("input+"), self.port("input-")
        pair = [m for m in self.mos if _g(m) in (inp, inn)]
        if len(pair) != 2:
            raise SyntheticFailure("cannot identify the input pair")
        pair.sort(key=lambda m: 0 if _g(m) == inp else 1)
        if _s(pair[0]) != _s(pair[1]):
            raise SyntheticFailure("input pair sources do not meet")
        return pair

    def first_current_source(self):
        for c in self.body.components:
            if c.kind is DeviceKind.CURRENT_SOURCE:
                return c
        return None

    def first_of(self, kind: DeviceKind):
        for c in self.body.components:
            if c.kind is kind:
                return c
        return None


# ---------------------------------------------------------------------------
# amplifier surrogate


@register("surrogate_opamp")
def surrogate_opamp(deck, assignment, params):
    """Small-signal surrogate for one- and two-stage CMOS amplifiers.

    Gain terms peak at interior device geometries (see `_peak`) and a
    cascoded first stage adds a fixed premium; bandwidth grows with
    input-pair width and bias current but is loaded by the compensation
    capacitor; rejection ratios ride on gain plus a tail/load term and
    collapse with mismatch between paired devices.
    """
    view = _DutView(deck, assignment)
    pair = view.input_pair()
    tail_net = _s(pair[0])
    tails = [m for m in view.mos
             if m not in pair and _d(m) == tail_net]
    if len(tails) != 1:
        raise SyntheticFailure("cannot identify the tail device")
    tail = tails[0]

    pair_drains = {_d(m) for m in pair}
    casc_n = [m for m in view.mos
              if not _is_pmos(m) and m not in pair and m is not tail
              and _s(m) in pair_drains]
    cascoded = len(casc_n) == 2
    stage1_tops = ({_d(m) for m in casc_n} if cascoded
                   else pair_drains)
    load_p = [m for m in view.mos
              if _is_pmos(m) and _d(m) in stage1_tops]
    load_sources = {_s(m) for m in load_p}
    top_mirror = [m for m in view.mos
                  if _is_pmos(m) and m not in load_p
                  and _d(m) in load_sources]

    known = {c.name for group in (pair, [tail], casc_n, load_p, top_mirror)
             for c in group}
    driver = None
    for m in view.mos:
        if m.name in known or _g(m) == _d(m):
            continue
        if _g(m) in stage1_tops:
            driver = m
            break

    mm_pairs = [tuple(pair)]
    for group in (casc_n, load_p, top_mirror):
        if len(group) == 2:
            mm_pairs.append(tuple(group))
    mm = view.pair_mismatch(mm_pairs)

    uw1 = (view.uw(pair[0]) + view.uw(pair[1])) / 2.0
    ul1 = (view.ul(pair[0]) + view.ul(pair[1])) / 2.0
    ult = view.ul(tail)
    ulld = (sum(view.ul(m) for m in load_p) / len(load_p)
            if load_p else 0.5)
    isrc = view.first_current_source()
    ui = (_u(_pval(isrc, "value", view.assignment), "I")
          if isrc is not None else 0.5)

    c = {
        "gain1_base": 26.0, "gain1_l": 12.0, "gain1_w": 6.0,
        "gain1_load": 6.0, "gain1_bias": 6.0,
        "casc_base": 34.0, "casc_l": 6.0,
        "gain2_base": 9.0, "gain2_l": 9.0, "gain2_w": 5.0,
        "gain2_bias": 3.0,
        "gain_mm": 5.0, "cmrr_base": 18.0, "cmrr_tail": 6.0,
        "cmrr_mm": 34.0, "psrr_base": 10.0, "psrr_load": 6.0,
        "psrr_mm": 26.0,
        "gbw_base": 6.05, "gbw_w": 1.15, "gbw_bias": 0.65,
        "gbw_cap": 0.75, "gbw_l": 0.2,
        "pm_floor": 61.0, "pm_span": 20.0,
        # geometry sweet spots for the peaked gain terms
        "peak_l1": 0.8, "peak_w1": 0.7, "peak_load": 0.6,
        "peak_l2": 0.8, "peak_w2": 0.65, "peak_casc": 0.7,
    }
    c.update({k: float(v) for k, v in params.items()
              if isinstance(v, (int, float))})

    gain = (c["gain1_base"] + c["gain1_l"] * _peak(ul1, c["peak_l1"])
            + c["gain1_w"] * _peak(uw1, c["peak_w1"])
            + c["gain1_load"] * _peak(ulld, c["peak_load"])
            - c["gain1_bias"] * ui * ui)
    if cascoded:
        ulc = (sum(view.ul(m) for m in casc_n + top_mirror)
               / max(1, len(casc_n) + len(top_mirror)))
        gain += c["casc_base"] + c["casc_l"] * _peak(ulc, c["peak_casc"])

    uw2 = ul2 = 0.0
    if driver is not None:
        uw2 = view.uw(driver)
        ul2 = view.ul(driver)
        gain += (c["gain2_base"] + c["gain2_l"] * _peak(ul2, c["peak_l2"])
                 + c["gain2_w"] * _peak(uw2, c["peak_w2"])
                 - c["gain2_bias"] * ui * ui)
    gain -= c["gain_mm"] * math.tanh(2.2 * mm)

    cmrr = (gain + c["cmrr_base"] + c["cmrr_tail"] * ult
            - c["cmrr_mm"] * math.tanh(2.2 * mm))
    psrr = (gain + c["psrr_base"] + c["psrr_load"] * ulld
            - c["psrr_mm"] * math.tanh(2.2 * mm))

    comp_c = view.first_of(DeviceKind.CAPACITOR)
    comp_r = view.first_of(DeviceKind.RESISTOR)
    uc = (_u(_pval(comp_c, "value", view.assignment), "C")
          if comp_c is not None else 0.15)
    ur = (_u(_pval(comp_r, "value", view.assignment), "R")
          if comp_r is not None else 0.0)

    log_gbw = (c["gbw_base"] + c["gbw_w"] * uw1 + c["gbw_bias"] * ui
               - c["gbw_cap"] * uc - c["gbw_l"] * ul1)
    pm = c["pm_floor"] + c["pm_span"] * _sig(
        2.2 * (uc + 0.5 * ur - 0.6 * uw2 - 0.1))

    values = {"dm_gain": gain, "cm_gain": gain - cmrr,
              "ps_gain": gain - psrr, "gbw": 10.0 ** log_gbw, "pm": pm}
    units = {"dm_gain": "dB", "cm_gain": "dB", "ps_gain": "dB",
             "gbw": "Hz", "pm": "deg"}
    return values, units


# ---------------------------------------------------------------------------
# comparator surrogate


@register("surrogate_comparator")
def surrogate_comparator(deck, assignment, params):
    """Surrogate for clocked latch comparators.

    Offset tracks mismatch across the input pair and the regenerative
    pairs; delay improves with latch and tail drive; power grows with
    total device width.
    """
    view = _DutView(deck, assignment)
    pair = view.input_pair()
    clk = view.port("clock")
    tails = [m for m in view.mos
             if not _is_pmos(m) and _g(m) == clk]
    if not tails:
        raise SyntheticFailure("cannot identify the clocked tail")
    tail = tails[0]

    cross = []
    seen = set()
    for a in view.mos:
        for b in view.mos:
            if a is b or (b.name, a.name) in seen:
                continue
            if (_g(a) == _d(b) and _g(b) == _d(a)
                    and _is_pmos(a) == _is_pmos(b)):
                cross.append((a, b))
                seen.add((a.name, b.name))
    if not cross:
        raise SyntheticFailure("cannot identify the regenerative core")

    mm = view.pair_mismatch([tuple(pair)] + cross)
    uw_in = (view.uw(pair[0]) + view.uw(pair[1])) / 2.0
    latch_devices = [d for p in cross for d in p]
    uw_latch = sum(view.uw(m) for m in latch_devices) / len(latch_devices)
    ul_mean = sum(view.ul(m) for m in view.mos) / len(view.mos)
    uw_mean = sum(view.uw(m) for m in view.mos) / len(view.mos)
    uw_tail = view.uw(tail)

    c = {
        "off_floor": 2e-5, "off_mm": 5.5e-4, "off_w": 3e-5,
        "delay_base": -9.05, "delay_latch": 0.75, "delay_tail": 0.35,
        "delay_l": 0.45,
        "power_base": -4.75, "power_w": 0.8, "power_tail": 0.35,
    }
    c.update({k: float(v) for k, v in params.items()
              if isinstance(v, (int, float))})

    offset = (c["off_floor"] + c["off_mm"] * math.tanh(1.6 * mm)
              + c["off_w"] * (1.0 - uw_in))
    log_delay = (c["delay_base"] - c["delay_latch"] * uw_latch
                 - c["delay_tail"] * uw_tail + c["delay_l"] * ul_mean)
    log_power = (c["power_base"] + c["power_w"] * uw_mean
                 + c["power_tail"] * uw_tail)

    values = {"offset_voltage": offset,
              "propagation_delay": 10.0 ** log_delay,
              "power": 10.0 ** log_power}
    units = {"offset_voltage": "V", "propagation_delay": "s", "power": "W"}
    return values, units
