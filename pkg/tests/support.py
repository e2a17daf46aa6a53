"""Shared test helpers: seeded random netlist generation and defect injection.

The generator is independent of the parser/emitter pair under test: it
builds Netlist objects directly from random draws, never from text, so a
parse-emit round trip is checked against structure the parser never saw.
"""

from __future__ import annotations

import dataclasses
import random

from analogkit.netlist import (
    Component,
    DeviceKind,
    Netlist,
    Subcircuit,
)

_WORDS = ["core", "buf", "amp", "mix", "ota", "pad", "ref", "tia", "vco",
          "lna"]


def _value(rng: random.Random, signed: bool = False) -> float:
    style = rng.randrange(4)
    if style == 0:
        v = rng.choice([1.0, 2.2, 4.7, 10.0, 100.0]) * 10.0 ** rng.randint(-15, 6)
    elif style == 1:
        v = float(rng.randint(1, 999)) * 10.0 ** rng.randint(-12, 3)
    elif style == 2:
        v = rng.uniform(1e-15, 1e6)
    else:
        v = rng.uniform(0.1, 9.9) * 10.0 ** rng.randint(-15, 9)
    if signed and rng.random() < 0.3:
        v = -v
    return v


def _nets(rng: random.Random, n: int) -> list[str]:
    pool = ["0", "vdd", "vss", "inp", "inn", "out"]
    pool += [f"n{i}" for i in range(1, n + 1)]
    rng.shuffle(pool)
    return pool


def random_netlist(seed: int) -> Netlist:
    """A random but well-formed netlist; may contain a subcircuit."""
    rng = random.Random(seed)
    nets = _nets(rng, rng.randint(2, 8))
    comps: list[Component] = []
    counters = {k: 0 for k in "MRCIVX"}

    def fresh(prefix: str) -> str:
        counters[prefix] += 1
        return f"{prefix}{counters[prefix]}"

    for _ in range(rng.randint(1, 12)):
        kind = rng.choice([DeviceKind.MOS, DeviceKind.MOS,
                           DeviceKind.RESISTOR, DeviceKind.CAPACITOR,
                           DeviceKind.CURRENT_SOURCE,
                           DeviceKind.VOLTAGE_SOURCE])
        if kind is DeviceKind.MOS:
            params = {"W": _value(rng), "L": _value(rng)}
            if rng.random() < 0.4:
                params["nf"] = float(rng.randint(1, 100))
            comps.append(Component(fresh("M"), kind,
                                   tuple(rng.choice(nets) for _ in range(4)),
                                   params, rng.choice(["nmos", "pmos"])))
        else:
            prefix = kind.prefix
            comps.append(Component(fresh(prefix), kind,
                                   (rng.choice(nets), rng.choice(nets)),
                                   {"value": _value(
                                       rng, signed=kind in (
                                           DeviceKind.VOLTAGE_SOURCE,
                                           DeviceKind.CURRENT_SOURCE))}))

    subckts: tuple[Subcircuit, ...] = ()
    if rng.random() < 0.3:
        ports = tuple(f"p{i}" for i in range(1, rng.randint(2, 4) + 1))
        body = Netlist(components=(
            Component("R1", DeviceKind.RESISTOR, (ports[0], ports[-1]),
                      {"value": _value(rng)}),))
        subckts = (Subcircuit("cell", ports, body),)
        for _ in range(rng.randint(1, 2)):
            comps.append(Component(
                fresh("X"), DeviceKind.SUBCIRCUIT,
                tuple(rng.choice(nets) for _ in ports), {}, "cell"))

    title = " ".join(rng.sample(_WORDS, rng.randint(0, 2)))
    return Netlist(title=title, components=tuple(comps), subcircuits=subckts)


def labeled_clean(netlist: Netlist) -> Netlist:
    """Label every single-pin net so validate() reports nothing."""
    counts = netlist.net_pin_count()
    for net, n in counts.items():
        if n == 1 and net != "0":
            netlist = netlist.with_net_role(net, "port")
    return netlist


def inject_dangling(netlist: Netlist, seed: int) -> tuple[Netlist, str]:
    """Attach a resistor whose far side is a fresh, unlabeled net."""
    rng = random.Random(seed)
    nets = sorted(netlist.nets) or ["0"]
    fresh_net = "dangle_x"
    comp = Component("Rdangle", DeviceKind.RESISTOR,
                     (rng.choice(nets), fresh_net), {"value": 1e3})
    return netlist.with_component(comp), fresh_net


def inject_arity(netlist: Netlist, seed: int) -> tuple[Netlist, str]:
    """Drop one pin from a random device (falls back to adding one)."""
    rng = random.Random(seed)
    fixed = [c for c in netlist.components
             if c.kind.pin_count is not None and len(c.pins) > 1]
    victim = rng.choice(fixed)
    comps = []
    for c in netlist.components:
        if c.name == victim.name:
            c = dataclasses.replace(c, pins=c.pins[:-1])
        comps.append(c)
    return dataclasses.replace(netlist, components=tuple(comps)), victim.name
