"""Concrete library circuits.

Netlists are authored as text (the same dialect the parser accepts) and
wrapped into annotated entities.  Device sizes here are only starting
values; the sizing layer treats them as free parameters.
"""

from __future__ import annotations

import textwrap

from ..kg import CircuitEntity, LocalAnnotation, Store, TieGroup
from ..netlist import parse


def _entity(entity_id, entity_class, text, pins, ties=(), annotations=None,
            measures=(), dut_ports=()):
    return CircuitEntity(
        entity_id=entity_id,
        entity_class=entity_class,
        netlist=parse(textwrap.dedent(text)),
        local=LocalAnnotation(pin_functions=pins, tie_groups=tuple(ties)),
        annotations=annotations or {},
        measures=measures,
        dut_ports=dut_ports,
    )


def bias_block() -> CircuitEntity:
    """Current reference: source into a diode-connected NMOS."""
    return _entity(
        "bias_block", "part", """\
        .title bias current reference
        I1 vdd vbias 20u
        M8 vbias vbias 0 0 nmos W=2u L=500n
        """,
        pins={"vbias": "output", "vdd": "supply"},
        annotations={
            "function": "bias generation",
            "type": "current reference",
        })


def five_transistor_ota() -> CircuitEntity:
    """Differential pair with PMOS current-mirror load and tail sink."""
    return _entity(
        "five_transistor_ota", "part", """\
        .title five transistor ota
        M1 mid inp tail 0 nmos W=4u L=400n
        M2 out1 inn tail 0 nmos W=4u L=400n
        M3 mid mid vdd vdd pmos W=6u L=400n
        M4 out1 mid vdd vdd pmos W=6u L=400n
        M5 tail vbias 0 0 nmos W=3u L=500n
        """,
        pins={"inp": "input+", "inn": "input-", "out1": "output",
              "vbias": "bias", "vdd": "supply"},
        ties=(TieGroup(("M1", "M2"), ("W", "L")),
              TieGroup(("M3", "M4"), ("W", "L"))),
        annotations={
            "input": "differential input pair",
            "load": "pmos current mirror",
            "gain": "moderate",
            "stage": "first",
        })


def telescopic_cascode_ota() -> CircuitEntity:
    """Telescopic cascode first stage; higher gain, one cascode bias rail."""
    return _entity(
        "telescopic_cascode_ota", "part", """\
        .title telescopic cascode ota
        M1 x1 inp tail 0 nmos W=4u L=400n
        M2 x2 inn tail 0 nmos W=4u L=400n
        M3 y1 vcasc x1 0 nmos W=4u L=300n
        M4 out1 vcasc x2 0 nmos W=4u L=300n
        M5 y1 vcasc z1 vdd pmos W=6u L=300n
        M6 out1 vcasc z2 vdd pmos W=6u L=300n
        M7 z1 y1 vdd vdd pmos W=6u L=400n
        M8 z2 y1 vdd vdd pmos W=6u L=400n
        M9 tail vbias 0 0 nmos W=3u L=500n
        VC1 vcasc 0 1.1
        """,
        pins={"inp": "input+", "inn": "input-", "out1": "output",
              "vbias": "bias", "vdd": "supply"},
        ties=(TieGroup(("M1", "M2"), ("W", "L")),
              TieGroup(("M3", "M4"), ("W", "L")),
              TieGroup(("M5", "M6"), ("W", "L")),
              TieGroup(("M7", "M8"), ("W", "L"))),
        annotations={
            "input": "differential input pair",
            "load": "cascoded pmos mirror",
            "gain": "high",
            "stage": "first",
        })


def common_source_stage() -> CircuitEntity:
    """Self-biased output stage: NMOS driver with diode-connected load."""
    return _entity(
        "common_source_stage", "part", """\
        .title common source stage
        M6 out2 in2 0 0 nmos W=8u L=300n
        M7 out2 out2 vdd vdd pmos W=4u L=300n
        """,
        pins={"in2": "input", "out2": "output", "vdd": "supply"},
        annotations={
            "type": "common source amplifier",
            "stage": "second",
            "gain": "moderate",
        })


def miller_rc() -> CircuitEntity:
    """Series RC used as pole-splitting compensation between two stages."""
    return _entity(
        "miller_rc", "part", """\
        .title miller compensation
        R1 cin cmid 2k
        C1 cmid cout 2p
        """,
        pins={"cin": "input", "cout": "output"},
        annotations={
            "type": "miller compensation",
            "function": "frequency compensation",
        })


def strong_arm_latch() -> CircuitEntity:
    """Clocked regenerative comparator, single stage."""
    return _entity(
        "strong_arm_latch", "comparator", """\
        .title strong arm latch comparator
        MTAIL tail clk 0 0 nmos W=6u L=200n
        MIN1 x1 inp tail 0 nmos W=8u L=200n
        MIN2 x2 inn tail 0 nmos W=8u L=200n
        MLN1 outp outn x1 0 nmos W=4u L=200n
        MLN2 outn outp x2 0 nmos W=4u L=200n
        MEQ x1 clk x2 0 nmos W=1u L=200n
        MLP1 outp outn vdd vdd pmos W=6u L=200n
        MLP2 outn outp vdd vdd pmos W=6u L=200n
        MPC1 x1 clk vdd vdd pmos W=2u L=200n
        MPC2 x2 clk vdd vdd pmos W=2u L=200n
        MPC3 outp clk outn vdd pmos W=2u L=200n
        """,
        pins={"inp": "input+", "inn": "input-", "outp": "output+",
              "outn": "output-", "clk": "clock", "vdd": "supply"},
        ties=(TieGroup(("MTAIL", "MIN1", "MIN2", "MLN1", "MLN2", "MEQ",
                        "MLP1", "MLP2", "MPC1", "MPC2", "MPC3"), ("L",)),
              TieGroup(("MIN1", "MIN2"), ("W",)),
              TieGroup(("MLN1", "MLN2"), ("W",))),
        annotations={
            "family": "latch comparator",
            "type": "strong arm latch",
            "input": "differential input pair",
            "speed": "high",
            "power": "low",
        })


def double_tail_latch() -> CircuitEntity:
    """Two-tail clocked comparator; separate input and latch stages."""
    return _entity(
        "double_tail_latch", "comparator", """\
        .title double tail latch comparator
        MT1 tail1 clk 0 0 nmos W=4u L=200n
        MI1 d1 inp tail1 0 nmos W=6u L=200n
        MI2 d2 inn tail1 0 nmos W=6u L=200n
        MP1 d1 clk vdd vdd pmos W=2u L=200n
        MP2 d2 clk vdd vdd pmos W=2u L=200n
        MT2 tail2 clk vdd vdd pmos W=8u L=200n
        MR1 outp d1 tail2 vdd pmos W=3u L=200n
        MR2 outn d2 tail2 vdd pmos W=3u L=200n
        MLN1 outp outn 0 0 nmos W=3u L=200n
        MLN2 outn outp 0 0 nmos W=3u L=200n
        """,
        pins={"inp": "input+", "inn": "input-", "outp": "output+",
              "outn": "output-", "clk": "clock", "vdd": "supply"},
        ties=(TieGroup(("MI1", "MI2"), ("W", "L")),
              TieGroup(("MR1", "MR2"), ("W", "L")),
              TieGroup(("MLN1", "MLN2"), ("W", "L"))),
        annotations={
            "family": "latch comparator",
            "type": "double tail latch",
            "input": "differential input pair",
            "kickback": "low",
        })


def opamp_testbenches() -> list[CircuitEntity]:
    """Differential-, common-, and supply-gain benches with a 100 pF load."""
    dm = _entity(
        "tb_dm_gain", "testbench", """\
        .title differential gain bench
        VSUP vdd 0 1.8
        VCM cm 0 0.9
        VDP tbinp cm 0.5m
        VDN cm tbinn 0.5m
        CL tbout 0 100p
        """,
        pins={"tbinp": "input+", "tbinn": "input-", "tbout": "output",
              "vdd": "supply"},
        annotations={"excitation": "differential"},
        measures=("dm gain", "gbw", "pm"),
        dut_ports=("input+", "input-", "output", "supply", "ground"))
    cm = _entity(
        "tb_cm_gain", "testbench", """\
        .title common mode gain bench
        VSUP vdd 0 1.8
        VCP cminp 0 0.9
        VCN cminn 0 0.9
        CL tbout 0 100p
        """,
        pins={"cminp": "input+", "cminn": "input-", "tbout": "output",
              "vdd": "supply"},
        annotations={"excitation": "common mode"},
        measures=("cm gain",),
        dut_ports=("input+", "input-", "output", "supply", "ground"))
    ps = _entity(
        "tb_ps_gain", "testbench", """\
        .title supply gain bench
        VPS vddr 0 1.8
        VBP rinp 0 0.9
        VBN rinn 0 0.9
        CL tbout 0 100p
        """,
        pins={"rinp": "input+", "rinn": "input-", "tbout": "output",
              "vddr": "supply"},
        annotations={"excitation": "supply ripple"},
        measures=("ps gain",),
        dut_ports=("input+", "input-", "output", "supply", "ground"))
    return [dm, cm, ps]


def comparator_testbenches() -> list[CircuitEntity]:
    offset = _entity(
        "tb_comparator_offset", "testbench", """\
        .title comparator offset bench
        VSUP vdd 0 1.2
        VCK clk 0 0
        VIP cinp 0 0.6
        VIN cinn 0 0.6
        CLP coutp 0 10f
        CLN coutn 0 10f
        """,
        pins={"cinp": "input+", "cinn": "input-", "coutp": "output+",
              "coutn": "output-", "clk": "clock", "vdd": "supply"},
        annotations={"excitation": "ramped differential"},
        measures=("offset voltage",),
        dut_ports=("input+", "input-", "output+", "output-", "clock",
                   "supply", "ground"))
    dynamic = _entity(
        "tb_comparator_dynamic", "testbench", """\
        .title comparator dynamic bench
        VSUP vdd 0 1.2
        VCK clk 0 0
        VIP cinp 0 0.61
        VIN cinn 0 0.59
        CLP coutp 0 10f
        CLN coutn 0 10f
        """,
        pins={"cinp": "input+", "cinn": "input-", "coutp": "output+",
              "coutn": "output-", "clk": "clock", "vdd": "supply"},
        annotations={"excitation": "clocked step"},
        measures=("propagation delay", "power"),
        dut_ports=("input+", "input-", "output+", "output-", "clock",
                   "supply", "ground"))
    return [offset, dynamic]


def build_store() -> Store:
    """The full built-in library as a Store."""
    store = Store()
    for entity in [bias_block(), five_transistor_ota(),
                   telescopic_cascode_ota(), common_source_stage(),
                   miller_rc(), strong_arm_latch(), double_tail_latch(),
                   *opamp_testbenches(), *comparator_testbenches()]:
        store.add_circuit(entity)
    return store
