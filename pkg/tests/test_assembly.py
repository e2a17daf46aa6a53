"""Composition of stored parts into flat designs plus bench attachment."""

import json

import pytest

from analogkit.assembly import (
    AssemblyError,
    ConnectionPlan,
    Endpoint,
    assemble,
    attach_testbench,
    plan_connections,
    plan_from_dict,
    plan_to_dict,
)
from analogkit.kg import CircuitEntity, LocalAnnotation
from analogkit.netlist import DeviceKind, emit, parse, validate
from analogkit.fixtures.circuits import (
    bias_block,
    common_source_stage,
    comparator_testbenches,
    five_transistor_ota,
    miller_rc,
    opamp_testbenches,
    strong_arm_latch,
    telescopic_cascode_ota,
)
from analogkit.simbridge import BackendConfig, DeckEvaluator, evaluate
from analogkit.sizing import space_from_netlist


def two_stage_parts():
    return [bias_block(), five_transistor_ota(), miller_rc(),
            common_source_stage()]


def telescopic_parts():
    return [bias_block(), telescopic_cascode_ota(), miller_rc(),
            common_source_stage()]


# ---------------------------------------------------------------------------
# planning


def test_two_stage_plan_has_exactly_four_bindings():
    parts = two_stage_parts()
    plan = plan_connections(parts)
    as_pairs = [((a.part, a.role), (b.part, b.role))
                for a, b in plan.bindings]
    assert as_pairs == [
        ((1, "output"), (3, "input")),   # first stage drives second
        ((0, "output"), (1, "bias")),    # bias reference feeds first stage
        ((1, "output"), (2, "input")),   # compensation across the
        ((3, "output"), (2, "output")),  # inter-stage transition
    ]
    assert plan.exposures == {
        "input+": Endpoint(1, "input+"),
        "input-": Endpoint(1, "input-"),
        "output": Endpoint(3, "output"),
    }
    assert plan.supply_parts == (0, 1, 3)


def test_single_part_plan_has_no_bindings():
    plan = plan_connections([strong_arm_latch()])
    assert plan.bindings == ()
    assert set(plan.exposures) == {"input+", "input-", "clock",
                                   "output+", "output-"}
    assert plan.supply_parts == (0,)


def test_part_order_does_not_matter_for_stage_chain():
    # same parts listed in a different order still chain first -> second
    parts = [common_source_stage(), miller_rc(), bias_block(),
             five_transistor_ota()]
    plan = plan_connections(parts)
    pairs = {((a.part, a.role), (b.part, b.role)) for a, b in plan.bindings}
    assert ((3, "output"), (0, "input")) in pairs
    assert plan.exposures["output"] == Endpoint(0, "output")
    assert plan.exposures["input+"] == Endpoint(3, "input+")


def test_bias_with_no_bias_pin_is_missing_role():
    # the second stage is self-biased, so a bias part has nothing to feed
    with pytest.raises(AssemblyError, match="bias"):
        plan_connections([bias_block(), common_source_stage()])


def test_two_outputs_without_disambiguation_is_ambiguous():
    twin = CircuitEntity(
        entity_id="twin_out", entity_class="part",
        netlist=parse("""\
            .title twin output part
            R1 a c 1k
            R2 b c 1k
            """),
        local=LocalAnnotation(pin_functions={
            "a": "output", "b": "output", "c": "input"}))
    with pytest.raises(AssemblyError, match="ambiguous"):
        plan_connections([twin])


def test_empty_part_list_rejected():
    with pytest.raises(AssemblyError):
        plan_connections([])
    with pytest.raises(AssemblyError):
        assemble([], ConnectionPlan())


def test_plan_survives_json_round_trip():
    plan = plan_connections(two_stage_parts())
    blob = json.dumps(plan_to_dict(plan), sort_keys=True)
    assert plan_from_dict(json.loads(blob)) == plan


def test_plan_from_dict_rejects_bad_schema():
    with pytest.raises(AssemblyError, match="schema"):
        plan_from_dict({"schema": 99})


# ---------------------------------------------------------------------------
# assembly


def test_two_stage_assembly_component_census():
    parts = two_stage_parts()
    asm = assemble(parts, plan_connections(parts))
    comps = asm.netlist.components
    assert len(comps) == 11
    models = [c.model for c in comps if c.kind is DeviceKind.MOS]
    assert models.count("nmos") == 5
    assert models.count("pmos") == 3
    kinds = [c.kind for c in comps]
    assert kinds.count(DeviceKind.CURRENT_SOURCE) == 1
    assert kinds.count(DeviceKind.RESISTOR) == 1
    assert kinds.count(DeviceKind.CAPACITOR) == 1
    assert validate(asm.netlist) == []


def test_component_count_is_sum_of_parts():
    parts = telescopic_parts()
    asm = assemble(parts, plan_connections(parts))
    assert len(asm.netlist.components) == sum(
        len(p.netlist.components) for p in parts)


def test_net_count_drops_by_one_per_merge():
    parts = two_stage_parts()
    plan = plan_connections(parts)
    asm = assemble(parts, plan)
    total = sum(len(p.netlist.nets) for p in parts)
    grounded = sum(1 for p in parts if "0" in p.netlist.nets)
    merges = len(plan.bindings) + (len(plan.supply_parts) - 1)
    assert len(asm.netlist.nets) == total - merges - (grounded - 1)
    assert len(asm.netlist.nets) == 10


def test_provenance_covers_every_component():
    parts = two_stage_parts()
    asm = assemble(parts, plan_connections(parts))
    assert set(asm.provenance) == {c.name for c in asm.netlist.components}
    assert asm.provenance["M1_s2"] == "five_transistor_ota"
    assert asm.provenance["I1_s1"] == "bias_block"
    assert asm.provenance["M6_s4"] == "common_source_stage"
    assert asm.parts == ("bias_block", "five_transistor_ota", "miller_rc",
                         "common_source_stage")


def test_exposures_name_surviving_nets():
    parts = two_stage_parts()
    asm = assemble(parts, plan_connections(parts))
    assert asm.exposures == {
        "input+": "s2_inp",
        "input-": "s2_inn",
        "output": "s4_out2",
        "supply": "s1_vdd",
        "ground": "0",
    }
    # the bias net and the inter-stage net really were merged
    nets = asm.netlist.nets
    assert "s2_vbias" not in nets and "s1_vbias" in nets
    assert "s4_in2" not in nets and "s2_out1" in nets
    assert "s3_cin" not in nets and "s3_cout" not in nets


def test_single_part_assembly_is_identity_up_to_renaming():
    latch = strong_arm_latch()
    asm = assemble([latch], plan_connections([latch]))
    assert len(asm.netlist.components) == len(latch.netlist.components)
    for orig in latch.netlist.components:
        renamed = asm.netlist.component(orig.name + "_s1")
        assert renamed.kind is orig.kind
        assert renamed.params == orig.params
        assert renamed.model == orig.model
        assert renamed.pins == tuple(
            p if p == "0" else "s1_" + p for p in orig.pins)
    groups = {tuple(tg.components) for tg in asm.tie_groups}
    assert ("MIN1_s1", "MIN2_s1") in groups


def test_assembled_netlist_reparses():
    # renaming must keep the leading device-type letter, or the emitted
    # text stops being a readable netlist
    parts = two_stage_parts()
    asm = assemble(parts, plan_connections(parts))
    again = parse(emit(asm.netlist))
    assert emit(again) == emit(asm.netlist)


def test_assembly_is_deterministic():
    first = assemble(two_stage_parts(), plan_connections(two_stage_parts()))
    second = assemble(two_stage_parts(), plan_connections(two_stage_parts()))
    assert emit(first.netlist) == emit(second.netlist)
    assert first.exposures == second.exposures
    assert first.provenance == second.provenance


def test_binding_out_of_range_part_rejected():
    parts = two_stage_parts()
    bad = ConnectionPlan(bindings=((Endpoint(0, "output"),
                                    Endpoint(7, "input")),))
    with pytest.raises(AssemblyError, match="7"):
        assemble(parts, bad)


def test_binding_with_absent_role_rejected():
    parts = two_stage_parts()
    bad = ConnectionPlan(bindings=((Endpoint(0, "clock"),
                                    Endpoint(1, "input+")),))
    with pytest.raises(AssemblyError, match="clock"):
        assemble(parts, bad)


# ---------------------------------------------------------------------------
# sizing-space counts on assembled circuits


def test_two_stage_space_19_free_15_tied():
    parts = two_stage_parts()
    asm = assemble(parts, plan_connections(parts))
    assert space_from_netlist(asm.netlist).effective_dim == 19
    assert space_from_netlist(asm.netlist, asm.tie_groups).effective_dim == 15


def test_telescopic_space_27_free_19_tied():
    parts = telescopic_parts()
    asm = assemble(parts, plan_connections(parts))
    assert space_from_netlist(asm.netlist).effective_dim == 27
    assert space_from_netlist(asm.netlist, asm.tie_groups).effective_dim == 19


def test_latch_space_22_free_10_tied():
    latch = strong_arm_latch()
    asm = assemble([latch], plan_connections([latch]))
    assert space_from_netlist(asm.netlist).effective_dim == 22
    assert space_from_netlist(asm.netlist, asm.tie_groups).effective_dim == 10


# ---------------------------------------------------------------------------
# testbench attachment


def test_three_benches_share_one_dut_subcircuit():
    parts = two_stage_parts()
    asm = assemble(parts, plan_connections(parts))
    decks = [attach_testbench(asm, tb) for tb in opamp_testbenches()]
    assert [d.name for d in decks] == ["tb_dm_gain", "tb_cm_gain",
                                       "tb_ps_gain"]

    def dut_section(deck):
        lines = deck.render().splitlines()
        start = next(i for i, l in enumerate(lines)
                     if l.startswith(".subckt dut"))
        end = next(i for i, l in enumerate(lines) if l == ".ends")
        return "\n".join(lines[start:end + 1])

    sections = {dut_section(d) for d in decks}
    assert len(sections) == 1
    assert decks[0].measurements == ("dm_gain", "gbw", "pm")
    assert decks[1].measurements == ("cm_gain",)
    assert decks[2].measurements == ("ps_gain",)
    assert "CL tbout 0 100p" in decks[0].render()
    assert "XDUT tbinp tbinn tbout vdd dut" in decks[0].render()


def test_deck_ports_follow_bench_order_minus_ground():
    parts = two_stage_parts()
    asm = assemble(parts, plan_connections(parts))
    deck = attach_testbench(asm, opamp_testbenches()[0])
    sub = deck.netlist.subcircuit("dut")
    assert sub.ports == ("s2_inp", "s2_inn", "s4_out2", "s1_vdd")
    assert deck.port_roles == {"s2_inp": "input+", "s2_inn": "input-",
                               "s4_out2": "output", "s1_vdd": "supply"}


def test_deck_slots_cover_all_dut_parameters():
    parts = two_stage_parts()
    asm = assemble(parts, plan_connections(parts))
    deck = attach_testbench(asm, opamp_testbenches()[0])
    assert "M1_s2.W" in deck.slots
    assert "I1_s1.value" in deck.slots
    assert len(deck.slots) == 19
    sized = deck.sized({"M1_s2.W": 2e-6, "M1_s2.L": 5e-7})
    assert "M1_s2 s2_mid s2_inp s2_tail 0 nmos W=2u L=500n" \
        in sized.render()


def test_clock_bench_on_opamp_is_unmatched_role():
    parts = two_stage_parts()
    asm = assemble(parts, plan_connections(parts))
    with pytest.raises(AssemblyError, match="clock"):
        attach_testbench(asm, comparator_testbenches()[0])


def test_attach_rejects_non_testbench():
    parts = two_stage_parts()
    asm = assemble(parts, plan_connections(parts))
    with pytest.raises(AssemblyError, match="testbench"):
        attach_testbench(asm, five_transistor_ota())


# ---------------------------------------------------------------------------
# end-to-end against the synthetic backend


def opamp_evaluator(asm):
    backend = BackendConfig(kind="synthetic", model="surrogate_opamp")
    decks = [attach_testbench(asm, tb) for tb in opamp_testbenches()]
    return DeckEvaluator(decks, backend, derived={
        "cmrr": ("sub", "dm_gain", "cm_gain"),
        "psrr": ("sub", "dm_gain", "ps_gain"),
    })


def test_assembled_two_stage_evaluates_clean():
    parts = two_stage_parts()
    asm = assemble(parts, plan_connections(parts))
    outcome = opamp_evaluator(asm)({})
    assert outcome.status == "ok"
    assert set(outcome.values) >= {"dm_gain", "cmrr", "psrr", "gbw", "pm"}
    assert 40.0 < outcome.values["dm_gain"] < 80.0
    assert outcome.values["cmrr"] > outcome.values["dm_gain"]
    assert 1e6 < outcome.values["gbw"] < 1e8


def test_telescopic_assembly_outguns_two_stage():
    two = assemble(two_stage_parts(), plan_connections(two_stage_parts()))
    tele = assemble(telescopic_parts(), plan_connections(telescopic_parts()))
    dm_two = opamp_evaluator(two)({}).values["dm_gain"]
    dm_tele = opamp_evaluator(tele)({}).values["dm_gain"]
    assert dm_tele > dm_two + 15.0
    assert dm_tele > 80.0


def test_assembled_latch_runs_comparator_benches():
    latch = strong_arm_latch()
    asm = assemble([latch], plan_connections([latch]))
    backend = BackendConfig(kind="synthetic", model="surrogate_comparator")
    decks = [attach_testbench(asm, tb) for tb in comparator_testbenches()]
    outcome = DeckEvaluator(decks, backend)({})
    assert outcome.status == "ok"
    assert set(outcome.values) == {"offset_voltage", "propagation_delay",
                                   "power"}
    assert outcome.values["offset_voltage"] < 1e-4


def test_single_deck_evaluates_via_plain_evaluate():
    parts = two_stage_parts()
    asm = assemble(parts, plan_connections(parts))
    deck = attach_testbench(asm, opamp_testbenches()[0])
    backend = BackendConfig(kind="synthetic", model="surrogate_opamp")
    outcome = evaluate(deck, {}, backend)
    assert outcome.status == "ok"
    assert set(outcome.values) == {"dm_gain", "gbw", "pm"}
