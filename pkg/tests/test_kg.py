"""Knowledge store: annotation normalization, retrieval, persistence."""

import json

import pytest

from analogkit import fixtures
from analogkit.kg import (
    CircuitEntity,
    KGError,
    LocalAnnotation,
    Store,
    TieGroup,
    Triplet,
    normalize_text,
)
from analogkit.netlist import emit, parse, structurally_equal


@pytest.fixture()
def store():
    return fixtures.build_store()


@pytest.mark.parametrize("raw,expected", [
    ("PMOS Current Mirror", "pmos current mirror"),
    ("  strong-arm   latch ", "strong arm latch"),
    ("High!", "high"),
    ("dm_gain", "dm gain"),
])
def test_normalize_text(raw, expected):
    assert normalize_text(raw) == expected


def test_entity_requires_known_roles_and_components():
    net = parse("R1 a b 1k")
    with pytest.raises(KGError):
        CircuitEntity("x", "part", net,
                      LocalAnnotation(pin_functions={"a": "wiggle"}))
    with pytest.raises(KGError):
        CircuitEntity("x", "part", net,
                      LocalAnnotation(pin_functions={"zz": "input"}))
    with pytest.raises(KGError):
        CircuitEntity("x", "part", net,
                      LocalAnnotation(tie_groups=(
                          TieGroup(("R1", "R2"), ("value",)),)))


def test_tie_group_validation():
    with pytest.raises(KGError):
        TieGroup(("M1",), ("W",))
    with pytest.raises(KGError):
        TieGroup(("M1", "M2"), ())
    with pytest.raises(KGError):
        TieGroup(("M1", "M2"), ("vth",))
    with pytest.raises(KGError):
        TieGroup(("M1", "M2"), ("W",), mode="ratio", factors=())
    with pytest.raises(KGError):
        TieGroup(("M1", "M2"), ("W",), mode="equal", factors=(2.0,))
    tg = TieGroup(("M1", "M2", "M3"), ("W",), mode="ratio", factors=(2.0, 4.0))
    assert tg.factors == (2.0, 4.0)


def test_duplicate_entity_rejected(store):
    with pytest.raises(KGError):
        store.add_circuit(fixtures.bias_block())


def test_query_input_and_load_ranks_five_transistor_first(store):
    hits = store.query([
        Triplet(None, "input", "differential input pair"),
        Triplet(None, "load", "PMOS current mirror"),
    ])
    assert hits[0].entity.entity_id == "five_transistor_ota"
    assert hits[0].matched == 2
    ids = [h.entity.entity_id for h in hits]
    assert "telescopic_cascode_ota" in ids
    assert ids.index("five_transistor_ota") < ids.index(
        "telescopic_cascode_ota")


def test_query_high_gain_prefers_telescopic(store):
    hits = store.query([Triplet(None, "gain", "high")])
    ids = [h.entity.entity_id for h in hits]
    assert ids[0] == "telescopic_cascode_ota"
    assert "five_transistor_ota" not in ids  # only matching entities return


def test_query_normalizes_object_text(store):
    hits = store.query([Triplet(None, "type", "Strong-Arm  Latch!")])
    assert hits[0].entity.entity_id == "strong_arm_latch"


def test_query_ties_break_by_entity_id(store):
    hits = store.query([Triplet(None, "family", "latch comparator")])
    assert [h.entity.entity_id for h in hits] == [
        "double_tail_latch", "strong_arm_latch"]
    assert hits[0].matched == hits[1].matched == 1


def test_query_empty_patterns_returns_nothing(store):
    assert store.query([]) == []


def test_get_testbenches_covers_opamp_metrics(store):
    selection = store.get_testbenches(["dm gain", "cm gain", "ps gain"])
    assert [e.entity_id for e in selection.entities] == [
        "tb_cm_gain", "tb_dm_gain", "tb_ps_gain"]
    assert selection.missing == []


def test_get_testbenches_reports_missing(store):
    selection = store.get_testbenches(["dm gain", "slew rate"])
    assert [e.entity_id for e in selection.entities] == ["tb_dm_gain"]
    assert selection.missing == ["slew rate"]


def test_annotation_nodes_merge_equal_values(store):
    objects = store.distinct_objects()
    sharers = objects["differential input pair"]
    subjects = {s for s, _ in sharers}
    assert {"five_transistor_ota", "telescopic_cascode_ota",
            "strong_arm_latch", "double_tail_latch"} <= subjects
    # one node per distinct normalized value
    assert len(objects) == len({normalize_text(k) for k in objects})


def test_save_load_round_trip(store, tmp_path):
    store.save(tmp_path / "kgdir")
    loaded = Store.load(tmp_path / "kgdir")
    assert len(loaded) == len(store)
    for entity in store.entities():
        other = loaded.get(entity.entity_id)
        assert structurally_equal(other.netlist, entity.netlist)
        assert other.netlist.net_roles == entity.netlist.net_roles
        assert other.local == entity.local
        assert other.annotations == entity.annotations
        assert other.measures == entity.measures
        assert other.dut_ports == entity.dut_ports
    # triplet index survives
    assert [h.entity.entity_id for h in loaded.query(
        [Triplet(None, "gain", "high")])] == ["telescopic_cascode_ota"]


def test_load_rejects_corrupt_record(store, tmp_path):
    d = tmp_path / "kgdir"
    store.save(d)
    victim = d / "bias_block.json"
    victim.write_text("{ not json")
    with pytest.raises(KGError):
        Store.load(d)


def test_load_rejects_schema_mismatch(store, tmp_path):
    d = tmp_path / "kgdir"
    store.save(d)
    index = json.loads((d / "index.json").read_text())
    index["schema"] = 99
    (d / "index.json").write_text(json.dumps(index))
    with pytest.raises(KGError):
        Store.load(d)


def test_export_statements_share_value_nodes(store):
    lines = store.export_statements()
    creates = [l for l in lines if l.startswith("CREATE (v_")]
    values = [l.split('value: "')[1].split('"')[0] for l in creates]
    assert len(values) == len(set(values))
    assert sum(1 for v in values if v == "differential input pair") == 1
    assert any("-[:INPUT]->" in l for l in lines)
    assert any(':Circuit {id: "five_transistor_ota"' in l for l in lines)


def test_fixture_netlists_are_emittable(store):
    for entity in store.entities():
        text = emit(entity.netlist)
        assert structurally_equal(parse(text), entity.netlist)


def test_fixture_device_counts():
    sa = fixtures.strong_arm_latch().netlist
    kinds = [c.model for c in sa.components]
    assert kinds.count("nmos") == 6
    assert kinds.count("pmos") == 5
    ota = fixtures.five_transistor_ota().netlist
    assert len(ota.components) == 5
