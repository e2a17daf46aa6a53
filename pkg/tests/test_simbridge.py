import textwrap

import pytest

from analogkit import netlist as nl
from analogkit import synthetic
from analogkit.simbridge import (BackendConfig, DeckEvaluator, EvalOutcome,
                                 SimbridgeError, SimulationDeck, evaluate,
                                 evaluate_batch, parse_measures)

BENCH_TEXT = """\
.title unit bench
.subckt dut t1 t2
R1 t1 t2 1k
.ends
X1 n1 n2 dut
V1 n1 0 1
R2 n2 0 1k
.end
"""


def unit_deck(measurements=("sphere",), slots=("R1.value",)):
    return SimulationDeck(name="unit", netlist=nl.parse(BENCH_TEXT),
                          measurements=measurements, slots=slots,
                          port_roles={"t1": "input", "t2": "output"})


def test_outcome_status_validation():
    with pytest.raises(SimbridgeError):
        EvalOutcome("weird")
    assert EvalOutcome("ok").values == {}


def test_deck_sizing_reaches_subcircuit_body():
    deck = unit_deck()
    sized = deck.sized({"R1.value": 2200.0})
    body = sized.dut_body()
    assert body.component("R1").params["value"] == 2200.0
    # the original deck is untouched
    assert deck.dut_body().component("R1").params["value"] == 1000.0
    assert "R1 t1 t2 2.2k" in sized.render()


def test_deck_rejects_unknown_slot():
    deck = unit_deck()
    with pytest.raises(SimbridgeError, match="no slots"):
        deck.sized({"R9.value": 1.0})


def test_deck_requires_dut_subcircuit():
    bare = nl.parse(".title none\nR1 a 0 1k\n.end\n")
    deck = SimulationDeck("x", bare, (), ())
    with pytest.raises(SimbridgeError, match="subcircuit"):
        deck.dut_body()


def test_backend_config_validation():
    with pytest.raises(SimbridgeError):
        BackendConfig(kind="quantum")
    with pytest.raises(SimbridgeError):
        BackendConfig(kind="synthetic")
    with pytest.raises(SimbridgeError):
        BackendConfig(kind="external", command="sim file.sp",
                      parse_rules={"g": "g=(.*)"})  # no {deck}
    with pytest.raises(SimbridgeError):
        BackendConfig(kind="external", command="sim {deck}")
    with pytest.raises(SimbridgeError):
        BackendConfig.from_dict({"kind": "synthetic", "model": "sphere",
                                 "extra": 1})


def test_backend_config_dict_roundtrip():
    cfg = BackendConfig(kind="external", command="run {deck} {outdir}",
                        timeout_s=5.0, parse_rules={"g": r"g=(\S+)"},
                        keep_files=True, process_cap=2)
    again = BackendConfig.from_dict(cfg.to_dict())
    assert again == cfg


def test_parse_measures_last_occurrence_wins():
    text = "gain = 10.0\nnoise\ngain = 12.5\n"
    with pytest.warns(UserWarning, match="last occurrence"):
        values, missing = parse_measures(text, {"gain": r"gain = (\S+)"})
    assert values == {"gain": 12.5}
    assert missing == []


def test_parse_measures_reports_missing():
    values, missing = parse_measures("nothing here",
                                     {"gain": r"gain = (\S+)",
                                      "bw": r"bw = (\S+)"})
    assert values == {}
    assert missing == ["gain", "bw"]


def test_synthetic_evaluation_filters_declared_metrics():
    backend = BackendConfig(kind="synthetic", model="sphere")
    deck = unit_deck(measurements=("sphere",))
    out = evaluate(deck, {"R1.value": 0.55}, backend)
    assert out.status == "ok"
    assert out.values == {"sphere": 0.0}


def test_synthetic_missing_declared_metric_fails():
    backend = BackendConfig(kind="synthetic", model="sphere")
    deck = unit_deck(measurements=("sphere", "bogus"))
    out = evaluate(deck, {"R1.value": 0.5}, backend)
    assert out.status == "failed"
    assert "bogus" in out.detail


def test_unknown_model_fails_gracefully():
    backend = BackendConfig(kind="synthetic", model="nope")
    out = evaluate(None, {"x": 1.0}, backend)
    assert out.status == "failed"
    assert "nope" in out.detail


def test_model_exception_becomes_failure():
    name = "exploding_model_for_test"

    @synthetic.register(name)
    def exploding(deck, assignment, params):
        raise RuntimeError("boom")

    try:
        backend = BackendConfig(kind="synthetic", model=name)
        out = evaluate(None, {"x": 1.0}, backend)
        assert out.status == "failed"
        assert "boom" in out.detail
    finally:
        del synthetic.MODELS[name]


def test_batch_evaluation_order_preserved():
    backend = BackendConfig(kind="synthetic", model="sphere", process_cap=3)
    assignments = [{"p": 0.55 + k / 10.0} for k in range(5)]
    outs = evaluate_batch(None, assignments, backend)
    values = [o.values["sphere"] for o in outs]
    assert values == pytest.approx([(k / 10.0) ** 2 for k in range(5)])


def test_deck_evaluator_merges_and_derives():
    name = "paired_metrics_for_test"

    @synthetic.register(name)
    def paired(deck, assignment, params):
        values = {"a": 10.0, "b": 4.0}
        if deck is not None:
            values = {m: values[m] for m in deck.measurements}
        return values, {}

    try:
        deck_a = unit_deck(measurements=("a",))
        deck_b = unit_deck(measurements=("b",))
        backend = BackendConfig(kind="synthetic", model=name)
        ev = DeckEvaluator([deck_a, deck_b], backend,
                           derived={"diff": ("sub", "a", "b")})
        out = ev({})
        assert out.status == "ok"
        assert out.values == {"a": 10.0, "b": 4.0, "diff": 6.0}
    finally:
        del synthetic.MODELS[name]


def test_deck_evaluator_propagates_failure():
    backend = BackendConfig(kind="synthetic", model="sphere")
    ev = DeckEvaluator([unit_deck(measurements=("sphere", "bogus"))],
                       backend)
    out = ev({"R1.value": 0.5})
    assert out.status == "failed"
    assert "unit" in out.detail


def test_deck_evaluator_rejects_unknown_derived_op():
    backend = BackendConfig(kind="synthetic", model="sphere")
    with pytest.raises(SimbridgeError):
        DeckEvaluator([None], backend, derived={"x": ("mul", "a", "b")})


# ---------------------------------------------------------------------------
# external command backend


def _write_mock_sim(tmp_path, body):
    script = tmp_path / "mock_sim.py"
    script.write_text(textwrap.dedent(body), encoding="utf-8")
    return script


def test_external_backend_end_to_end(tmp_path):
    script = _write_mock_sim(tmp_path, """\
        import pathlib, sys
        deck = pathlib.Path(sys.argv[1]).read_text()
        assert ".subckt dut" in deck
        print("gain = 61.25")
        print("bw = 1.5e6")
        """)
    backend = BackendConfig(
        kind="external", command=f"python3 {script} {{deck}} {{outdir}}",
        timeout_s=30.0,
        parse_rules={"gain": r"gain = (\S+)", "bw": r"bw = (\S+)"},
        workdir=str(tmp_path / "runs"))
    deck = unit_deck(measurements=("gain", "bw"))
    out = evaluate(deck, {"R1.value": 470.0}, backend)
    assert out.status == "ok"
    assert out.values == {"gain": 61.25, "bw": 1.5e6}


def test_external_timeout_fails(tmp_path):
    script = _write_mock_sim(tmp_path, """\
        import time
        time.sleep(10)
        """)
    backend = BackendConfig(
        kind="external", command=f"python3 {script} {{deck}}",
        timeout_s=0.8, parse_rules={"g": r"g=(\S+)"})
    out = evaluate(unit_deck(("g",)), {}, backend)
    assert out.status == "failed"
    assert "timeout" in out.detail


def test_external_nonzero_exit_fails(tmp_path):
    script = _write_mock_sim(tmp_path, """\
        import sys
        sys.stderr.write("license server unreachable")
        sys.exit(3)
        """)
    backend = BackendConfig(
        kind="external", command=f"python3 {script} {{deck}}",
        timeout_s=30.0, parse_rules={"g": r"g=(\S+)"})
    out = evaluate(unit_deck(("g",)), {}, backend)
    assert out.status == "failed"
    assert "exited 3" in out.detail
    assert "license" in out.detail


def test_external_unparsed_metric_fails(tmp_path):
    script = _write_mock_sim(tmp_path, 'print("gain = 10")\n')
    backend = BackendConfig(
        kind="external", command=f"python3 {script} {{deck}}",
        timeout_s=30.0,
        parse_rules={"gain": r"gain = (\S+)", "pm": r"pm = (\S+)"})
    out = evaluate(unit_deck(("gain", "pm")), {}, backend)
    assert out.status == "failed"
    assert "pm" in out.detail


def test_external_keep_files(tmp_path):
    script = _write_mock_sim(tmp_path, 'print("g = 1.0")\n')
    runs = tmp_path / "keepruns"
    backend = BackendConfig(
        kind="external", command=f"python3 {script} {{deck}}",
        timeout_s=30.0, parse_rules={"g": r"g = (\S+)"},
        workdir=str(runs), keep_files=True)
    out = evaluate(unit_deck(("g",)), {}, backend)
    assert out.status == "ok"
    kept = list(runs.glob("*/deck.sp"))
    assert len(kept) == 1
