"""Netlist dialect: parsing, emission, validation, rewrites."""

import math
import textwrap

import pytest

import support
from analogkit.netlist import (
    Component,
    DeviceKind,
    Netlist,
    NetlistError,
    ParseError,
    apply_sizing,
    emit,
    equivalent_up_to_net_names,
    format_value,
    load_net_roles,
    merge_nets,
    parse,
    parse_value,
    save_net_roles,
    structurally_equal,
    validate,
)


def test_empty_input_gives_empty_netlist():
    n = parse("")
    assert n.components == ()
    assert n.title == ""
    assert emit(n) == ".title\n.end\n"


def test_single_resistor_emits_suffix_form():
    n = Netlist(components=(
        Component("R1", DeviceKind.RESISTOR, ("a", "b"), {"value": 1000.0}),))
    assert "R1 a b 1k" in emit(n)


def test_parse_mos_card():
    n = parse("M1 out in 0 0 nmos W=2u L=180n nf=2")
    (c,) = n.components
    assert c.kind is DeviceKind.MOS
    assert c.pins == ("out", "in", "0", "0")
    assert c.model == "nmos"
    assert c.params["W"] == 2e-6
    assert c.params["L"] == 180e-9
    assert c.params["nf"] == 2.0


def test_comments_and_continuation():
    text = textwrap.dedent("""\
        * header comment
        .title demo amp
        M1 out in 0 0 nmos
        + W=1u
        + L=100n
        * trailing comment
        R1 out vdd 10k
        """)
    n = parse(text)
    assert n.title == "demo amp"
    assert [c.name for c in n.components] == ["M1", "R1"]
    assert n.component("M1").params == {"W": 1e-6, "L": 1e-7}


def test_net_names_are_case_sensitive():
    n = parse("R1 Net net 1k")
    assert n.component("R1").pins == ("Net", "net")
    assert len(n.nets) == 2


@pytest.mark.parametrize("token,expected", [
    ("1k", 1e3), ("2meg", 2e6), ("1g", 1e9), ("100n", 1e-7),
    ("4.7p", 4.7e-12), ("15f", 15e-15), ("1.5e2", 150.0), ("3", 3.0),
    ("-2.5u", -2.5e-6), (".5m", 0.5e-3), ("1e3k", 1e6),
])
def test_value_suffixes(token, expected):
    assert parse_value(token) == expected


def test_suffix_and_plain_forms_parse_identically():
    assert parse_value("100n") == parse_value("1e-7")
    assert parse_value("1000u") == parse_value("1m")


@pytest.mark.parametrize("bad", ["1x", "k1", "1.2.3", "", "meg", "--3"])
def test_malformed_values_rejected(bad):
    with pytest.raises(ValueError):
        parse_value(bad)


def test_format_value_round_trips_exactly():
    import random
    rng = random.Random(7)
    values = [0.0, 1e3, 2.5e6, 1e-7, 4.7e-12, -3.3, 999.9e-15, 1e23, 1e-20]
    values += [rng.uniform(0.1, 9.9) * 10.0 ** rng.randint(-18, 12)
               for _ in range(500)]
    for v in values:
        assert parse_value(format_value(v)) == v, format_value(v)


def test_format_value_prefers_engineering_suffixes():
    assert format_value(1000.0) == "1k"
    assert format_value(2.5e6) == "2.5meg"
    assert format_value(1e-7) == "100n"
    assert format_value(0.0) == "0"


@pytest.mark.parametrize("text,fragment", [
    ("Q1 a b c f", "unrecognized card"),
    ("M1 a b c nmos W=1u L=1u", "4 nets and a model"),
    ("R1 a b", "2 nets and a value"),
    ("M1 a b c d nmos L=1u", "missing required parameter W"),
    ("M1 a b c d nmos W=1u L=1u nf=1.5", "nf must be an integer"),
    (".option reltol=1e-3", "unrecognized directive"),
    ("+ W=1u", "nothing to continue"),
    ("R1 a b 1k\nR1 b c 2k", "duplicate component name"),
    (".subckt cell a\nR1 a a 1k", "never closed"),
    (".ends", ".ends without .subckt"),
    (".title one\n.title two", "duplicate .title"),
    ("M1 a b c d nmos W=1u L=1u W=2u", "duplicate parameter"),
])
def test_parse_errors(text, fragment):
    with pytest.raises(ParseError) as err:
        parse(text)
    assert fragment in str(err.value)


def test_parse_error_carries_line_number():
    with pytest.raises(ParseError) as err:
        parse("R1 a b 1k\nQ9 a b c f")
    assert err.value.line == 2


def test_everything_after_end_is_ignored():
    n = parse("R1 a b 1k\n.end\nthis is not a card")
    assert [c.name for c in n.components] == ["R1"]


def test_subcircuit_round_trip_and_arity_check():
    text = textwrap.dedent("""\
        .title wrap
        .subckt cell p1 p2
        R1 p1 p2 2k
        .ends
        X1 a b cell
        """)
    n = parse(text)
    assert n.subcircuit("cell").ports == ("p1", "p2")
    assert n.component("X1").model == "cell"
    with pytest.raises(ParseError) as err:
        parse(text.replace("X1 a b cell", "X1 a b c cell"))
    assert "3 nets" in str(err.value)


def test_junction_components_cannot_be_emitted():
    n = Netlist(components=(
        Component("J1", DeviceKind.JUNCTION, ("a", "b", "c")),))
    with pytest.raises(NetlistError):
        emit(n)


# ---------------------------------------------------------------------------
# round trip

def test_parse_emit_identity_on_random_netlists():
    for seed in range(200):
        n = support.random_netlist(seed)
        assert structurally_equal(parse(emit(n)), n), f"seed {seed}"


def test_emission_is_deterministic():
    n = support.random_netlist(42)
    assert emit(n) == emit(support.random_netlist(42))


# ---------------------------------------------------------------------------
# validation

def test_clean_diff_pair_validates_empty():
    text = textwrap.dedent("""\
        .title diff pair
        M1 outp inp tail 0 nmos W=2u L=200n
        M2 outn inn tail 0 nmos W=2u L=200n
        R1 vdd outp 10k
        R2 vdd outn 10k
        I1 tail 0 100u
        """)
    n = parse(text)
    for net in ("inp", "inn", "outp", "outn"):
        n = n.with_net_role(net, "port")
    n = n.with_net_role("vdd", "supply")
    assert validate(n) == []


def test_dangling_net_detected():
    n = parse("R1 a b 1k\nR2 b c 1k")
    codes = {(d.code, d.subject) for d in validate(n)}
    assert ("dangling_net", "a") in codes
    assert ("dangling_net", "c") in codes
    assert ("dangling_net", "b") not in codes


def test_ground_and_labeled_nets_are_not_dangling():
    n = parse("R1 0 out 1k").with_net_role("out", "output")
    assert validate(n) == []


def test_arity_violation_detected():
    bad = Component("M1", DeviceKind.MOS, ("d", "g", "s"),
                    {"W": 1e-6, "L": 1e-6}, "nmos")
    n = Netlist(components=(bad,))
    assert any(d.code == "arity" and d.subject == "M1" for d in validate(n))


def test_floating_component_detected():
    n = parse("R1 a b 1k\nR2 c d 1k\nR3 a b 2k")
    assert any(d.code == "floating_component" and d.subject == "R2"
               for d in validate(n))


def test_unknown_subcircuit_detected():
    n = parse("X1 a b mystery")
    assert any(d.code == "unknown_subcircuit" for d in validate(n))


def test_injected_defects_always_detected():
    for seed in range(60):
        base = support.labeled_clean(support.random_netlist(seed))
        dirty, net = support.inject_dangling(base, seed)
        assert any(d.code == "dangling_net" and d.subject == net
                   for d in validate(dirty)), f"seed {seed}"
        dirty, name = support.inject_arity(base, seed)
        assert any(d.code == "arity" and d.subject == name
                   for d in validate(dirty)), f"seed {seed}"


# ---------------------------------------------------------------------------
# rewrites

def test_apply_sizing_sets_parameters():
    n = parse("M1 d g s 0 nmos W=1u L=1u\nR1 d 0 1k")
    sized = apply_sizing(n, {"M1.W": 5e-6, "M1.L": 3e-7, "R1.value": 2.2e4})
    assert sized.component("M1").params["W"] == 5e-6
    assert sized.component("R1").params["value"] == 2.2e4
    # original untouched
    assert n.component("M1").params["W"] == 1e-6


@pytest.mark.parametrize("assignment,fragment", [
    ({"M9.W": 1e-6}, "unknown component"),
    ({"M1.vth": 0.3}, "no parameter"),
    ({"M1.W": -1e-6}, "must be positive"),
    ({"M1.W": math.nan}, "non-finite"),
    ({"M1": 1.0}, "malformed parameter path"),
])
def test_apply_sizing_rejects_bad_input(assignment, fragment):
    n = parse("M1 d g s 0 nmos W=1u L=1u")
    with pytest.raises(NetlistError) as err:
        apply_sizing(n, assignment)
    assert fragment in str(err.value)


def test_merge_nets_shares_single_net():
    n = parse("M1 vout1 in 0 0 nmos W=1u L=1u\nM2 out2 vout1x 0 0 nmos W=1u L=1u")
    merged = merge_nets(n, "vout1", "vout1x", survivor="vout1")
    assert merged.component("M2").pins[1] == "vout1"
    assert "vout1x" not in merged.nets
    # pin counts preserved
    assert sum(len(c.pins) for c in merged.components) == \
        sum(len(c.pins) for c in n.components)


def test_ground_cannot_be_merged_away():
    n = parse("R1 0 a 1k")
    with pytest.raises(NetlistError):
        merge_nets(n, "0", "a", survivor="a")
    merged = merge_nets(n, "0", "a", survivor="0")
    assert merged.component("R1").pins == ("0", "0")


def test_merge_nets_unions_role_labels():
    n = parse("R1 a b 1k\nR2 b c 1k").with_net_role("c", "output")
    merged = merge_nets(n, "b", "c", survivor="b")
    assert merged.net_roles["b"] == "output"


# ---------------------------------------------------------------------------
# comparison helpers

def test_structural_equality_ignores_order_and_comments():
    a = parse("* one way\nR1 a b 1k\nC1 b 0 1p")
    b = parse("C1 b 0 1p\n* другой\nR1 a b 1k")
    assert structurally_equal(a, b)


def test_structural_equality_respects_pin_order():
    a = parse("R1 a b 1k")
    b = parse("R1 b a 1k")
    assert not structurally_equal(a, b)


def test_equivalent_up_to_net_names():
    a = parse("M1 out in 0 0 nmos W=1u L=1u\nR1 out vdd 1k")
    b = parse("M1 n1 n2 0 0 nmos W=1u L=1u\nR1 n1 n3 1k")
    assert equivalent_up_to_net_names(a, b)
    c = parse("M1 n1 n2 0 0 nmos W=1u L=1u\nR1 n2 n3 1k")
    assert not equivalent_up_to_net_names(a, c)


def test_ground_must_map_to_ground():
    a = parse("R1 0 a 1k\nC1 a b 1p")
    b = parse("R1 x a 1k\nC1 a 0 1p")
    assert not equivalent_up_to_net_names(a, b)


def test_net_role_sidecar_round_trip(tmp_path):
    n = parse("R1 a b 1k").with_net_role("a", "input").with_net_role("b", "output")
    path = tmp_path / "roles.json"
    save_net_roles(n, path)
    restored = load_net_roles(parse(emit(n)), path)
    assert restored.net_roles == n.net_roles
