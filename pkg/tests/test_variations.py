import numpy as np
import pytest

from impulsive_mp.brackets import parse_bracket
from impulsive_mp.config import RunConfig
from impulsive_mp.controls import PiecewiseControl
from impulsive_mp.errors import (
    DegenerateLadder,
    EpsilonTooLarge,
    IndexOutOfC1,
    OverlappingWindows,
)
from impulsive_mp.integrate import integrate_extended
from impulsive_mp.problem import parse_problem_text
from impulsive_mp.variations import (
    BracketGenerator,
    Needle,
    apply_bracket_variation,
    apply_needle,
    bracket_word,
    compose_variations,
    endpoint_deviation,
    expansion_order_estimate,
    needle_vector,
    predict_deviation,
    run_ladder,
    synth_bracket_control,
    variation_vector,
    variation_window,
)

HEISENBERG = """
[problem]
name = heisenberg
n = 3
m1 = 2
m2 = 0
q = 1
K = 4
xcheck = 0 0 0

[dynamics]
f.1 = 0
f.2 = 0
f.3 = 0
g1.1 = 1
g1.2 = 0
g1.3 = -x2/2
g2.1 = 0
g2.2 = 1
g2.3 = x1/2

[cost]
l0 = 0
lhat1 = 0
Psi = t

[controlset]
a = 0
"""

PAIR = BracketGenerator(parse_bracket("[X1,X2]"))
TRIPLE = BracketGenerator(parse_bracket("[[X1,X2],X3]"), leaves=((1, 1), (2, 2), (3, 1)))


def rest(duration=1.0, m=2):
    return PiecewiseControl(edges=np.array([0.0, duration]), w0=np.array([1.0]),
                            w=np.zeros((1, m)), alpha=np.zeros((1, 1)))


def test_bracket_word_is_the_group_commutator():
    assert bracket_word(parse_bracket("[X1,X2]")) == [(1, 1), (1, 2), (-1, 1), (-1, 2)]
    word = bracket_word(parse_bracket("[[X1,X2],X3]"))
    assert len(word) == 10
    assert word[:4] == [(1, 1), (1, 2), (-1, 1), (-1, 2)]
    assert word[4] == (1, 3)
    # tail is the inverse of the head: reversed order, flipped signs
    assert word[5:9] == [(1, 2), (1, 1), (-1, 2), (-1, 1)]
    assert word[9] == (-1, 3)


def test_word_realizes_heisenberg_bracket_exactly():
    spec, _ = parse_problem_text(HEISENBERG)
    s = 0.4
    ctrl = synth_bracket_control(spec, PAIR, s)
    assert ctrl.num_pieces == 4
    assert np.allclose(ctrl.durations, s / 4)
    end = integrate_extended(spec, ctrl).y[-1]
    want = (s / 4.0) ** 2 * np.array([0.0, 0.0, 1.0])
    assert np.linalg.norm(end - want) <= 1e-10


def test_word_realizes_brockett_bracket_exactly(brockett):
    spec, _ = brockett
    s = 0.4
    end = integrate_extended(spec, synth_bracket_control(spec, PAIR, s)).y[-1]
    want = (s / 4.0) ** 2 * np.array([0.0, 0.0, 2.0])
    assert np.linalg.norm(end - want) <= 1e-10


def test_bracket_vector_scales_by_switch_number(brockett):
    spec, _ = brockett
    traj = integrate_extended(spec, rest())
    vec = variation_vector(spec, traj, PAIR, 0.5)
    assert vec.v0 == 0.0 and vec.vl == 0.0 and vec.vv is None
    assert np.allclose(vec.v, [0.0, 0.0, 2.0 / 16.0])


def test_generator_leaf_binding(brockett):
    spec, _ = brockett
    bad = BracketGenerator(parse_bracket("[X1,X2]"), leaves=((1, 1), (2, 3)))
    with pytest.raises(IndexOutOfC1):
        bad.field_value(spec, np.zeros(3))
    flipped = BracketGenerator(parse_bracket("[X1,X2]"), leaves=((1, 2), (2, 1)))
    assert np.allclose(flipped.field_value(spec, np.zeros(3)), [0.0, 0.0, -2.0])


def test_needle_vector_hand_case(scalar_jump, scalar_jump_process):
    spec, _ = scalar_jump
    vec = needle_vector(spec, scalar_jump_process.traj, Needle(1.0, (0.0,), (0.0,)), 0.5)
    assert vec.v0 == 1.0
    assert np.allclose(vec.v, [-1.0])
    assert vec.vl == 0.0 and vec.vv == -1.0


def test_needle_window_and_splice(scalar_jump):
    spec, _ = scalar_jump
    ctrl = PiecewiseControl(edges=np.array([0.0, 1.0]), w0=np.array([0.0]),
                            w=np.array([[1.0]]), alpha=np.zeros((1, 1)))
    c = Needle(1.0, (0.0,), (0.0,))
    assert variation_window(c, 0.5, 0.1) == (0.4, 0.5)
    out = apply_needle(ctrl, c, 0.5, 0.1)
    assert out.S == ctrl.S
    assert out.values_at(0.45)[0] == 1.0
    assert out.values_at(0.3)[0] == 0.0
    with pytest.raises(EpsilonTooLarge):
        apply_needle(ctrl, c, 0.5, 0.6)


def test_bracket_variation_keeps_duration(brockett):
    spec, _ = brockett
    ctrl = rest()
    out = apply_bracket_variation(spec, ctrl, PAIR, 0.9, 1e-2)
    assert out.S == pytest.approx(ctrl.S)
    lo, hi = variation_window(PAIR, 0.9, 1e-2)
    assert lo == pytest.approx(0.9 - 2e-1)
    # doubled-rate stretch then the four word pieces
    assert out.num_pieces == 1 + 1 + 4 + 1


def test_compose_rejects_overlap_and_disorder(brockett):
    spec, _ = brockett
    c = Needle(1.0, (0.0, 0.0), (0.0,))
    with pytest.raises(OverlappingWindows):
        compose_variations(spec, rest(), [(c, 0.5, 0.2), (c, 0.6, 0.2)])
    with pytest.raises(OverlappingWindows):
        compose_variations(spec, rest(), [(c, 0.8, 0.1), (c, 0.5, 0.1)])
    with pytest.raises(EpsilonTooLarge):
        compose_variations(spec, rest(), [(c, 0.05, 0.1)])


def test_needle_prediction_is_first_order(kalman_problem, config):
    spec, _ = kalman_problem
    ctrl = PiecewiseControl(edges=np.array([0.0, 1.0]), w0=np.array([1.0]),
                            w=np.array([[0.5]]), alpha=np.zeros((1, 1)))
    ref = integrate_extended(spec, ctrl, config)
    c = Needle(1.0, (-1.0,), (0.0,))
    eps = 1e-3
    dev = endpoint_deviation(
        integrate_extended(spec, apply_needle(ctrl, c, 0.5, eps), config), ref)
    pred = predict_deviation(spec, ref, [(c, 0.5, eps)], config)
    assert np.linalg.norm(dev - pred) / eps <= 0.05
    # and the prediction itself is not degenerate
    assert np.linalg.norm(pred) > 0.5 * eps


def test_ladder_exact_on_nilpotent_problem(brockett, config):
    spec, _ = brockett
    report, rows = run_ladder(spec, rest(), lambda eps: [(PAIR, 0.9, eps)], config)
    assert report.exact and report.passed
    assert all(row["remainder"] <= config.remainder_floor for row in rows)
    assert rows[0]["predicted"] > 0


def test_ladder_superlinear_on_curved_problem(config):
    spec, _ = parse_problem_text((__import__("pathlib").Path(__file__).parent.parent
                                  / "problems" / "sl2.txt").read_text())
    report, rows = run_ladder(spec, rest(), lambda eps: [(TRIPLE, 0.9, eps)], config)
    assert not report.exact
    assert report.slope > config.slope_min
    assert report.passed
    # remainders must actually shrink along the ladder
    assert rows[-1]["remainder"] < rows[0]["remainder"]


def test_order_estimate_flags_first_order_leftovers(config):
    eps = [1e-2, 5e-3, 2.5e-3, 1.25e-3]
    rep = expansion_order_estimate(eps, [3.0 * e for e in eps], config)
    assert not rep.passed
    assert rep.slope == pytest.approx(1.0, abs=0.05)


def test_order_estimate_guards():
    with pytest.raises(DegenerateLadder):
        expansion_order_estimate([1e-2, 1e-3, 1e-4], [1.0, 1.0, 1.0])
    with pytest.raises(DegenerateLadder):
        expansion_order_estimate([1e-2, 1e-2, 1e-3, 1e-4], [1.0] * 4)
