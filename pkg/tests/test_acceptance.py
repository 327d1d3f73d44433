"""Acceptance suite: twelve checks covering the toolkit end to end.

Each test prints one PASS/FAIL line (run with -s or -rP to see them all) and
asserts the same verdict, so the suite doubles as a report and a gate.
"""

from dataclasses import replace
from pathlib import Path

import numpy as np

from impulsive_mp.adjoint import fundamental_matrix, hamiltonian
from impulsive_mp.brackets import (
    differentiation_count,
    parse_bracket,
    required_smoothness,
)
from impulsive_mp.checker import (
    check_complementarity,
    check_first_order,
    check_higher_order,
    classify_fully_impulsive,
    find_multiplier,
    kalman_check,
    linear_chain_conditions,
)
from impulsive_mp.adjoint import Multiplier
from impulsive_mp.controls import PiecewiseControl
from impulsive_mp.integrate import (
    canonicalize,
    integrate_extended,
    simulate,
    total_cost,
)
from impulsive_mp.problem import parse_problem_text
from impulsive_mp.variations import (
    BracketGenerator,
    Needle,
    apply_needle,
    endpoint_deviation,
    predict_deviation,
    run_ladder,
    synth_bracket_control,
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

PENDULUM = """
[problem]
name = pendulum
n = 2
m1 = 1
m2 = 0
q = 1
K = 10
xcheck = 0.3 -0.2

[dynamics]
f.1 = x2
f.2 = -sin(x1)
g1.1 = 0
g1.2 = 1

[cost]
l0 = x1^2
lhat1 = 0
Psi = 0

[controlset]
a = 0
"""

PROBLEMS = Path(__file__).resolve().parent.parent / "problems"

PAIR = BracketGenerator(parse_bracket("[X1,X2]"))
TRIPLE = BracketGenerator(parse_bracket("[[X1,X2],X3]"), leaves=((1, 1), (2, 2), (3, 1)))


def _verdict(num, label, ok):
    print(f"criterion {num:2d} ({label}): {'PASS' if ok else 'FAIL'}")
    return ok


def jump(w=1.0):
    return PiecewiseControl(edges=np.array([0.0, 1.0]), w0=np.array([0.0]),
                            w=np.array([[w]]), alpha=np.zeros((1, 1)))


def rest(m):
    return PiecewiseControl(edges=np.array([0.0, 1.0]), w0=np.array([1.0]),
                            w=np.zeros((1, m)), alpha=np.zeros((1, 1)))


def test_criterion_01_switch_numbers():
    ok = (parse_bracket("[[X3,X4],[[X5,X6],X7]]").switch_number == 28
          and parse_bracket("[[X5,X6],X7]").switch_number == 10)
    assert _verdict(1, "switch numbers 28 and 10", ok)


def test_criterion_02_differentiation_counts():
    b = parse_bracket("[X3,[X4,X5]]")
    ok = (differentiation_count(b, ("L",)) == 1
          and differentiation_count(b, ("R",)) == 1
          and differentiation_count(b, ("R", "L")) == 2
          and differentiation_count(b, ("R", "R")) == 2)
    assert _verdict(2, "differentiation counts on [X3,[X4,X5]]", ok)


def test_criterion_03_smoothness_ledger():
    got = required_smoothness(parse_bracket("[[X3,X4],[[X5,X6],X7]]"), k=3)
    ok = got == {3: 5, 4: 5, 5: 6, 6: 6, 7: 5}
    assert _verdict(3, "smoothness ledger at k = 3", ok)


def test_criterion_04_nilpotent_bracket_realization(brockett, config):
    s = 0.4
    ok = True
    hspec, _ = parse_problem_text(HEISENBERG)
    end = integrate_extended(hspec, synth_bracket_control(hspec, PAIR, s), config).y[-1]
    ok &= np.linalg.norm(end - (s / 4.0) ** 2 * np.array([0.0, 0.0, 1.0])) <= 1e-10
    bspec, _ = brockett
    end = integrate_extended(bspec, synth_bracket_control(bspec, PAIR, s), config).y[-1]
    ok &= np.linalg.norm(end - (s / 4.0) ** 2 * np.array([0.0, 0.0, 2.0])) <= 1e-10
    assert _verdict(4, "bracket words exact on nilpotent pairs", bool(ok))


def test_criterion_05_expansion_order_slope(config):
    spec, _ = parse_problem_text((PROBLEMS / "sl2.txt").read_text())
    report, _ = run_ladder(spec, rest(2), lambda eps: [(TRIPLE, 0.9, eps)], config)
    ok = (not report.exact) and report.slope > 1.2
    assert _verdict(5, f"remainder slope {report.slope:.3f} > 1.2", ok)


def test_criterion_06_needle_asymptotics(kalman_problem, config):
    spec, _ = kalman_problem
    ctrl = PiecewiseControl(edges=np.array([0.0, 1.0]), w0=np.array([1.0]),
                            w=np.array([[0.5]]), alpha=np.zeros((1, 1)))
    ref = integrate_extended(spec, ctrl, config)
    c = Needle(1.0, (-1.0,), (0.0,))
    eps = 1e-3
    dev = endpoint_deviation(
        integrate_extended(spec, apply_needle(ctrl, c, 0.5, eps), config), ref)
    pred = predict_deviation(spec, ref, [(c, 0.5, eps)], config)
    ratio = float(np.linalg.norm(dev - pred)) / eps
    assert _verdict(6, f"needle remainder/eps = {ratio:.4f} <= 0.05", ratio <= 0.05)


def test_criterion_07_fundamental_matrix(config):
    spec, _ = parse_problem_text(PENDULUM)
    ctrl = PiecewiseControl(edges=np.array([0.0, 1.0]), w0=np.array([1.0]),
                            w=np.array([[0.4]]), alpha=np.zeros((1, 1)))
    traj = integrate_extended(spec, ctrl, config)
    full = fundamental_matrix(spec, traj, 0.0, config)
    M, _ = full.at_end()

    h = 1e-6
    fd = np.empty((2, 2))
    for i in range(2):
        e = np.zeros(2)
        e[i] = h
        plus = integrate_extended(replace(spec, x0=spec.x0 + e), ctrl, config).y[-1]
        minus = integrate_extended(replace(spec, x0=spec.x0 - e), ctrl, config).y[-1]
        fd[:, i] = (plus - minus) / (2 * h)
    fd_err = float(np.max(np.abs(M - fd)))

    sm = float(traj.s[traj.s.shape[0] // 2])
    M_m0, mu_m0 = full.at(sm)
    M_Sm, mu_Sm = fundamental_matrix(spec, traj, sm, config).at_end()
    co_err = max(float(np.max(np.abs(M - M_Sm @ M_m0))),
                 float(np.max(np.abs(full.at_end()[1] - (mu_Sm @ M_m0 + mu_m0)))))
    ok = fd_err <= 1e-5 and co_err <= 1e-8
    assert _verdict(7, f"flow Jacobian ({fd_err:.2e}) and cocycle ({co_err:.2e})", ok)


def test_criterion_08_rate_independence(kalman_problem, config):
    spec, _ = kalman_problem
    ctrl = PiecewiseControl(edges=np.array([0.0, 0.7, 1.5]), w0=np.array([0.2, 1.0]),
                            w=np.array([[1.3], [-0.4]]), alpha=np.zeros((2, 1)))
    base = integrate_extended(spec, ctrl, config)
    target = np.concatenate([base.y[-1], [base.y0[-1], total_cost(spec, base)]])

    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(3):
        other = integrate_extended(
            spec, ctrl.reparameterized(rng.uniform(0.3, 2.2, size=2)), config)
        got = np.concatenate([other.y[-1], [other.y0[-1], total_cost(spec, other)]])
        worst = max(worst, float(np.max(np.abs(got - target))))
    ctrl_c, traj_c = canonicalize(ctrl, base)
    resim = integrate_extended(spec, ctrl_c, config)
    got = np.concatenate([resim.y[-1], [resim.y0[-1], total_cost(spec, resim)]])
    worst = max(worst, float(np.max(np.abs(got - target))))
    assert _verdict(8, f"endpoint and cost drift {worst:.2e} <= 1e-8", worst <= 1e-8)


def test_criterion_09_scalar_jump_extremal(scalar_jump, scalar_jump_process, config):
    spec, tgt = scalar_jump
    res = find_multiplier(spec, scalar_jump_process, tgt, config)
    ok = res.feasible
    m = res.multiplier
    got = np.array([m.p0, m.p_end[0], m.pi, m.lam])
    ray = np.array([-1.0, 0.0, 0.0, 1.0]) / np.sqrt(2.0)
    ok &= float(np.arccos(np.clip(abs(got @ ray), -1.0, 1.0))) <= 1e-4
    rep1 = check_first_order(spec, scalar_jump_process, m, tgt, config)
    rep3 = check_higher_order(spec, scalar_jump_process, m, [], config)
    ok &= rep1.passed and rep1.worst() <= 1e-8
    ok &= rep3.passed and rep3.worst() <= 1e-8
    cls = classify_fully_impulsive(spec, scalar_jump_process, m, tgt, config)
    ok &= cls.options[0].name == "a" and cls.options[0].holds
    ok &= "(option (a))" in cls.verdict
    ok &= cls.consistent and cls.w0_measure == 0.0
    assert _verdict(9, "scalar jump worked extremal", bool(ok))


def test_criterion_10_kalman_pipeline(kalman_problem, config):
    spec, tgt = kalman_problem
    C = np.array([[0.0, 1.0], [0.0, 0.0]])
    E = np.array([[0.0], [1.0]])
    ok = kalman_check(C, E, config).holds

    proc = simulate(spec, jump(), config)
    res = find_multiplier(spec, proc, tgt, config)
    ok &= res.feasible
    chain = linear_chain_conditions(C, E, res.multiplier, config)
    bound = [r for r in chain.records if "bound" in r.name][0]
    ok &= bound.passed

    cls = classify_fully_impulsive(spec, proc, res.multiplier, tgt, config)
    optc = [o for o in cls.options if o.name == "c"][0]
    ok &= optc.applicable and optc.holds and cls.consistent
    assert _verdict(10, "controllable pair forces zero-time action", bool(ok))


def test_criterion_11_brockett_violation(brockett, config):
    spec, _ = brockett
    proc = simulate(spec, rest(2), config)
    pB = np.tile([0.0, 0.0, 1.0], (proc.traj.s.shape[0], 1))
    mult = Multiplier(p0=0.0, pi=0.0, lam=0.0, p=pB, s=proc.traj.s.copy())
    ok = np.array_equal(PAIR.field_value(spec, np.zeros(3)), [0.0, 0.0, 2.0])
    rep = check_higher_order(spec, proc, mult, [(PAIR.bracket, PAIR.assignment(spec))],
                             config)
    row = [r for r in rep.records if "[" in r.name][0]
    ok &= row.residual == 2.0 and not rep.passed
    for r in rep.records:
        if r.name.startswith("p . g"):
            ok &= r.residual == 0.0
    assert _verdict(11, "bracket residual exactly 2", bool(ok))


def test_criterion_12_multiplier_linearity(scalar_jump, scalar_jump_process,
                                            kalman_problem, config):
    spec, tgt = scalar_jump
    res = find_multiplier(spec, scalar_jump_process, tgt, config)
    m = res.multiplier
    ok = res.feasible
    for rep_fn in (
        lambda mm: check_first_order(spec, scalar_jump_process, mm, tgt, config),
        lambda mm: check_complementarity(spec, scalar_jump_process, mm, config),
        lambda mm: check_higher_order(spec, scalar_jump_process, mm, [], config),
    ):
        a, b = rep_fn(m), rep_fn(m.scaled(3.0))
        ok &= [r.passed for r in a.records] == [r.passed for r in b.records]

    kspec, _ = kalman_problem
    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(100):
        x = rng.normal(size=2)
        p0, pi, lam = rng.normal(size=3)
        p = rng.normal(size=2)
        w0 = rng.uniform(0.0, 1.0)
        w = rng.normal(size=1)
        c = rng.uniform(-3.0, 3.0)
        h1 = hamiltonian(kspec, x, p0, p, pi, lam, w0, w, (0.0,))
        hc = hamiltonian(kspec, x, c * p0, c * p, c * pi, c * lam, w0, w, (0.0,))
        worst = max(worst, abs(hc - c * h1) / max(1.0, abs(h1), abs(hc)))
    ok &= worst <= 1e-12
    assert _verdict(12, f"verdicts scale-free, H homogeneity defect {worst:.1e}", bool(ok))
