from dataclasses import replace

import numpy as np
import pytest
from scipy.linalg import expm

from impulsive_mp.adjoint import (
    Multiplier,
    costate_basis,
    cross_section_candidates,
    drift_impulse_hamiltonians,
    fundamental_matrix,
    hamiltonian,
    integrate_adjoint,
    maximize_hamiltonian,
)
from impulsive_mp.controls import PiecewiseControl
from impulsive_mp.errors import GridMismatch
from impulsive_mp.integrate import integrate_extended
from impulsive_mp.problem import parse_problem_text

ROTOR = """
[problem]
name = rotor
n = 2
m1 = 1
m2 = 0
q = 1
K = 10
xcheck = 1 0

[dynamics]
f.1 = x2
f.2 = -x1
g1.1 = 0
g1.2 = 0

[cost]
l0 = x1^2
lhat1 = 0
Psi = 0

[controlset]
a = 0
"""

RICCATI = """
[problem]
name = riccati
n = 1
m1 = 1
m2 = 0
q = 1
K = 10
xcheck = 1

[dynamics]
f.1 = x1^2
g1.1 = 0

[cost]
l0 = 0
lhat1 = 0
Psi = 0

[controlset]
a = 0
"""


def drift(duration, m=1):
    return PiecewiseControl(edges=np.array([0.0, duration]), w0=np.array([1.0]),
                            w=np.zeros((1, m)), alpha=np.zeros((1, 1)))


@pytest.fixture(scope="module")
def rotor():
    spec, _ = parse_problem_text(ROTOR)
    traj = integrate_extended(spec, drift(1.2))
    return spec, traj


def test_fundamental_matrix_matches_expm(rotor):
    spec, traj = rotor
    rec = fundamental_matrix(spec, traj, 0.0)
    J = np.array([[0.0, 1.0], [-1.0, 0.0]])
    M, _ = rec.at_end()
    assert np.allclose(M, expm(1.2 * J), atol=1e-9)
    half, _ = rec.at(0.6)
    assert np.allclose(half, expm(0.6 * J), atol=1e-9)
    with pytest.raises(GridMismatch):
        rec.at(0.31415926)


def test_fundamental_matrix_matches_fd_flow():
    spec, _ = parse_problem_text(RICCATI)
    traj = integrate_extended(spec, drift(0.5))
    M, _ = fundamental_matrix(spec, traj, 0.0).at_end()
    # flow of dx/ds = x^2 from x0 = 1 is x0/(1 - s x0); d/dx0 at s = 1/2 is 4
    assert M[0, 0] == pytest.approx(4.0, abs=1e-8)
    h = 1e-6
    fd = []
    for sign in (1.0, -1.0):
        bumped = replace(spec, x0=spec.x0 + sign * h)
        fd.append(integrate_extended(bumped, drift(0.5)).y[-1, 0])
    assert M[0, 0] == pytest.approx((fd[0] - fd[1]) / (2 * h), abs=1e-5)


def test_cocycle_property(rotor):
    spec, traj = rotor
    full = fundamental_matrix(spec, traj, 0.0)
    sm = float(traj.s[traj.s.shape[0] // 2])
    M_S0, mu_S0 = full.at_end()
    M_m0, mu_m0 = full.at(sm)
    tail = fundamental_matrix(spec, traj, sm)
    M_Sm, mu_Sm = tail.at_end()
    assert np.allclose(M_S0, M_Sm @ M_m0, atol=1e-8)
    assert np.allclose(mu_S0, mu_Sm @ M_m0 + mu_m0, atol=1e-8)


def test_adjoint_backward_sweep_hand_case(kalman_problem):
    spec, _ = kalman_problem
    ctrl = PiecewiseControl(edges=np.array([0.0, 1.0]), w0=np.array([1.0]),
                            w=np.array([[0.5]]), alpha=np.zeros((1, 1)))
    traj = integrate_extended(spec, ctrl)
    adj = integrate_adjoint(spec, traj, np.array([2.0, 3.0]), pi=0.0, lam=0.6)
    # J = [[0,1],[0,0]] and the running cost is state-free, so p1 is constant
    # and p2 climbs backward at rate p1
    assert np.allclose(adj.p_end, [2.0, 3.0])
    assert np.allclose(adj.p[0], [2.0, 5.0], atol=1e-12)
    mid = traj.s.shape[0] // 2
    assert adj.p[mid, 1] == pytest.approx(3.0 + 2.0 * (1.0 - traj.s[mid]), abs=1e-12)


def test_adjoint_constant_across_pure_jump(scalar_jump, scalar_jump_process):
    spec, _ = scalar_jump
    traj = scalar_jump_process.traj
    adj = integrate_adjoint(spec, traj, np.array([-4.0]), pi=0.2, lam=1.0)
    assert np.allclose(adj.p[:, 0], -4.0, atol=1e-13)


def test_costate_basis_spans_adjoint_arcs(rotor):
    spec, traj = rotor
    A, mu = costate_basis(spec, traj)
    assert np.allclose(A[-1], np.eye(2)) and np.allclose(mu[-1], 0.0)
    xi = np.array([1.2, -0.4])
    lam = 0.7
    adj = integrate_adjoint(spec, traj, xi, pi=0.0, lam=lam)
    want = np.einsum("i,jik->jk", xi, A) - lam * mu
    assert np.allclose(adj.p, want, atol=1e-8)
    assert np.abs(mu).max() > 1e-3  # the cost row actually carries weight here


def test_hamiltonian_linear_in_multiplier(kalman_problem):
    spec, _ = kalman_problem
    rng = np.random.default_rng(11)
    for _ in range(25):
        x = rng.normal(size=2)
        p0, pi, lam = rng.normal(size=3)
        p = rng.normal(size=2)
        w0, w = rng.uniform(0, 1), rng.normal(size=1)
        c = rng.uniform(-3, 3)
        a = (0.0,)
        h1 = hamiltonian(spec, x, p0, p, pi, lam, w0, w, a)
        hc = hamiltonian(spec, x, c * p0, c * p, c * pi, c * lam, w0, w, a)
        assert hc == pytest.approx(c * h1, abs=1e-12 * max(1.0, abs(h1)))


def test_vertex_maximization_on_jump_problem(scalar_jump):
    spec, _ = scalar_jump
    val, (w0, w, a), label = maximize_hamiltonian(spec, np.zeros(1), -1.0,
                                                  np.zeros(1), 0.0, 1.0)
    assert val == pytest.approx(0.0, abs=1e-14)
    assert w0 == 0.0 and abs(w[0]) == 1.0
    hdr, himp = drift_impulse_hamiltonians(spec, np.zeros(1), -1.0, np.zeros(1), 0.0, 1.0)
    assert hdr == pytest.approx(-1.0) and himp == pytest.approx(0.0)


def test_candidate_sections_enumerate_vertices_and_blends(scalar_jump):
    spec, _ = scalar_jump
    one = cross_section_candidates(spec, resolution=1)
    assert len(one) == 3 and one[0][0] == "drift"
    two = cross_section_candidates(spec, resolution=2)
    assert len(two) == 5
    assert any(lbl.startswith("blend") and w0 == 0.5 for lbl, w0, _ in two)


def test_multiplier_scaling_and_grid_check(scalar_jump_process):
    m = Multiplier(p0=3.0, pi=0.0, lam=4.0, p=np.zeros((1, 2)), s=np.zeros(1))
    assert m.norm() == pytest.approx(5.0)
    assert m.scaled(2.0).norm() == pytest.approx(10.0)
    assert m.normalized().norm() == pytest.approx(1.0)
    with pytest.raises(GridMismatch):
        m.check_grid(scalar_jump_process.traj)
