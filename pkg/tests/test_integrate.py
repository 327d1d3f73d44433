import math

import numpy as np
import pytest

from impulsive_mp.config import RunConfig
from impulsive_mp.controls import PiecewiseControl, StrictControl, embed_strict
from impulsive_mp.errors import BlowUp, ConeViolation, GridMismatch
from impulsive_mp.integrate import (
    canonicalize,
    integrate_extended,
    integrate_rescaled,
    rk4_step,
    simulate,
    total_cost,
)
from impulsive_mp.problem import parse_problem_text

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


def drift(duration):
    return PiecewiseControl(edges=np.array([0.0, duration]), w0=np.array([1.0]),
                            w=np.array([[0.0]]), alpha=np.array([[0.0]]))


def test_double_integrator_endpoint(kalman_problem, config):
    spec, _ = kalman_problem
    strict = StrictControl(edges=np.array([0.0, 0.5, 1.0]),
                           u=np.array([[2.0], [0.0]]), a=np.array([[0.0], [1.0]]))
    proc = simulate(spec, embed_strict(strict), config)
    y0S, yS, ylS, betaS = proc.traj.endpoint()
    assert proc.canonical
    assert proc.traj.S == pytest.approx(2.0)
    assert y0S == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(yS, [0.75, 1.0], atol=1e-12)
    assert ylS == pytest.approx(1.0, abs=1e-12)
    assert betaS == pytest.approx(1.0, abs=1e-12)
    assert total_cost(spec, proc.traj) == pytest.approx(1.75, abs=1e-12)


def test_rk4_kernel_is_fourth_order():
    def err(steps):
        z = np.array([1.0])
        h = 1.0 / steps
        for _ in range(steps):
            z = rk4_step(lambda v: v, z, h)
        return abs(z[0] - math.e)

    ratio = err(20) / err(40)
    assert 13.0 < ratio < 19.0


def test_riccati_drift_matches_closed_form(config):
    spec, _ = parse_problem_text(RICCATI)
    traj = integrate_extended(spec, drift(0.5), config)
    # dx/ds = x^2, x(0) = 1 has x(s) = 1/(1-s)
    assert traj.y[-1, 0] == pytest.approx(2.0, abs=1e-9)


def test_blowup_guard(config):
    spec, _ = parse_problem_text(RICCATI)
    with pytest.raises(BlowUp):
        integrate_extended(spec, drift(2.0), config)


def test_zeta_validation(kalman_problem, config):
    spec, _ = kalman_problem
    ctrl = drift(1.0)
    with pytest.raises(GridMismatch):
        integrate_rescaled(spec, ctrl, zeta=np.array([0.1, 0.1]), config=config)
    with pytest.raises(ConeViolation):
        integrate_rescaled(spec, ctrl, zeta=np.array([0.9]), config=config)


def test_cone_enforced_on_one_sided_channels(config):
    text = RICCATI.replace("m1 = 1", "m1 = 0").replace("m2 = 0", "m2 = 1")
    spec, _ = parse_problem_text(text)
    bad = PiecewiseControl(edges=np.array([0.0, 1.0]), w0=np.array([1.0]),
                           w=np.array([[-1.0]]), alpha=np.array([[0.0]]))
    with pytest.raises(ConeViolation):
        integrate_extended(spec, bad, config)


def test_dilation_equals_rate_scaling(kalman_problem, config):
    # running the clock at (1 + zeta) is the same vector field as scaling
    # every rate by (1 + zeta), so the node values agree to the bit
    spec, _ = kalman_problem
    ctrl = PiecewiseControl(edges=np.array([0.0, 1.0, 2.0]), w0=np.array([0.5, 1.0]),
                            w=np.array([[1.0], [-0.5]]), alpha=np.zeros((2, 1)))
    c = 0.25
    dilated = integrate_rescaled(spec, ctrl, zeta=np.full(2, c), config=config)
    scaled = integrate_extended(spec, ctrl.scaled_rates(1.0 + c), config=config)
    assert np.array_equal(dilated.s, scaled.s)
    assert np.allclose(dilated.y, scaled.y, atol=1e-14)
    assert np.allclose(dilated.y0, scaled.y0, atol=1e-14)
    assert np.allclose(dilated.yl, scaled.yl, atol=1e-14)
    assert np.allclose(dilated.beta, scaled.beta, atol=1e-14)


def test_endpoint_is_rate_independent(kalman_problem, config):
    spec, _ = kalman_problem
    ctrl = PiecewiseControl(edges=np.array([0.0, 0.7, 1.5]), w0=np.array([0.2, 1.0]),
                            w=np.array([[1.3], [-0.4]]), alpha=np.zeros((2, 1)))
    rng = np.random.default_rng(7)
    base = simulate(spec, ctrl, config).traj
    for _ in range(3):
        r = rng.uniform(0.3, 2.5, size=2)
        other = simulate(spec, ctrl.reparameterized(r), config).traj
        assert np.allclose(other.y[-1], base.y[-1], atol=1e-8)
        assert other.y0[-1] == pytest.approx(base.y0[-1], abs=1e-8)
        assert other.yl[-1] == pytest.approx(base.yl[-1], abs=1e-8)
        assert other.beta[-1] == pytest.approx(base.beta[-1], abs=1e-8)


def test_canonicalize_carries_samples_exactly(kalman_problem, config):
    spec, _ = kalman_problem
    ctrl = PiecewiseControl(edges=np.array([0.0, 1.0]), w0=np.array([0.5]),
                            w=np.array([[1.0]]), alpha=np.zeros((1, 1)))
    traj = integrate_extended(spec, ctrl, config)
    ctrl_c, traj_c = canonicalize(ctrl, traj)
    assert ctrl_c.is_canonical()
    assert traj_c.s[-1] == ctrl_c.S
    assert np.array_equal(traj_c.y, traj.y)
    resim = integrate_extended(spec, ctrl_c, config)
    assert np.allclose(resim.y[-1], traj.y[-1], atol=1e-8)


def test_trajectory_node_lookup_and_csv(kalman_problem, config):
    spec, _ = kalman_problem
    traj = integrate_extended(spec, drift(1.5), config)
    assert traj.node_at(0.0) == 0
    assert traj.node_at(traj.S) == traj.s.shape[0] - 1
    with pytest.raises(GridMismatch):
        traj.node_at(0.31415926)

    mask = traj.interior_mask()
    assert not mask[0] and not mask[-1] and mask[1:-1].all()

    csv = traj.to_csv()
    lines = csv.strip().split("\n")
    assert lines[0] == "s,y0,y1,y2,yl,beta"
    assert len(lines) == traj.s.shape[0] + 1
    assert float(lines[-1].split(",")[0]) == pytest.approx(traj.S)
