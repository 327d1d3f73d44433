import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from impulsive_mp.controls import (
    PiecewiseControl,
    StrictControl,
    canonical_time_map,
    canonicalize_control,
    concatenated,
    embed_strict,
    strict_from_spacetime,
    strict_sigma,
)
from impulsive_mp.errors import ConeViolation, DegenerateSpeed, DimensionMismatch


def two_piece():
    return PiecewiseControl(
        edges=np.array([0.0, 1.0, 3.0]),
        w0=np.array([1.0, 0.0]),
        w=np.array([[0.0, 0.5], [2.0, 0.0]]),
        alpha=np.array([[0.3], [0.7]]),
    )


def test_basic_geometry():
    c = two_piece()
    assert c.S == 3.0 and c.num_pieces == 2 and c.m == 2
    assert np.allclose(c.durations, [1.0, 2.0])
    assert np.allclose(c.speeds(), [1.5, 2.0])
    assert not c.is_canonical()
    assert c.piece_of(0.5) == 0 and c.piece_of(1.0) == 1 and c.piece_of(3.0) == 1
    w0, w, a, z = c.values_at(2.0)
    assert w0 == 0.0 and np.allclose(w, [2.0, 0.0]) and a[0] == 0.7 and z == 0.0


def test_construction_guards():
    with pytest.raises(DimensionMismatch):
        PiecewiseControl(edges=np.array([0.5, 1.0]), w0=np.array([1.0]),
                         w=np.array([[0.0]]), alpha=np.array([[0.0]]))
    with pytest.raises(DimensionMismatch):
        PiecewiseControl(edges=np.array([0.0, 1.0, 1.0]), w0=np.array([1.0, 1.0]),
                         w=np.zeros((2, 1)), alpha=np.zeros((2, 1)))
    with pytest.raises(ConeViolation):
        PiecewiseControl(edges=np.array([0.0, 1.0]), w0=np.array([-0.2]),
                         w=np.array([[0.0]]), alpha=np.array([[0.0]]))


def test_canonicalize_sets_unit_speed_without_touching_zeta():
    c = PiecewiseControl(edges=np.array([0.0, 1.0, 3.0]), w0=np.array([1.0, 0.0]),
                         w=np.array([[0.0, 0.5], [2.0, 0.0]]),
                         alpha=np.array([[0.3], [0.7]]), zeta=np.array([0.1, -0.2]))
    cc = canonicalize_control(c)
    assert cc.is_canonical()
    assert np.allclose(cc.durations, [1.5, 4.0])  # durations scale by the speeds
    assert np.allclose(cc.zeta, c.zeta)
    sigma = canonical_time_map(c)
    assert sigma(1.0) == pytest.approx(1.5)
    assert sigma(3.0) == pytest.approx(5.5)
    assert float(sigma(0.5)) == pytest.approx(0.75)


def test_canonicalize_rejects_stopped_pieces():
    c = PiecewiseControl(edges=np.array([0.0, 1.0]), w0=np.array([0.0]),
                         w=np.array([[0.0]]), alpha=np.array([[0.0]]))
    with pytest.raises(DegenerateSpeed):
        canonicalize_control(c)


def test_refined_keeps_values_and_splice_replaces_window():
    c = two_piece()
    r = c.refined([0.25, 2.5])
    assert r.num_pieces == 4
    for s in (0.1, 0.6, 1.7, 2.9):
        assert np.allclose(r.values_at(s)[1], c.values_at(s)[1])

    sub = PiecewiseControl(edges=np.array([0.0, 0.5]), w0=np.array([5.0]),
                           w=np.array([[0.0, 0.0]]), alpha=np.array([[9.0]]))
    sp = c.spliced(1.5, 2.0, sub)
    assert sp.S == c.S
    assert sp.values_at(1.75)[0] == 5.0
    assert sp.values_at(1.2)[0] == 0.0 and sp.values_at(2.5)[0] == 0.0
    with pytest.raises(DimensionMismatch):
        c.spliced(1.5, 2.0, sub.reparameterized(2.0))  # span mismatch


def test_restricted_shifts_to_zero():
    c = two_piece()
    r = c.restricted(0.5, 2.0)
    assert r.S == pytest.approx(1.5)
    assert np.allclose(r.values_at(0.25)[1], [0.0, 0.5])
    assert np.allclose(r.values_at(1.0)[1], [2.0, 0.0])


def test_concatenated_stacks_pieces():
    c = two_piece()
    d = concatenated(c.restricted(0.0, 1.0), c.restricted(1.0, 3.0))
    assert d.S == c.S and d.num_pieces == c.num_pieces
    assert np.allclose(d.edges, c.edges)
    assert np.allclose(d.w, c.w)


def test_reparameterized_is_inverse_of_itself():
    c = two_piece()
    r = c.reparameterized(np.array([2.0, 0.5]))
    assert np.allclose(r.durations, [2.0, 1.0])
    assert np.allclose(r.w0 * np.array([2.0, 0.5]), c.w0)
    back = r.reparameterized(np.array([0.5, 2.0]))
    assert np.allclose(back.edges, c.edges)
    assert np.allclose(back.w, c.w)
    with pytest.raises(DegenerateSpeed):
        c.reparameterized(0.0)


def test_embed_strict_and_inverse():
    strict = StrictControl(edges=np.array([0.0, 0.5, 1.0]),
                           u=np.array([[2.0], [0.0]]), a=np.array([[0.0], [1.0]]))
    ctrl = embed_strict(strict)
    assert ctrl.is_canonical()
    assert np.allclose(ctrl.durations, [1.5, 0.5])  # 0.5*(1+2), 0.5*(1+0)
    assert np.allclose(ctrl.w0, [1.0 / 3.0, 1.0])
    back = strict_from_spacetime(ctrl)
    assert np.allclose(back.edges, strict.edges)
    assert np.allclose(back.u, strict.u)
    assert np.allclose(back.a, strict.a)

    sigma = strict_sigma(strict)
    assert float(sigma(0.5)) == pytest.approx(1.5)
    assert float(sigma(1.0)) == pytest.approx(2.0)


def test_spacetime_with_impulse_has_no_strict_form():
    jump = PiecewiseControl(edges=np.array([0.0, 1.0]), w0=np.array([0.0]),
                            w=np.array([[1.0]]), alpha=np.array([[0.0]]))
    with pytest.raises(DegenerateSpeed):
        strict_from_spacetime(jump)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.1, 3.0), min_size=1, max_size=5),
       st.lists(st.floats(0.0, 2.0), min_size=5, max_size=5),
       st.lists(st.floats(-2.0, 2.0), min_size=5, max_size=5))
def test_canonicalized_controls_are_fixed_points(durs, w0s, ws):
    K = len(durs)
    c = PiecewiseControl(
        edges=np.concatenate([[0.0], np.cumsum(durs)]),
        w0=np.array(w0s[:K]), w=np.array(ws[:K]).reshape(K, 1),
        alpha=np.zeros((K, 1)),
    )
    if np.any(c.speeds() < 1e-6):
        return
    cc = canonicalize_control(c)
    assert cc.is_canonical(tol=1e-9)
    again = canonicalize_control(cc)
    assert np.allclose(again.edges, cc.edges, atol=1e-12)
