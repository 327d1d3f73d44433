"""Hamiltonian, adjoint arcs, and fundamental solutions along a trajectory.

The unmaximized Hamiltonian is

    H = p0 w0 + p . (f(x,a) w0 + sum_i g_i(x) w^i) + pi |w| - lam l^e(x,w0,w,a)

with l^e = l0 w0 + lhat1.  Its maximum over the cross-section
W = {(w0,w) : w0 >= 0, w in C, w0 + |w| = 1} is attained on the vertices
(drift point, signed unit axes of the free block, cone generators), which is
what the candidate enumeration walks; interior blends are diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .config import RunConfig
from .errors import GridMismatch
from .integrate import Trajectory, rk4_step
from .problem import ProblemSpec, wnorm


@dataclass
class Multiplier:
    """Costate data (p0, p(.), pi, lam) sampled on a trajectory grid."""

    p0: float
    pi: float
    lam: float
    p: np.ndarray  # (Q+1, n)
    s: np.ndarray  # (Q+1,) grid the p samples live on

    def __post_init__(self):
        self.p = np.atleast_2d(np.asarray(self.p, dtype=float))
        self.s = np.asarray(self.s, dtype=float)
        if self.p.shape[0] != self.s.shape[0]:
            raise GridMismatch("p samples and grid lengths differ")

    @property
    def p_end(self) -> np.ndarray:
        return self.p[-1]

    def norm(self) -> float:
        """Size of (p0, p(S), pi, lam)."""
        return float(np.sqrt(self.p0**2 + self.pi**2 + self.lam**2 + self.p_end @ self.p_end))

    def scaled(self, c: float) -> "Multiplier":
        return replace(self, p0=self.p0 * c, pi=self.pi * c, lam=self.lam * c, p=self.p * c,
                       s=self.s.copy())

    def normalized(self) -> "Multiplier":
        nrm = self.norm()
        if nrm == 0:
            return self.scaled(1.0)
        return self.scaled(1.0 / nrm)

    def check_grid(self, traj: Trajectory, tol: float = 1e-9):
        if self.s.shape != traj.s.shape or np.max(np.abs(self.s - traj.s)) > tol * max(1.0, traj.S):
            raise GridMismatch("multiplier grid differs from the trajectory grid")


def hamiltonian(spec: ProblemSpec, x, p0: float, p, pi: float, lam: float,
                w0: float, w, a) -> float:
    p = np.asarray(p, dtype=float)
    value = p0 * w0 + float(p @ spec.fe(x, w0, w, a)) + pi * wnorm(w)
    return value - lam * spec.le(x, w0, w, a)


def hamiltonian_x_grad(spec: ProblemSpec, x, p0: float, p, pi: float, lam: float,
                       w0: float, w, a) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return spec.fe_jac(x, w0, w, a).T @ p - lam * spec.le_grad_x(x, w0, w, a)


def cross_section_candidates(spec: ProblemSpec, resolution: int = 1):
    """(label, w0, w) vertices of W, plus interior blends for resolution >= 2."""
    out = [("drift", 1.0, np.zeros(spec.m))]
    rays = spec.cone.unit_rays()
    out.extend((label, 0.0, w) for label, w in rays)
    for r in range(1, max(1, resolution)):
        frac = r / resolution
        for label, w in rays:
            out.append((f"blend {frac:.3g} {label}", 1.0 - frac, frac * w))
    return out


def maximize_hamiltonian(spec: ProblemSpec, x, p0: float, p, pi: float, lam: float,
                         resolution: int = 1):
    """Max of H over W x A and its argmax (first winner on ties).

    Returns (value, (w0, w, a), label).
    """
    best = None
    for label, w0, w in cross_section_candidates(spec, resolution):
        for a in spec.control_points:
            val = hamiltonian(spec, x, p0, p, pi, lam, w0, w, tuple(a))
            if best is None or val > best[0]:
                best = (val, (w0, w, tuple(a)), label)
    return best


def drift_impulse_hamiltonians(spec: ProblemSpec, x, p0: float, p, pi: float, lam: float):
    """H split by vertex type: pure drift max over A, pure impulse max over rays."""
    p = np.asarray(p, dtype=float)
    hdr = max(
        p0 + float(p @ spec.f_at(x, tuple(a))) - lam * spec.l0_at(x, tuple(a))
        for a in spec.control_points
    )
    G = spec.g_matrix(x)
    himp = None
    for _, w in spec.cone.unit_rays():
        val = float(p @ (G @ w)) + pi - lam * spec.lhat1_at(x, 0.0, w)
        himp = val if himp is None else max(himp, val)
    if himp is None:
        himp = float("-inf")
    return hdr, himp


def _grid_steps(traj: Trajectory):
    """(piece constants per node gap) captured once for grid-aligned sweeps."""
    ctrl = traj.control
    consts = []
    for j in range(traj.s.shape[0] - 1):
        k = int(traj.piece_index[j])
        consts.append((float(ctrl.w0[k]), ctrl.w[k], tuple(ctrl.alpha[k]), 1.0 + float(ctrl.zeta[k])))
    return consts


def integrate_adjoint(spec: ProblemSpec, traj: Trajectory, p_terminal, pi: float,
                      lam: float, p0: float = 0.0,
                      config: RunConfig | None = None) -> Multiplier:
    """Backward sweep of dp/ds = -dH/dx along the stored trajectory.

    The state is re-integrated backward jointly with p from the stored
    endpoint, so each RK4 stage sees a consistent (y, p) pair.
    """
    n = spec.n
    Q = traj.s.shape[0]
    consts = _grid_steps(traj)
    p_nodes = np.empty((Q, n))
    v = np.concatenate([traj.y[-1], np.asarray(p_terminal, dtype=float)])
    p_nodes[-1] = v[n:]
    for j in range(Q - 2, -1, -1):
        w0k, wk, ak, fac = consts[j]

        def rhs(vv, w0k=w0k, wk=wk, ak=ak, fac=fac):
            y, p = vv[:n], vv[n:]
            dy = spec.fe(y, w0k, wk, ak) * fac
            dp = (-(spec.fe_jac(y, w0k, wk, ak).T @ p) + lam * spec.le_grad_x(y, w0k, wk, ak)) * fac
            return np.concatenate([dy, dp])

        v = rk4_step(rhs, v, traj.s[j] - traj.s[j + 1])
        p_nodes[j] = v[n:]
    return Multiplier(p0=p0, pi=pi, lam=lam, p=p_nodes, s=traj.s.copy())


@dataclass
class FundamentalRecord:
    """M(s, s1) and the cost row mu(s, s1) for grid nodes s >= s1."""

    s1: float
    s: np.ndarray    # (R,)
    M: np.ndarray    # (R, n, n)
    mu: np.ndarray   # (R, n)

    def at_end(self):
        return self.M[-1], self.mu[-1]

    def at(self, s: float, tol: float = 1e-9):
        j = int(np.argmin(np.abs(self.s - s)))
        if abs(self.s[j] - s) > tol * max(1.0, float(self.s[-1])):
            raise GridMismatch(f"s={s} not on the record grid")
        return self.M[j], self.mu[j]


def fundamental_matrix(spec: ProblemSpec, traj: Trajectory, s1: float,
                       config: RunConfig | None = None) -> FundamentalRecord:
    """Propagate dM/ds = (dF^e/dx) M, dmu/ds = (dl^e/dx) M forward from s1.

    The base state is the stored node at s1; y is re-integrated along with the
    matrix so stages stay consistent.
    """
    n = spec.n
    j1 = traj.node_at(s1)
    consts = _grid_steps(traj)
    R = traj.s.shape[0] - j1
    Ms = np.empty((R, n, n))
    mus = np.empty((R, n))
    v = np.concatenate([traj.y[j1], np.eye(n).ravel(), np.zeros(n)])
    Ms[0] = np.eye(n)
    mus[0] = 0.0
    for idx, j in enumerate(range(j1, traj.s.shape[0] - 1)):
        w0k, wk, ak, fac = consts[j]

        def rhs(vv, w0k=w0k, wk=wk, ak=ak, fac=fac):
            y = vv[:n]
            M = vv[n : n + n * n].reshape(n, n)
            J = spec.fe_jac(y, w0k, wk, ak)
            dy = spec.fe(y, w0k, wk, ak) * fac
            dM = (J @ M) * fac
            dmu = (spec.le_grad_x(y, w0k, wk, ak) @ M) * fac
            return np.concatenate([dy, dM.ravel(), dmu])

        v = rk4_step(rhs, v, traj.s[j + 1] - traj.s[j])
        Ms[idx + 1] = v[n : n + n * n].reshape(n, n)
        mus[idx + 1] = v[n + n * n :]
    return FundamentalRecord(s1=s1, s=traj.s[j1:].copy(), M=Ms, mu=mus)


def costate_basis(spec: ProblemSpec, traj: Trajectory,
                  config: RunConfig | None = None):
    """M(S, s) and mu(S, s) for every grid node, one backward sweep.

    These satisfy dA/ds = -A J, dmu/ds = -dl^e/dx - mu J with A(S) = I,
    mu(S) = 0, so p(s) = (xi - lam dPsi/dx) A(s) - lam mu(s) sweeps the whole
    affine family of adjoint arcs at once.
    """
    n = spec.n
    Q = traj.s.shape[0]
    consts = _grid_steps(traj)
    A = np.empty((Q, n, n))
    mu = np.empty((Q, n))
    v = np.concatenate([traj.y[-1], np.eye(n).ravel(), np.zeros(n)])
    A[-1] = np.eye(n)
    mu[-1] = 0.0
    for j in range(Q - 2, -1, -1):
        w0k, wk, ak, fac = consts[j]

        def rhs(vv, w0k=w0k, wk=wk, ak=ak, fac=fac):
            y = vv[:n]
            Am = vv[n : n + n * n].reshape(n, n)
            mm = vv[n + n * n :]
            J = spec.fe_jac(y, w0k, wk, ak)
            dy = spec.fe(y, w0k, wk, ak) * fac
            dA = -(Am @ J) * fac
            dmu = (-spec.le_grad_x(y, w0k, wk, ak) - mm @ J) * fac
            return np.concatenate([dy, dA.ravel(), dmu])

        v = rk4_step(rhs, v, traj.s[j] - traj.s[j + 1])
        A[j] = v[n : n + n * n].reshape(n, n)
        mu[j] = v[n + n * n :]
    return A, mu
