"""Piecewise-constant controls on the space-time parameter interval.

A space-time control assigns to each piece a drift intensity w0 >= 0, an
impulse rate vector w, a control-set point a, and a clock dilation zeta
(zero unless a variation put one there).  Strict-sense controls carry (u, a)
over ordinary time and embed into canonical space-time controls in closed
form, piece by piece.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConeViolation, DegenerateSpeed, DimensionMismatch
from .problem import wnorm


def _snap(points: np.ndarray, scale: float) -> np.ndarray:
    """Sort and merge near-duplicates so no zero-length piece appears."""
    pts = np.sort(np.asarray(points, dtype=float))
    if pts.size == 0:
        return pts
    keep = [pts[0]]
    tol = 1e-13 * max(1.0, scale)
    for p in pts[1:]:
        if p - keep[-1] > tol:
            keep.append(p)
    return np.array(keep)


@dataclass
class PiecewiseControl:
    edges: np.ndarray   # (K+1,), edges[0] = 0, strictly increasing
    w0: np.ndarray      # (K,)
    w: np.ndarray       # (K, m)
    alpha: np.ndarray   # (K, q)
    zeta: np.ndarray = None  # (K,), zeros unless set

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=float)
        self.w0 = np.asarray(self.w0, dtype=float)
        self.w = np.atleast_2d(np.asarray(self.w, dtype=float))
        self.alpha = np.atleast_2d(np.asarray(self.alpha, dtype=float))
        K = self.edges.shape[0] - 1
        if K < 1:
            raise DimensionMismatch("control needs at least one piece")
        if abs(self.edges[0]) > 0:
            raise DimensionMismatch("edges must start at 0")
        if np.any(np.diff(self.edges) <= 0):
            raise DimensionMismatch("edges must be strictly increasing")
        if self.w0.shape != (K,) or self.w.shape[0] != K or self.alpha.shape[0] != K:
            raise DimensionMismatch("piece arrays disagree with the edge count")
        if np.any(self.w0 < 0):
            raise ConeViolation("w0 must be nonnegative on every piece")
        if self.zeta is None:
            self.zeta = np.zeros(K)
        else:
            self.zeta = np.asarray(self.zeta, dtype=float)
            if self.zeta.shape != (K,):
                raise DimensionMismatch("zeta must hold one value per piece")

    # -- basic geometry -----------------------------------------------------

    @property
    def S(self) -> float:
        return float(self.edges[-1])

    @property
    def num_pieces(self) -> int:
        return self.edges.shape[0] - 1

    @property
    def m(self) -> int:
        return self.w.shape[1]

    @property
    def durations(self) -> np.ndarray:
        return np.diff(self.edges)

    def speeds(self) -> np.ndarray:
        """w0 + |w| per piece."""
        return self.w0 + np.abs(self.w).sum(axis=1)

    def is_canonical(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.speeds() - 1.0)) <= tol)

    def piece_of(self, s: float) -> int:
        k = int(np.searchsorted(self.edges, s, side="right")) - 1
        return min(max(k, 0), self.num_pieces - 1)

    def values_at(self, s: float):
        k = self.piece_of(s)
        return self.w0[k], self.w[k], self.alpha[k], self.zeta[k]

    # -- surgery ------------------------------------------------------------

    def refined(self, points) -> "PiecewiseControl":
        """Insert breakpoints (values unchanged)."""
        pts = _snap(np.concatenate([self.edges, np.asarray(points, dtype=float)]), self.S)
        pts = pts[(pts >= 0) & (pts <= self.S + 1e-13 * max(1.0, self.S))]
        pts[-1] = self.edges[-1]
        idx = [self.piece_of(0.5 * (a + b)) for a, b in zip(pts[:-1], pts[1:])]
        return PiecewiseControl(
            edges=pts, w0=self.w0[idx], w=self.w[idx],
            alpha=self.alpha[idx], zeta=self.zeta[idx],
        )

    def spliced(self, lo: float, hi: float, sub: "PiecewiseControl") -> "PiecewiseControl":
        """Replace the window [lo, hi] by ``sub`` (whose span must be hi - lo)."""
        if not 0.0 <= lo < hi <= self.S + 1e-12:
            raise DimensionMismatch(f"window [{lo}, {hi}] outside [0, {self.S}]")
        if abs(sub.S - (hi - lo)) > 1e-10 * max(1.0, self.S):
            raise DimensionMismatch("splice span does not match the window")
        base = self.refined([lo, hi])
        # rebuild in order: pieces before lo, sub shifted into place, pieces after hi
        edges, w0s, ws, als, zs = [0.0], [], [], [], []

        def push(e1, vals):
            edges.append(e1)
            w0s.append(vals[0]); ws.append(vals[1]); als.append(vals[2]); zs.append(vals[3])

        for k in range(base.num_pieces):
            a, b = base.edges[k], base.edges[k + 1]
            if 0.5 * (a + b) < lo:
                push(b, (base.w0[k], base.w[k], base.alpha[k], base.zeta[k]))
        for k in range(sub.num_pieces):
            push(lo + sub.edges[k + 1], (sub.w0[k], sub.w[k], sub.alpha[k], sub.zeta[k]))
        for k in range(base.num_pieces):
            a, b = base.edges[k], base.edges[k + 1]
            if 0.5 * (a + b) > hi:
                push(b, (base.w0[k], base.w[k], base.alpha[k], base.zeta[k]))
        edges = np.array(edges)
        edges[-1] = self.edges[-1]
        return PiecewiseControl(
            edges=edges, w0=np.array(w0s), w=np.vstack(ws),
            alpha=np.vstack(als), zeta=np.array(zs),
        )

    def restricted(self, lo: float, hi: float) -> "PiecewiseControl":
        """The control on [lo, hi], shifted to start at 0."""
        if not 0.0 <= lo < hi <= self.S + 1e-12:
            raise DimensionMismatch(f"window [{lo}, {hi}] outside [0, {self.S}]")
        base = self.refined([lo, hi])
        keep = [k for k in range(base.num_pieces)
                if lo < 0.5 * (base.edges[k] + base.edges[k + 1]) < hi]
        edges = np.concatenate([[0.0], base.edges[[k + 1 for k in keep]] - lo])
        edges[-1] = hi - lo
        return PiecewiseControl(
            edges=edges, w0=base.w0[keep], w=base.w[keep],
            alpha=base.alpha[keep], zeta=base.zeta[keep],
        )

    def reparameterized(self, stretch) -> "PiecewiseControl":
        """Per-piece time change: durations scale by ``stretch``, rates by 1/stretch.

        Feasibility and endpoints are unaffected; this realizes the rate
        independence of the space-time system.
        """
        r = np.broadcast_to(np.asarray(stretch, dtype=float), (self.num_pieces,))
        if np.any(r <= 0):
            raise DegenerateSpeed("stretch factors must be positive")
        edges = np.concatenate([[0.0], np.cumsum(self.durations * r)])
        return PiecewiseControl(
            edges=edges, w0=self.w0 / r, w=self.w / r[:, None],
            alpha=self.alpha.copy(), zeta=self.zeta.copy(),
        )

    def scaled_rates(self, factor: float) -> "PiecewiseControl":
        """Multiply (w0, w) by a constant; durations unchanged."""
        return replace(self, w0=self.w0 * factor, w=self.w * factor,
                       alpha=self.alpha.copy(), zeta=self.zeta.copy(),
                       edges=self.edges.copy())

    @staticmethod
    def from_samples(S: float, w0, w, alpha, zeta=None) -> "PiecewiseControl":
        """Uniform-grid constructor: one piece per sample over [0, S]."""
        w0 = np.asarray(w0, dtype=float)
        N = w0.shape[0]
        edges = np.linspace(0.0, S, N + 1)
        return PiecewiseControl(edges=edges, w0=w0, w=w, alpha=alpha, zeta=zeta)


def concatenated(*parts: PiecewiseControl) -> PiecewiseControl:
    """Run the given controls one after another."""
    if not parts:
        raise DimensionMismatch("nothing to concatenate")
    edges = [np.array([0.0])]
    offset = 0.0
    for part in parts:
        edges.append(part.edges[1:] + offset)
        offset += part.S
    return PiecewiseControl(
        edges=np.concatenate(edges),
        w0=np.concatenate([p.w0 for p in parts]),
        w=np.vstack([p.w for p in parts]),
        alpha=np.vstack([p.alpha for p in parts]),
        zeta=np.concatenate([p.zeta for p in parts]),
    )


def canonicalize_control(ctrl: PiecewiseControl, tol: float = 1e-12) -> PiecewiseControl:
    """Arc-length reparameterization: afterwards w0 + |w| = 1 on every piece.

    Raises DegenerateSpeed when a piece moves neither clock nor state.
    """
    speeds = ctrl.speeds()
    if np.any(speeds <= tol * max(1.0, float(np.max(speeds, initial=0.0)))):
        k = int(np.argmin(speeds))
        raise DegenerateSpeed(f"piece {k} has w0 + |w| = {speeds[k]:.3e}")
    return ctrl.reparameterized(speeds)


def canonical_time_map(ctrl: PiecewiseControl) -> callable:
    """sigma with sigma(s) = integral of (w0 + |w|) up to s, mapping old to new time."""
    speeds = ctrl.speeds()
    cum = np.concatenate([[0.0], np.cumsum(ctrl.durations * speeds)])

    def sigma(s):
        s = np.asarray(s, dtype=float)
        k = np.clip(np.searchsorted(ctrl.edges, s, side="right") - 1, 0, ctrl.num_pieces - 1)
        return cum[k] + (s - ctrl.edges[k]) * speeds[k]

    return sigma


# -- strict-sense controls ------------------------------------------------------


@dataclass
class StrictControl:
    """Ordinary-time control (u, a) on [0, T], piecewise constant."""

    edges: np.ndarray  # (K+1,), starts at 0
    u: np.ndarray      # (K, m)
    a: np.ndarray      # (K, q)

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=float)
        self.u = np.atleast_2d(np.asarray(self.u, dtype=float))
        self.a = np.atleast_2d(np.asarray(self.a, dtype=float))
        if np.any(np.diff(self.edges) <= 0) or abs(self.edges[0]) > 0:
            raise DimensionMismatch("edges must start at 0 and increase")
        K = self.edges.shape[0] - 1
        if self.u.shape[0] != K or self.a.shape[0] != K:
            raise DimensionMismatch("piece arrays disagree with the edge count")

    @property
    def T(self) -> float:
        return float(self.edges[-1])

    @property
    def num_pieces(self) -> int:
        return self.edges.shape[0] - 1


def embed_strict(strict: StrictControl) -> PiecewiseControl:
    """Graph-completion embedding of an ordinary control, already canonical.

    Each t-piece of length d with value u becomes an s-piece of length
    d*(1+|u|) carrying w0 = 1/(1+|u|), w = u/(1+|u|); the clock y0 then
    reproduces t and the state path is unchanged up to reparameterization.
    """
    speeds = 1.0 + np.abs(strict.u).sum(axis=1)
    edges = np.concatenate([[0.0], np.cumsum(np.diff(strict.edges) * speeds)])
    return PiecewiseControl(
        edges=edges,
        w0=1.0 / speeds,
        w=strict.u / speeds[:, None],
        alpha=strict.a.copy(),
    )


def strict_from_spacetime(ctrl: PiecewiseControl, tol: float = 1e-12) -> StrictControl:
    """Inverse of the embedding; defined only while w0 stays positive."""
    if np.any(ctrl.w0 <= tol):
        k = int(np.argmin(ctrl.w0))
        raise DegenerateSpeed(f"piece {k} has w0 = {ctrl.w0[k]:.3e}; no ordinary-time form")
    tedges = np.concatenate([[0.0], np.cumsum(ctrl.durations * ctrl.w0)])
    return StrictControl(edges=tedges, u=ctrl.w / ctrl.w0[:, None], a=ctrl.alpha.copy())


def strict_sigma(strict: StrictControl):
    """The clock sigma(t) = t + total variation of the impulse primitive up to t."""
    speeds = 1.0 + np.abs(strict.u).sum(axis=1)
    cum = np.concatenate([[0.0], np.cumsum(np.diff(strict.edges) * speeds)])

    def sigma(t):
        t = np.asarray(t, dtype=float)
        k = np.clip(np.searchsorted(strict.edges, t, side="right") - 1, 0, strict.num_pieces - 1)
        return cum[k] + (t - strict.edges[k]) * speeds[k]

    return sigma
