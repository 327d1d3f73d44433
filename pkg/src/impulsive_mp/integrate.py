"""Fixed-step RK4 integration of the space-time system.

Steps always align with control breakpoints, so for piecewise-constant
controls the only error source is the RK4 truncation of each smooth piece.
State layout is z = (y0, y, yl, beta): clock, state, running cost, impulse
consumption.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .controls import PiecewiseControl, canonical_time_map, canonicalize_control
from .errors import BlowUp, ConeViolation, GridMismatch
from .problem import ProblemSpec, wnorm


def rk4_step(fun, z, h):
    k1 = fun(z)
    k2 = fun(z + 0.5 * h * k1)
    k3 = fun(z + 0.5 * h * k2)
    k4 = fun(z + h * k3)
    return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass
class Trajectory:
    s: np.ndarray            # (Q+1,) node parameters
    y0: np.ndarray           # (Q+1,)
    y: np.ndarray            # (Q+1, n)
    yl: np.ndarray           # (Q+1,)
    beta: np.ndarray         # (Q+1,)
    piece_index: np.ndarray  # (Q+1,) control piece owning [s_j, s_{j+1})
    control: PiecewiseControl

    @property
    def S(self) -> float:
        return float(self.s[-1])

    @property
    def n(self) -> int:
        return self.y.shape[1]

    def endpoint(self):
        """(y0, y, yl, beta) at S."""
        return self.y0[-1], self.y[-1], self.yl[-1], self.beta[-1]

    def node_at(self, s: float, tol: float = 1e-9) -> int:
        j = int(np.argmin(np.abs(self.s - s)))
        if abs(self.s[j] - s) > tol * max(1.0, self.S):
            raise GridMismatch(f"s={s} is not a grid node (nearest {self.s[j]})")
        return j

    def interior_mask(self) -> np.ndarray:
        """Nodes strictly inside control pieces (reference values unambiguous)."""
        tol = 1e-12 * max(1.0, self.S)
        edges = self.control.edges
        mask = np.ones(self.s.shape[0], dtype=bool)
        idx = np.searchsorted(edges, self.s)
        for j, sj in enumerate(self.s):
            k = min(idx[j], edges.shape[0] - 1)
            near = abs(edges[k] - sj) <= tol or (k > 0 and abs(edges[k - 1] - sj) <= tol)
            mask[j] = not near
        return mask

    def to_csv(self) -> str:
        n = self.n
        header = "s,y0," + ",".join(f"y{i}" for i in range(1, n + 1)) + ",yl,beta"
        rows = [header]
        for j in range(self.s.shape[0]):
            vals = [self.s[j], self.y0[j], *self.y[j], self.yl[j], self.beta[j]]
            rows.append(",".join(f"{v:.12g}" for v in vals))
        return "\n".join(rows) + "\n"


def _steps_for(durations: np.ndarray, S: float, config: RunConfig) -> list[int]:
    cap = S / config.min_total_steps
    return [max(config.substeps, int(math.ceil(d / cap))) for d in durations]


def integrate_rescaled(spec: ProblemSpec, ctrl: PiecewiseControl, zeta=None,
                       config: RunConfig | None = None) -> Trajectory:
    """Integrate the clock-dilated system: every channel scaled by (1 + zeta)."""
    config = config or RunConfig()
    if zeta is None:
        zeta = ctrl.zeta
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape != (ctrl.num_pieces,):
        raise GridMismatch("zeta must hold one value per control piece")
    if np.any(np.abs(zeta) > config.rho + 1e-15):
        raise ConeViolation(f"|zeta| exceeds rho={config.rho}")
    n = spec.n
    for k in range(ctrl.num_pieces):
        if not spec.cone.contains(ctrl.w[k]):
            raise ConeViolation(f"piece {k}: w={ctrl.w[k]} outside the cone")

    steps = _steps_for(ctrl.durations, ctrl.S, config)
    total = sum(steps)
    s_nodes = np.empty(total + 1)
    z_nodes = np.empty((total + 1, n + 3))
    piece_at = np.empty(total + 1, dtype=int)

    z = np.zeros(n + 3)
    z[1 : 1 + n] = spec.x0
    s_nodes[0] = 0.0
    z_nodes[0] = z
    piece_at[0] = 0
    limit = config.blowup

    pos = 1
    for k in range(ctrl.num_pieces):
        w0k = float(ctrl.w0[k])
        wk = ctrl.w[k]
        ak = tuple(ctrl.alpha[k])
        factor = 1.0 + float(zeta[k])
        wn = wnorm(wk)

        def rhs(zv, w0k=w0k, wk=wk, ak=ak, factor=factor, wn=wn):
            x = zv[1 : 1 + n]
            dy = (spec.f_at(x, ak) * w0k + spec.g_matrix(x) @ wk) * factor
            out = np.empty(n + 3)
            out[0] = w0k * factor
            out[1 : 1 + n] = dy
            out[1 + n] = (spec.l0_at(x, ak) * w0k + spec.lhat1_at(x, w0k, wk)) * factor
            out[2 + n] = wn * factor
            return out

        h = (ctrl.edges[k + 1] - ctrl.edges[k]) / steps[k]
        for j in range(steps[k]):
            z = rk4_step(rhs, z, h)
            if not np.all(np.isfinite(z)) or np.max(np.abs(z[1 : 1 + n])) > limit:
                raise BlowUp(f"state left the bound {limit:g} on piece {k}")
            s_nodes[pos] = ctrl.edges[k] + (j + 1) * h
            z_nodes[pos] = z
            piece_at[pos] = k
            pos += 1
        s_nodes[pos - 1] = ctrl.edges[k + 1]  # exact breakpoint

    piece_at[1:] = np.clip(
        np.searchsorted(ctrl.edges, s_nodes[1:], side="right") - 1, 0, ctrl.num_pieces - 1
    )
    return Trajectory(
        s=s_nodes, y0=z_nodes[:, 0], y=z_nodes[:, 1 : 1 + n],
        yl=z_nodes[:, 1 + n], beta=z_nodes[:, 2 + n],
        piece_index=piece_at, control=ctrl,
    )


def integrate_extended(spec: ProblemSpec, ctrl: PiecewiseControl,
                       config: RunConfig | None = None) -> Trajectory:
    """Integrate the undilated space-time system (zeta treated as zero)."""
    return integrate_rescaled(spec, ctrl, zeta=np.zeros(ctrl.num_pieces), config=config)


@dataclass
class Process:
    """A control together with its integrated trajectory."""

    control: PiecewiseControl
    traj: Trajectory

    @property
    def canonical(self) -> bool:
        return self.control.is_canonical()


def simulate(spec: ProblemSpec, ctrl: PiecewiseControl,
             config: RunConfig | None = None) -> Process:
    return Process(control=ctrl, traj=integrate_rescaled(spec, ctrl, config=config))


def canonicalize(ctrl: PiecewiseControl, traj: Trajectory):
    """Arc-length reparameterization of a control and its trajectory together.

    The trajectory samples are carried over exactly (the path is unchanged,
    only its parameterization moves), so the endpoint is grid-exact.
    """
    ctrl_c = canonicalize_control(ctrl)
    sigma = canonical_time_map(ctrl)
    s_new = np.asarray(sigma(traj.s), dtype=float)
    s_new[-1] = ctrl_c.S
    piece_at = np.clip(
        np.searchsorted(ctrl_c.edges, s_new, side="right") - 1, 0, ctrl_c.num_pieces - 1
    )
    traj_c = Trajectory(
        s=s_new, y0=traj.y0.copy(), y=traj.y.copy(), yl=traj.yl.copy(),
        beta=traj.beta.copy(), piece_index=piece_at, control=ctrl_c,
    )
    return ctrl_c, traj_c


def total_cost(spec: ProblemSpec, traj: Trajectory) -> float:
    """Terminal plus running cost of the trajectory."""
    y0S, yS, ylS, _ = traj.endpoint()
    return spec.psi_at(y0S, yS) + ylS
