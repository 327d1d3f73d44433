"""Control perturbations whose first-order effect on the endpoint is known.

Two kinds of generators.  A needle swaps in a fixed value (w0, w, a, zeta) on
a shrinking window [sbar - eps, sbar]; its first-order endpoint move is the
variation vector pushed through the fundamental matrix.  A bracket generator
inserts, inside a zero-time window, a group-commutator word of coordinate
impulses realizing an iterated Lie bracket direction; the window is paid for
by running the preceding stretch of the reference control at doubled rates.
Both predictions are checked empirically by geometric-ladder re-integration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .adjoint import fundamental_matrix
from .brackets import FormalBracket
from .config import RunConfig
from .controls import PiecewiseControl, concatenated
from .errors import (
    DegenerateLadder,
    DimensionMismatch,
    EpsilonTooLarge,
    GridMismatch,
    IndexOutOfC1,
    OverlappingWindows,
)
from .fields import FieldAssignment, eval_iterated_bracket
from .integrate import Trajectory
from .problem import ProblemSpec, wnorm
from .report import LadderReport


@dataclass(frozen=True)
class Needle:
    """Constant replacement value (w0, w, a, zeta); length-1 generator."""

    w0: float
    w: tuple
    a: tuple
    zeta: float = 0.0

    @property
    def length(self) -> int:
        return 1


@dataclass(frozen=True)
class BracketGenerator:
    """A formal bracket bound to problem fields g_i through leaf indices.

    ``leaves`` maps each leaf index of the bracket to a component index
    i <= m1 of the free control block; identity on the leaf indices when
    omitted.
    """

    bracket: FormalBracket
    leaves: tuple = ()

    @property
    def length(self) -> int:
        return self.bracket.length

    def leaf_map(self) -> dict[int, int]:
        if self.leaves:
            return dict(self.leaves)
        return {j: j for j in self.bracket.seq}

    def component_for(self, j: int, m1: int) -> int:
        i = self.leaf_map().get(j)
        if i is None or not 1 <= i <= m1:
            raise IndexOutOfC1(
                f"leaf X{j} is bound to component {i}, outside the free block 1..{m1}")
        return i

    def assignment(self, spec: ProblemSpec) -> FieldAssignment:
        m1 = spec.m1
        return FieldAssignment(
            {j: spec.g[self.component_for(j, m1) - 1] for j in self.bracket.seq})

    def field_value(self, spec: ProblemSpec, x) -> np.ndarray:
        return eval_iterated_bracket(self.bracket, self.assignment(spec), x)


@dataclass(frozen=True)
class VariationVector:
    """First-order deviation direction (v0, v, vl, vv); vv is None for brackets."""

    v0: float
    v: np.ndarray
    vl: float
    vv: float | None

    def stacked(self) -> np.ndarray:
        vv = 0.0 if self.vv is None else self.vv
        return np.concatenate([[self.v0], np.asarray(self.v, dtype=float), [self.vl, vv]])


def _reference_at(spec: ProblemSpec, traj: Trajectory, sbar: float):
    """State index and the control value just left of sbar (the window side)."""
    if not 0.0 < sbar <= traj.S:
        raise DimensionMismatch(f"sbar={sbar} outside (0, {traj.S}]")
    j = traj.node_at(sbar)
    ctrl = traj.control
    k = int(np.searchsorted(ctrl.edges, sbar, side="left")) - 1
    return j, ctrl.w0[k], ctrl.w[k], tuple(ctrl.alpha[k]), float(ctrl.zeta[k])


def needle_vector(spec: ProblemSpec, traj: Trajectory, c: Needle, sbar: float) -> VariationVector:
    """The direction the endpoint moves per unit of needle width."""
    j, w0b, wb, ab, zb = _reference_at(spec, traj, sbar)
    x = traj.y[j]
    w = np.asarray(c.w, dtype=float)
    fac, facb = 1.0 + c.zeta, 1.0 + zb
    return VariationVector(
        v0=c.w0 * fac - w0b * facb,
        v=spec.fe(x, c.w0, w, c.a) * fac - spec.fe(x, w0b, wb, ab) * facb,
        vl=spec.le(x, c.w0, w, c.a) * fac - spec.le(x, w0b, wb, ab) * facb,
        vv=wnorm(w) * fac - wnorm(wb) * facb,
    )


def bracket_vector(spec: ProblemSpec, traj: Trajectory, c: BracketGenerator,
                   sbar: float) -> VariationVector:
    j = traj.node_at(sbar)
    B = c.field_value(spec, traj.y[j])
    r = c.bracket.switch_number
    return VariationVector(v0=0.0, v=B / float(r) ** c.length, vl=0.0, vv=None)


def variation_vector(spec, traj, c, sbar) -> VariationVector:
    if isinstance(c, Needle):
        return needle_vector(spec, traj, c, sbar)
    return bracket_vector(spec, traj, c, sbar)


# -- control surgery ----------------------------------------------------------


def apply_needle(ctrl: PiecewiseControl, c: Needle, sbar: float, eps: float) -> PiecewiseControl:
    """Replace the control on [sbar - eps, sbar] by the needle's value."""
    if not 0.0 < eps < sbar:
        raise EpsilonTooLarge(f"need 0 < eps < sbar, got eps={eps}, sbar={sbar}")
    sub = PiecewiseControl(
        edges=np.array([0.0, eps]),
        w0=np.array([c.w0]),
        w=np.asarray(c.w, dtype=float)[None, :],
        alpha=np.asarray(c.a, dtype=float).reshape(1, -1),
        zeta=np.array([c.zeta]),
    )
    return ctrl.spliced(sbar - eps, sbar, sub)


def bracket_word(b: FormalBracket) -> list[tuple[int, int]]:
    """(sign, leaf index) pieces of the group-commutator word, in time order.

    word(X_j) is the single piece +X_j; word([b1,b2]) runs word(b1), word(b2),
    then both inverses, where the inverse reverses order and flips signs.
    The total piece count is the switch-number of b.
    """
    if b.is_leaf:
        return [(+1, b.index)]
    w1, w2 = bracket_word(b.left), bracket_word(b.right)
    inv = lambda word: [(-sg, j) for sg, j in reversed(word)]
    return w1 + w2 + inv(w1) + inv(w2)


def synth_bracket_control(spec: ProblemSpec, c: BracketGenerator, s: float,
                          a=None) -> PiecewiseControl:
    """Piecewise-constant (w0 = 0) control whose flow realizes the bracket.

    Total duration s, switch_number(b) pieces of equal length s / r_b, each a
    signed unit impulse on one free component; from state x it reaches
    x + (s/r_b)^h B(x) + o(s^h).  The a value is irrelevant to the dynamics
    during the word (w0 = 0) but must belong to the control set.
    """
    b = c.bracket
    word = bracket_word(b)
    r = len(word)
    assert r == b.switch_number
    rows = np.zeros((r, spec.m))
    for idx, (sg, j) in enumerate(word):
        rows[idx, c.component_for(j, spec.m1) - 1] = float(sg)
    if a is None:
        a = spec.control_points[0]
    return PiecewiseControl(
        edges=np.linspace(0.0, s, r + 1),
        w0=np.zeros(r),
        w=rows,
        alpha=np.tile(np.asarray(a, dtype=float), (r, 1)),
    )


def apply_bracket_variation(spec: ProblemSpec, ctrl: PiecewiseControl, c: BracketGenerator,
                            sbar: float, eps: float) -> PiecewiseControl:
    """Make room for a zero-time bracket word ending at sbar.

    On [sbar - 2 eps^(1/h), sbar - eps^(1/h)) the reference control is run at
    doubled rates (halved durations), so the state at the window's end is what
    it used to be at sbar; the second half of the window then carries the
    word.  Outside the window nothing changes and the total duration stays S.
    """
    h = c.length
    delta = eps ** (1.0 / h)
    if not (eps > 0 and 2.0 * delta < sbar):
        raise EpsilonTooLarge(
            f"need 2*eps^(1/h) < sbar, got eps={eps}, h={h}, sbar={sbar}")
    lo = sbar - 2.0 * delta
    dilated = ctrl.restricted(lo, sbar).reparameterized(0.5)
    k = ctrl.piece_of(sbar)
    word = synth_bracket_control(spec, c, delta, a=ctrl.alpha[k])
    return ctrl.spliced(lo, sbar, concatenated(dilated, word))


def variation_window(c, sbar: float, eps: float) -> tuple[float, float]:
    if isinstance(c, Needle):
        return sbar - eps, sbar
    return sbar - 2.0 * eps ** (1.0 / c.length), sbar


def compose_variations(spec: ProblemSpec, ctrl: PiecewiseControl,
                       entries: list[tuple]) -> PiecewiseControl:
    """Apply (generator, sbar, eps) entries in time order; windows must not meet."""
    windows = []
    for c, sbar, eps in entries:
        lo, hi = variation_window(c, sbar, eps)
        if lo <= 0:
            raise EpsilonTooLarge(f"window [{lo:.6g}, {hi:.6g}] leaves [0, S]")
        windows.append((lo, hi))
    for (lo1, hi1), (lo2, hi2) in zip(windows, windows[1:]):
        if hi1 > lo2:
            raise OverlappingWindows(
                f"windows [{lo1:.6g}, {hi1:.6g}] and [{lo2:.6g}, {hi2:.6g}] overlap")
    if any(h2 <= h1 for (_, h1), (_, h2) in zip(windows, windows[1:])):
        raise OverlappingWindows("variation instants must increase")
    out = ctrl
    for c, sbar, eps in entries:
        if isinstance(c, Needle):
            out = apply_needle(out, c, sbar, eps)
        else:
            out = apply_bracket_variation(spec, out, c, sbar, eps)
    return out


# -- first-order predictions ---------------------------------------------------


def predict_deviation(spec: ProblemSpec, traj: Trajectory,
                      entries: list[tuple], config: RunConfig | None = None) -> np.ndarray:
    """Predicted endpoint deviation (y0, y, yl, beta), summed over entries.

    Needles contribute eps * (v0, M v, mu . v + vl, vv); brackets contribute
    eps * (0, M B / r^h, mu . B / r^h, 0) plus an exact eps^(1/h) on the beta
    channel.  When some sbar is not a node of traj the reference is
    re-integrated once with the variation instants forced onto the grid.
    """
    from .integrate import integrate_rescaled

    instants = [sbar for _, sbar, _ in entries]
    try:
        for sbar in instants:
            traj.node_at(sbar)
    except GridMismatch:
        traj = integrate_rescaled(spec, traj.control.refined(instants), config=config)
    n = spec.n
    out = np.zeros(1 + n + 2)
    for c, sbar, eps in entries:
        vec = variation_vector(spec, traj, c, sbar)
        M, mu = fundamental_matrix(spec, traj, sbar, config).at_end()
        out[0] += eps * vec.v0
        out[1 : n + 1] += eps * (M @ vec.v)
        out[n + 1] += eps * (mu @ vec.v + vec.vl)
        if vec.vv is None:
            out[n + 2] += eps ** (1.0 / c.length)
        else:
            out[n + 2] += eps * vec.vv
    return out


def endpoint_deviation(traj: Trajectory, ref: Trajectory) -> np.ndarray:
    a, b = traj.endpoint(), ref.endpoint()
    return np.concatenate([[a[0] - b[0]], a[1] - b[1], [a[2] - b[2], a[3] - b[3]]])


def expansion_order_estimate(epsilons, remainders, config: RunConfig | None = None) -> LadderReport:
    """Fit log ||remainder|| against log eps and compare with the o(eps) slope.

    Remainders sitting below the absolute floor count as exact (nilpotent
    cases reach machine precision and their logs are noise).
    """
    config = config or RunConfig()
    eps = [float(e) for e in epsilons]
    rem = [float(np.linalg.norm(np.atleast_1d(r))) for r in remainders]
    if len(eps) < 4:
        raise DegenerateLadder(f"need at least 4 ladder points, got {len(eps)}")
    if any(e2 >= e1 for e1, e2 in zip(eps, eps[1:])):
        raise DegenerateLadder("ladder must decrease strictly")
    floor = config.remainder_floor
    if max(rem) <= floor:
        return LadderReport(epsilons=eps, remainders=rem, slope=math.inf,
                            slope_min=config.slope_min, exact=True, floor=floor)
    logs = np.log([max(r, floor) for r in rem])
    slope = float(np.polyfit(np.log(eps), logs, 1)[0])
    return LadderReport(epsilons=eps, remainders=rem, slope=slope,
                        slope_min=config.slope_min, exact=False, floor=floor)


def run_ladder(spec: ProblemSpec, ctrl: PiecewiseControl, entries_for,
               config: RunConfig | None = None,
               predictor=None) -> tuple[LadderReport, list[dict]]:
    """Re-integrate a family of perturbed controls over the epsilon ladder.

    ``entries_for(eps)`` produces the composition entries at scale eps; the
    prediction defaults to ``predict_deviation`` on those entries.  Returns
    the fitted report plus per-rung details for CSV export.
    """
    from .integrate import integrate_rescaled

    config = config or RunConfig()
    ref = integrate_rescaled(spec, ctrl, config=config)
    rows = []
    remainders = []
    for eps in config.ladder:
        entries = entries_for(eps)
        perturbed = compose_variations(spec, ctrl, entries)
        traj = integrate_rescaled(spec, perturbed, config=config)
        dev = endpoint_deviation(traj, ref)
        pred = (predictor or predict_deviation)(spec, ref, entries, config)
        remainders.append(np.linalg.norm(dev - pred))
        rows.append({
            "eps": eps,
            "deviation": float(np.linalg.norm(dev)),
            "predicted": float(np.linalg.norm(pred)),
            "remainder": float(remainders[-1]),
        })
    report = expansion_order_estimate(list(config.ladder), remainders, config)
    return report, rows
