"""Extremality tests: the residual conditions a candidate minimizer must pass.

Every condition is positively homogeneous in the multiplier (p0, p, pi, lam),
so multipliers are scaled to unit size before testing and the verdicts are
scale-free.  Once the process is fixed, the same conditions are linear in the
terminal data (xi0, xi, lam); find_multiplier exploits this by turning them
into rows of a linear system, solving the equality rows exactly and scanning
the kernel for inequality feasibility.  A failed search is evidence against
extremality, never proof: residuals depend on the grid.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.optimize import nnls

from .adjoint import (
    Multiplier,
    _grid_steps,
    costate_basis,
    cross_section_candidates,
    drift_impulse_hamiltonians,
    hamiltonian,
)
from .config import RunConfig
from .errors import DimensionMismatch, HypothesisViolated, InsufficientSmoothness
from .fields import (
    FieldAssignment,
    VectorField,
    bracket_display,
    eval_field,
    iterated_bracket_field,
    lie_bracket_field,
)
from .integrate import Process, Trajectory, rk4_step
from .problem import ProblemSpec, TargetSpec, wnorm
from .report import ConditionReport, RankReport


def _empty_target(n: int) -> TargetSpec:
    return TargetSpec(A=np.zeros((0, 1 + n)), b=np.zeros(0), gamma=np.zeros((0, 1 + n)))


def _params_for(fld: VectorField, a) -> tuple:
    """Values for the field's free parameters, matched by index not position."""
    a = tuple(a)
    return tuple(a[int(nm[1:]) - 1] for nm in fld.param_names)


def _normalized(mult: Multiplier):
    nrm = mult.norm()
    scaled = mult.scaled(1.0 / nrm) if nrm > 0 else mult
    return scaled, nrm


def cone_distance(z, gamma) -> float:
    """Distance of z to {v : v . g >= 0 for every generator row g}.

    By polar decomposition this is the norm of the projection of -z onto the
    cone spanned by the generators, a nonnegative least squares problem.
    """
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    if gamma.shape[0] == 0:
        return 0.0
    z = np.asarray(z, dtype=float)
    if gamma.shape[1] != z.shape[0]:
        raise DimensionMismatch(
            f"generators live in R^{gamma.shape[1]}, point in R^{z.shape[0]}")
    coeff, _ = nnls(gamma.T, -z)
    return float(np.linalg.norm(gamma.T @ coeff))


def _node_controls(traj: Trajectory):
    """Per-node control piece values (w0, w, a), by the owning-piece index."""
    ctrl = traj.control
    idx = np.clip(traj.piece_index, 0, ctrl.num_pieces - 1)
    return [(float(ctrl.w0[k]), ctrl.w[k], tuple(ctrl.alpha[k])) for k in idx]


# -- first order conditions ----------------------------------------------------


def check_first_order(spec: ProblemSpec, process: Process, mult: Multiplier,
                      target: TargetSpec | None = None,
                      config: RunConfig | None = None) -> ConditionReport:
    """Residuals of the five stationarity conditions along the process.

    Covers: nontriviality, transversality at the endpoint, the adjoint
    equation, maximality of the reference control, and vanishing of the
    maximized Hamiltonian.
    """
    config = config or RunConfig()
    traj = process.traj
    mult.check_grid(traj)
    target = target if target is not None else _empty_target(spec.n)
    mult, nrm = _normalized(mult)
    rep = ConditionReport(title="first order conditions")
    rep.notes.append(f"multiplier scaled by 1/{nrm:.6g} to unit size")

    n = spec.n
    y0_S, y_S, yl_S, beta_S = traj.endpoint()
    p0, pi, lam, p = mult.p0, mult.pi, mult.lam, mult.p

    # (i) nontriviality: pi does not count; the residual is the size deficit
    sup_p = float(np.max(np.linalg.norm(p, axis=1)))
    size = math.sqrt(p0 * p0 + lam * lam + sup_p * sup_p)
    rep.add("multiplier (p0, p, lam) nonzero", max(0.0, 1e-9 - size), 0.0,
            note=f"size {size:.3g} against floor 1e-9")
    if y0_S > config.tol_eq:
        size2 = math.sqrt(lam * lam + sup_p * sup_p)
        rep.add("(p, lam) nonzero since y0(S) > 0", max(0.0, 1e-9 - size2), 0.0,
                note=f"size {size2:.3g} against floor 1e-9")
    rep.add("lam >= 0", max(0.0, -lam), config.tol_ineq)

    # (ii) transversality
    dpsi_t, dpsi_x = spec.psi_grad(y0_S, y_S)
    z = np.concatenate([[p0 + lam * dpsi_t], p[-1] + lam * dpsi_x])
    rep.add("endpoint covector in the target's normal set",
            cone_distance(z, target.effective_gamma()), config.tol_eq)
    if beta_S < spec.K - config.tol_eq:
        rep.add("pi = 0 on slack impulse budget", abs(pi), config.tol_eq)
    else:
        rep.add("pi free on saturated impulse budget", 0.0, config.tol_eq,
                note="budget-active branch recorded, not certified")

    # (iii) adjoint equation, as a one-step re-integration defect
    consts = _grid_steps(traj)
    worst, wloc = 0.0, None
    for j, (w0k, wk, ak, fac) in enumerate(consts):
        h = traj.s[j + 1] - traj.s[j]
        v = np.concatenate([traj.y[j], p[j]])

        def rhs(vv, w0k=w0k, wk=wk, ak=ak, fac=fac):
            y, pp = vv[:n], vv[n:]
            dy = spec.fe(y, w0k, wk, ak) * fac
            dp = (-(spec.fe_jac(y, w0k, wk, ak).T @ pp)
                  + lam * spec.le_grad_x(y, w0k, wk, ak)) * fac
            return np.concatenate([dy, dp])

        defect = float(np.linalg.norm(rk4_step(rhs, v, h)[n:] - p[j + 1])) / h
        if defect > worst:
            worst, wloc = defect, float(traj.s[j])
    rep.add("adjoint equation dp/ds = -dH/dx", worst, config.tol_eq, location=wloc)

    # (iv) + (v): reference maximality and vanishing of the maximum
    node_ctrl = _node_controls(traj)
    interior = traj.interior_mask()
    gap, gloc = 0.0, None
    van, vloc = 0.0, None
    for j in range(traj.s.shape[0]):
        x = traj.y[j]
        hmax = None
        for label, w0c, wc in cross_section_candidates(spec, config.w_resolution):
            for a in spec.control_points:
                val = hamiltonian(spec, x, p0, p[j], pi, lam, w0c, wc, tuple(a))
                hmax = val if hmax is None else max(hmax, val)
        if interior[j]:
            w0k, wk, ak = node_ctrl[j]
            href = hamiltonian(spec, x, p0, p[j], pi, lam, w0k, wk, ak)
            if hmax - href > gap:
                gap, gloc = hmax - href, float(traj.s[j])
            hmax = max(hmax, href)
        if abs(hmax) > van:
            van, vloc = abs(hmax), float(traj.s[j])
    rep.add("reference control maximizes H", gap, config.tol_eq, location=gloc)
    rep.add("maximized H vanishes", van, config.tol_eq, location=vloc)

    defect = target.endpoint_defect(y0_S, y_S)
    if defect > config.tol_eq:
        rep.notes.append(f"endpoint misses the target by {defect:.3e}")
    return rep


def check_complementarity(spec: ProblemSpec, process: Process, mult: Multiplier,
                          config: RunConfig | None = None) -> ConditionReport:
    """Drift and impulse parts of the Hamiltonian vanish separately.

    Writes H along the reference as w0 * (drift part) + (impulse part) and
    tests each factor, the vanishing of max(Hdr, Himp), and the two
    exclusion implications (a strictly negative part forces the other
    channel to carry the whole motion).
    """
    config = config or RunConfig()
    traj = process.traj
    mult.check_grid(traj)
    mult, nrm = _normalized(mult)
    rep = ConditionReport(title="complementarity")
    rep.notes.append(f"multiplier scaled by 1/{nrm:.6g} to unit size")
    p0, pi, lam, p = mult.p0, mult.pi, mult.lam, mult.p

    # sampled premise: lhat1 positively 1-homogeneous in (w0, w)
    rays = spec.cone.unit_rays()
    hom = 0.0
    probe = traj.y[:: max(1, traj.y.shape[0] // 8)]
    for x in probe:
        for _, w in rays:
            for t in (0.5, 2.0):
                hom = max(hom, abs(spec.lhat1_at(x, 0.0, t * w)
                                   - t * spec.lhat1_at(x, 0.0, w)))
        for t in (0.5, 2.0):
            hom = max(hom, abs(spec.lhat1_at(x, t * 1.0, np.zeros(spec.m))
                               - t * spec.lhat1_at(x, 1.0, np.zeros(spec.m))))
    rep.add("lhat1 positively homogeneous (sampled)", hom, config.tol_eq)

    node_ctrl = _node_controls(traj)
    interior = np.nonzero(traj.interior_mask())[0]
    G_rows = [("w0 (p0 + p.f - lam l0) = 0", 0.0, None),
              ("p.Gw + pi |w| - lam l1 = 0", 0.0, None),
              ("max(Hdr, Himp) = 0", 0.0, None)]
    impl_i = []   # nodes where Hdr < -tol
    impl_ii = []  # nodes where Himp < -tol
    hdr_j = {}
    himp_j = {}
    for j in interior:
        x = traj.y[j]
        w0k, wk, ak = node_ctrl[j]
        drift = p0 + float(p[j] @ spec.f_at(x, ak)) - lam * spec.l0_at(x, ak)
        imp = (float(p[j] @ (spec.g_matrix(x) @ wk)) + pi * wnorm(wk)
               - lam * spec.lhat1_at(x, 0.0, wk))
        hdr, himp = drift_impulse_hamiltonians(spec, x, p0, p[j], pi, lam)
        hdr_j[j], himp_j[j] = hdr, himp
        vals = (abs(w0k * drift), abs(imp),
                abs(max(hdr, himp)) if np.isfinite(himp) else abs(hdr))
        for k, v in enumerate(vals):
            if v > G_rows[k][1]:
                G_rows[k] = (G_rows[k][0], v, float(traj.s[j]))
        if hdr < -config.tol_eq:
            impl_i.append(j)
        if np.isfinite(himp) and himp < -config.tol_eq:
            impl_ii.append(j)
    for name, v, loc in G_rows:
        rep.add(name, v, config.tol_eq, location=loc)

    if impl_i:
        v = max(max(abs(node_ctrl[j][0]), abs(himp_j[j])) for j in impl_i)
        rep.add("Hdr < 0 forces w0 = 0 and Himp = 0", v, config.tol_eq,
                note=f"drift part strictly negative at {len(impl_i)} node(s)")
    else:
        rep.add("Hdr < 0 forces w0 = 0 and Himp = 0", 0.0, config.tol_eq,
                note="premise never active")
    if impl_ii:
        v = max(max(wnorm(node_ctrl[j][1]), abs(hdr_j[j])) for j in impl_ii)
        rep.add("Himp < 0 forces w = 0 and Hdr = 0", v, config.tol_eq,
                note=f"impulse part strictly negative at {len(impl_ii)} node(s)")
    else:
        rep.add("Himp < 0 forces w = 0 and Hdr = 0", 0.0, config.tol_eq,
                note="premise never active")
    return rep


# -- higher order conditions ---------------------------------------------------


def _require_flat_impulse_cost(spec, traj, tol):
    probe = traj.y[:: max(1, traj.y.shape[0] // 8)]
    for x in probe:
        for label, w in spec.cone.unit_rays():
            v = abs(spec.lhat1_at(x, 0.0, w))
            if v > tol:
                raise HypothesisViolated(
                    f"lhat1(., 0, .) is not identically zero: {v:.3e} on ray {label}")


def check_higher_order(spec: ProblemSpec, process: Process, mult: Multiplier,
                       brackets, config: RunConfig | None = None) -> ConditionReport:
    """p stays orthogonal to the controlled fields and their iterated brackets.

    ``brackets`` is a list of (bracket, assignment) pairs; fields assigned to
    leaves must come from the two-sided control block.  Hypotheses checked
    up front: flat impulsive cost, slack budget, pi = 0, enough smoothness.
    """
    config = config or RunConfig()
    traj = process.traj
    mult.check_grid(traj)
    _require_flat_impulse_cost(spec, traj, config.tol_eq)
    _, _, _, beta_S = traj.endpoint()
    if beta_S >= spec.K - config.tol_eq:
        raise HypothesisViolated(
            f"impulse budget saturated: beta(S) = {beta_S:.6g} against K = {spec.K:.6g}")
    if abs(mult.pi) > config.tol_eq * max(1.0, mult.norm()):
        raise HypothesisViolated(f"needs pi = 0, got pi = {mult.pi:.3e}")
    pool = []
    for b, asg in brackets:
        try:
            pool.append((f"p . {bracket_display(b, asg)}", iterated_bracket_field(b, asg)))
        except InsufficientSmoothness as e:
            raise HypothesisViolated(str(e)) from e

    mult, nrm = _normalized(mult)
    rep = ConditionReport(title="higher order conditions")
    rep.notes.append(f"multiplier scaled by 1/{nrm:.6g} to unit size")
    p = mult.p
    for i in range(spec.m1):
        vals = np.abs(np.einsum("jk,jk->j", p, [
            eval_field(spec.g[i], x) for x in traj.y]))
        j = int(np.argmax(vals))
        rep.add(f"p . {spec.g[i].name or f'g{i + 1}'} = 0", float(vals[j]),
                config.tol_eq, location=float(traj.s[j]))
    for name, fld in pool:
        vals = np.abs(np.einsum("jk,jk->j", p, [eval_field(fld, x) for x in traj.y]))
        j = int(np.argmax(vals))
        rep.add(f"{name} = 0", float(vals[j]), config.tol_eq, location=float(traj.s[j]))
    return rep


def check_differentiated(spec: ProblemSpec, process: Process, mult: Multiplier,
                         B, config: RunConfig | None = None) -> ConditionReport:
    """Differentiated orthogonality along the flow: the bracket-with-drift law.

    ``B`` is either a 1-based index into the controlled fields or a
    (bracket, assignment) pair with one extra degree of smoothness.  Tests
    p . ([f_a, B] w0 + sum over one-sided j of [g_j, B] w^j) against
    -lam dl/dx . B; when the cost term vanishes and every control component
    is two-sided, also the restricted form p . [f_a, B] w0 = 0.
    """
    config = config or RunConfig()
    traj = process.traj
    mult.check_grid(traj)
    if isinstance(B, int):
        if not 1 <= B <= spec.m:
            raise DimensionMismatch(f"field index {B} outside 1..{spec.m}")
        Bf = spec.g[B - 1]
        name = Bf.name or f"g{B}"
    else:
        b, asg = B
        asg.check_smoothness(b, 1)
        Bf = iterated_bracket_field(b, asg)
        name = bracket_display(b, asg)
    fB = lie_bracket_field(spec.f, Bf)
    gB = [lie_bracket_field(spec.g[j], Bf) for j in range(spec.m1, spec.m)]

    mult, nrm = _normalized(mult)
    rep = ConditionReport(title=f"differentiated orthogonality, B = {name}")
    rep.notes.append(f"multiplier scaled by 1/{nrm:.6g} to unit size")
    p, lam = mult.p, mult.lam
    node_ctrl = _node_controls(traj)
    interior = np.nonzero(traj.interior_mask())[0]
    main = (0.0, None)
    flat = (0.0, None)
    restricted = (0.0, None)
    for j in interior:
        x = traj.y[j]
        w0k, wk, ak = node_ctrl[j]
        move = eval_field(fB, x, _params_for(fB, ak)) * w0k
        for i, fld in enumerate(gB):
            move = move + eval_field(fld, x) * wk[spec.m1 + i]
        cost = lam * float(spec.le_grad_x(x, w0k, wk, ak) @ eval_field(Bf, x))
        v = abs(float(p[j] @ move) + cost)
        if v > main[0]:
            main = (v, float(traj.s[j]))
        if abs(cost) > flat[0]:
            flat = (abs(cost), float(traj.s[j]))
        v = abs(float(p[j] @ eval_field(fB, x, _params_for(fB, ak))) * w0k)
        if v > restricted[0]:
            restricted = (v, float(traj.s[j]))
    rep.add(f"p . ([f, {name}] w0 + one-sided brackets) = -lam dl/dx . {name}",
            main[0], config.tol_eq, location=main[1])
    rep.add(f"cost term lam dl/dx . {name} = 0", flat[0], config.tol_eq, location=flat[1])
    if spec.m1 == spec.m and flat[0] <= config.tol_eq:
        rep.add(f"p . [f, {name}] w0 = 0", restricted[0], config.tol_eq,
                location=restricted[1])
    else:
        rep.notes.append("restricted form not applicable "
                         "(one-sided components present or cost term nonzero)")
    return rep


# -- multiplier search ---------------------------------------------------------


@dataclass
class MultiplierSearchResult:
    """Outcome of the linear certificate search.

    ``feasible`` False is evidence against extremality at this grid, not
    proof; ``residual`` is the worst equality defect of the returned ray and
    ``margin`` the worst inequality slack (negative means violated).
    """

    feasible: bool
    multiplier: Multiplier | None
    residual: float
    margin: float
    classification: str
    null_dim: int
    notes: list[str] = dc_field(default_factory=list)
    report: ConditionReport | None = None

    def format(self) -> str:
        lines = [f"== multiplier search: {'feasible' if self.feasible else 'infeasible'} =="]
        lines.append(f"equality residual {self.residual:.3e}, inequality margin {self.margin:.3e}")
        lines.append(f"kernel dimension {self.null_dim}; classification: {self.classification}")
        lines += [f"note: {n}" for n in self.notes]
        if self.multiplier is not None:
            m = self.multiplier
            lines.append(f"p0 = {m.p0:.6g}, pi = {m.pi:.6g}, lam = {m.lam:.6g}, "
                         f"p(S) = {np.array2string(m.p_end, precision=6)}")
        if self.report is not None:
            lines.append(self.report.format())
        return "\n".join(lines)


def _unit_rows(rows, drop_tol=1e-12):
    """Scale rows to unit norm, dropping near-zero ones."""
    out = []
    if not rows:
        return out
    scale = max(float(np.linalg.norm(r)) for r in rows)
    for r in rows:
        nrm = float(np.linalg.norm(r))
        if nrm > drop_tol * max(1.0, scale):
            out.append(np.asarray(r, dtype=float) / nrm)
    return out


def _promote_pairs(eq_rows, ineq_rows, tol=1e-9):
    """Opposed inequality pairs u >= 0, -u >= 0 become equalities u = 0.

    Exact duplicates collapse to one row.  Promotion keeps the kernel exact:
    a lattice scan cannot land on the face u = 0 when the kernel basis comes
    out rotated, so faces forced by paired rows must enter the null space.
    """
    if not ineq_rows:
        return eq_rows, [], 0
    U = np.vstack(ineq_rows)
    # unit rows: ||u - v|| <= tol iff u.v >= 1 - tol^2/2, same with the sign flipped
    dots = U @ U.T
    thr = 1.0 - tol * tol / 2.0
    consumed = np.zeros(U.shape[0], dtype=bool)
    kept = []
    promoted = 0
    for i in range(U.shape[0]):
        if consumed[i]:
            continue
        later = ~consumed
        later[: i + 1] = False
        opposed = np.nonzero(later & (dots[i] <= -thr))[0]
        if opposed.size:
            eq_rows.append(U[i])
            consumed[i] = consumed[opposed[0]] = True
            promoted += 1
            continue
        consumed[np.nonzero(later & (dots[i] >= thr))[0]] = True
        kept.append(U[i])
    return eq_rows, kept, promoted


def _lattice_directions(d: int, budget: int = 250_000):
    """Deterministic primitive integer directions spanning the kernel."""
    L = 1
    for cand in (3, 2):
        if (2 * cand + 1) ** d <= budget:
            L = cand
            break
    dirs = []
    if (2 * L + 1) ** d <= budget:
        seen = set()
        for c in itertools.product(range(-L, L + 1), repeat=d):
            if not any(c):
                continue
            g = math.gcd(*(abs(v) for v in c))
            key = tuple(v // g for v in c)
            if key not in seen:
                seen.add(key)
                dirs.append(np.array(key, dtype=float))
        return dirs, L
    # kernel too wide for a full lattice: axes and axis pairs only
    for i in range(d):
        for si in (1.0, -1.0):
            e = np.zeros(d)
            e[i] = si
            dirs.append(e)
    for i in range(d):
        for j in range(i + 1, d):
            for si in (1.0, -1.0):
                for sj in (1.0, -1.0):
                    e = np.zeros(d)
                    e[i], e[j] = si, sj
                    dirs.append(e)
    return dirs, 0


def _theta_system(spec, traj, target, config, brackets, require_g, schedule):
    """Linear rows over theta = (xi0, xi, lam) for the search and its scoring."""
    n = spec.n
    D = n + 2
    A, mubar = costate_basis(spec, traj, config)
    y0_S, y_S, _, _ = traj.endpoint()
    dpsi_t, dpsi_x = spec.psi_grad(y0_S, y_S)

    # p(s_j) = xi . A[j] - lam (dpsi_x . A[j] + mubar[j]); p0 = xi0 - lam dpsi_t
    Q1 = traj.s.shape[0]
    pmat = np.zeros((Q1, n, D))
    for j in range(Q1):
        pmat[j, :, 1:1 + n] = A[j].T
        pmat[j, :, -1] = -(dpsi_x @ A[j] + mubar[j])
    p0vec = np.zeros(D)
    p0vec[0] = 1.0
    p0vec[-1] = -dpsi_t

    node_ctrl = _node_controls(traj)
    cands = [(w0c, np.asarray(wc, dtype=float), tuple(a))
             for _, w0c, wc in cross_section_candidates(spec, config.w_resolution)
             for a in spec.control_points]

    def href_row(j):
        w0k, wk, ak = node_ctrl[j]
        row = w0k * p0vec + spec.fe(traj.y[j], w0k, wk, ak) @ pmat[j]
        row[-1] -= spec.le(traj.y[j], w0k, wk, ak)
        return row

    def hcand_rows(j):
        rows = []
        for w0c, wc, a in cands:
            row = w0c * p0vec + spec.fe(traj.y[j], w0c, wc, a) @ pmat[j]
            row[-1] -= spec.le(traj.y[j], w0c, wc, a)
            rows.append(-row)  # -H(candidate) >= 0
        return rows

    bracket_fields = []
    for b, asg in brackets or []:
        bracket_fields.append(iterated_bracket_field(b, asg))
    ortho_fields = list(spec.g[: spec.m1]) if require_g else []
    ortho_fields += bracket_fields

    def structural_rows(nodes):
        eq, ineq = [], []
        interior = traj.interior_mask()
        for j in nodes:
            if interior[j]:
                eq.append(href_row(j))
                for fld in ortho_fields:
                    eq.append(eval_field(fld, traj.y[j]) @ pmat[j])
            ineq.extend(hcand_rows(j))
        for gam in target.effective_gamma():
            row = np.zeros(D)
            row[: 1 + n] = gam
            ineq.append(row)
        lam_row = np.zeros(D)
        lam_row[-1] = 1.0
        ineq.append(lam_row)
        return _unit_rows(eq), _unit_rows(ineq)

    if schedule is None:
        count = min(config.grid, Q1)
        schedule = sorted(set(np.linspace(0, Q1 - 1, count).astype(int).tolist()))
    sub_eq, sub_ineq = structural_rows(schedule)
    sub_eq, sub_ineq, promoted = _promote_pairs(sub_eq, sub_ineq)
    full_eq, full_ineq = structural_rows(range(Q1))
    full_eq, full_ineq, _ = _promote_pairs(full_eq, full_ineq)
    return {
        "pmat": pmat, "p0vec": p0vec, "schedule": schedule, "promoted": promoted,
        "eq": sub_eq, "ineq": sub_ineq, "eq_full": full_eq, "ineq_full": full_ineq,
    }


def find_multiplier(spec: ProblemSpec, process: Process, target: TargetSpec | None = None,
                    config: RunConfig | None = None, *, brackets=None,
                    require_g_orthogonality: bool = False, fix_lambda=None,
                    schedule=None) -> MultiplierSearchResult:
    """Search for a unit multiplier ray making the process stationary.

    The conditions are linear in theta = (xi0, xi, lam): the costate path is
    spanned by a basis computed once, equality rows (vanishing H along the
    reference, optional orthogonality rows) are reduced to their kernel, and
    a deterministic integer lattice in the kernel is screened against the
    inequality rows (candidate Hamiltonian signs, cone membership, lam >= 0).
    pi is pinned to 0, the slack-budget branch.  ``fix_lambda`` restricts the
    search: 0 adds the equality lam = 0, 1 keeps only rays with lam > 0.
    """
    config = config or RunConfig()
    traj = process.traj
    target = target if target is not None else _empty_target(spec.n)
    sysd = _theta_system(spec, traj, target, config, brackets,
                         require_g_orthogonality, schedule)
    D = spec.n + 2
    notes = [f"{len(sysd['eq'])} equality rows, {len(sysd['ineq'])} inequality rows "
             f"on {len(sysd['schedule'])} sampled nodes",
             f"{sysd['promoted']} opposed inequality pair(s) promoted to equalities"]

    eq = list(sysd["eq"])
    if fix_lambda == 0:
        row = np.zeros(D)
        row[-1] = 1.0
        eq.append(row)
        notes.append("lam pinned to 0")

    if eq:
        E = np.vstack(eq)
        U, svals, Vt = np.linalg.svd(E)
        cut = max(config.pivot_tol * svals[0] if svals.size else 0.0,
                  config.tol_eq * math.sqrt(len(eq)))
        rank = int(np.sum(svals > cut))
        N = Vt[rank:].T
    else:
        N = np.eye(D)
    d = N.shape[1]
    notes.append(f"kernel dimension {d}")
    if d == 0:
        return MultiplierSearchResult(False, None, math.inf, -math.inf,
                                      "none", 0, notes)

    dirs, L = _lattice_directions(d)
    notes.append(f"lattice radius {L}, {len(dirs)} direction(s)")
    C = np.stack(dirs, axis=1)                  # (d, ncand)
    Theta = N @ C                               # (D, ncand)
    P0 = sysd["p0vec"] @ Theta
    PS = sysd["pmat"][-1] @ Theta               # (n, ncand)
    LAM = Theta[-1]
    mnorm = np.sqrt(P0**2 + np.sum(PS**2, axis=0) + LAM**2)
    ok = mnorm > 1e-12
    if fix_lambda == 1:
        ok &= (LAM / np.maximum(mnorm, 1e-300)) >= 1e-9
    if not np.any(ok):
        notes.append("no admissible direction on the lattice")
        return MultiplierSearchResult(False, None, math.inf, -math.inf,
                                      "none", d, notes)
    Theta = Theta[:, ok] / mnorm[ok]

    I_sub = np.vstack(sysd["ineq"]) if sysd["ineq"] else np.zeros((0, D))
    margins = (I_sub @ Theta).min(axis=0) if I_sub.shape[0] else np.full(Theta.shape[1], np.inf)
    order = np.argsort(-margins, kind="stable")[:32]

    E_full = np.vstack(sysd["eq_full"]) if sysd["eq_full"] else np.zeros((0, D))
    I_full = np.vstack(sysd["ineq_full"]) if sysd["ineq_full"] else np.zeros((0, D))
    best = None
    for idx in order:
        th = Theta[:, idx]
        res = float(np.max(np.abs(E_full @ th))) if E_full.shape[0] else 0.0
        mar = float(np.min(I_full @ th)) if I_full.shape[0] else math.inf
        okc = mar >= -config.tol_ineq and res <= config.tol_eq
        key = (not okc, res, -mar)
        if best is None or key < best[0]:
            best = (key, th, res, mar, okc)
    _, th, res, mar, feas = best
    th = th.copy()
    if -config.tol_ineq <= th[-1] < 0.0:
        th[-1] = 0.0

    p_all = np.einsum("jnD,D->jn", sysd["pmat"], th)
    mult = Multiplier(p0=float(sysd["p0vec"] @ th), pi=0.0, lam=float(th[-1]),
                      p=p_all, s=traj.s.copy())
    classification = "abnormal" if mult.lam <= 1e-9 else "normal"
    report = check_first_order(spec, process, mult, target, config)
    return MultiplierSearchResult(feas, mult, res, mar, classification, d,
                                  notes, report)


def abnormality_profile(spec: ProblemSpec, process: Process,
                        target: TargetSpec | None = None,
                        config: RunConfig | None = None, **kw):
    """Run the search with lam pinned to 0 and required positive; classify.

    Returns (verdict, results) with verdict one of normal-found,
    abnormal-found, both-rays-found, none-found.
    """
    res0 = find_multiplier(spec, process, target, config, fix_lambda=0, **kw)
    res1 = find_multiplier(spec, process, target, config, fix_lambda=1, **kw)
    if res0.feasible and res1.feasible:
        verdict = "both-rays-found"
    elif res1.feasible:
        verdict = "normal-found"
    elif res0.feasible:
        verdict = "abnormal-found"
    else:
        verdict = "none-found"
    return verdict, {"lam=0": res0, "lam>0": res1}


# -- rank conditions -----------------------------------------------------------


def _numeric_rank(M: np.ndarray, rtol: float) -> int:
    if M.size == 0:
        return 0
    svals = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(svals > rtol * svals[0])) if svals[0] > 0 else 0


def _greedy_witness(cols, labels, needed, rtol):
    chosen, witness = [], []
    for v, lbl in zip(cols, labels):
        trial = np.column_stack(chosen + [v]) if chosen else np.atleast_2d(v).T
        if _numeric_rank(trial, rtol) > len(chosen):
            chosen.append(v)
            witness.append(lbl)
        if len(chosen) == needed:
            break
    return witness


def _pool_fields(pool):
    return [(bracket_display(b, asg), iterated_bracket_field(b, asg))
            for b, asg in (pool or [])]


def rank_I1(spec: ProblemSpec, x, pool, config: RunConfig | None = None) -> RankReport:
    """Do the two-sided fields plus the pooled brackets span R^n at x."""
    config = config or RunConfig()
    x = np.asarray(x, dtype=float)
    cols, labels = [], []
    for i in range(spec.m1):
        cols.append(eval_field(spec.g[i], x))
        labels.append(spec.g[i].name or f"g{i + 1}")
    for lbl, fld in _pool_fields(pool):
        cols.append(eval_field(fld, x))
        labels.append(lbl)
    M = np.column_stack(cols) if cols else np.zeros((spec.n, 0))
    r = _numeric_rank(M, config.rank_rtol)
    witness = _greedy_witness(cols, labels, spec.n, config.rank_rtol) if r >= spec.n else []
    return RankReport(condition="I.1", points=[x.tolist()], ranks=[r],
                      needed=spec.n, witness=witness)


def rank_I2(spec: ProblemSpec, x, a, pools, config: RunConfig | None = None) -> RankReport:
    """Spanning with one drift differentiation: brackets against f_a allowed.

    ``pools`` is a pair (plain pool, once-differentiable pool); the second
    enters through [f_a, .] and therefore needs one more degree of
    smoothness.
    """
    config = config or RunConfig()
    x = np.asarray(x, dtype=float)
    a = tuple(a)
    cols, labels = [], []
    for lbl, fld in _pool_fields(pools[0]):
        cols.append(eval_field(fld, x))
        labels.append(lbl)
    for b, asg in pools[1] or []:
        asg.check_smoothness(b, 1)
        fld = lie_bracket_field(spec.f, iterated_bracket_field(b, asg))
        cols.append(eval_field(fld, x, _params_for(fld, a)))
        labels.append(f"[f,{bracket_display(b, asg)}]")
    for i in range(spec.m1):
        gname = spec.g[i].name or f"g{i + 1}"
        cols.append(eval_field(spec.g[i], x))
        labels.append(gname)
        fld = lie_bracket_field(spec.f, spec.g[i])
        cols.append(eval_field(fld, x, _params_for(fld, a)))
        labels.append(f"[f,{gname}]")
    M = np.column_stack(cols) if cols else np.zeros((spec.n, 0))
    r = _numeric_rank(M, config.rank_rtol)
    witness = _greedy_witness(cols, labels, spec.n, config.rank_rtol) if r >= spec.n else []
    return RankReport(condition="I.2", points=[x.tolist()], ranks=[r],
                      needed=spec.n, witness=witness,
                      notes=[f"a = {tuple(float(v) for v in a)}"])


def kalman_check(C, E, config: RunConfig | None = None) -> RankReport:
    """Rank of [E, CE, ..., C^(n-1)E] with the usual threshold."""
    config = config or RunConfig()
    C = np.atleast_2d(np.asarray(C, dtype=float))
    E = np.asarray(E, dtype=float)
    if E.ndim == 1:
        E = E[:, None]
    n = C.shape[0]
    if C.shape != (n, n) or E.shape[0] != n:
        raise DimensionMismatch(f"C is {C.shape}, E is {E.shape}")
    blocks, cols, labels = [], [], []
    P = E.copy()
    for k in range(n):
        blocks.append(P)
        for j in range(E.shape[1]):
            cols.append(P[:, j])
            labels.append(f"C^{k}E[:,{j + 1}]" if E.shape[1] > 1 else f"C^{k}E")
        P = C @ P
    M = np.hstack(blocks)
    r = _numeric_rank(M, config.rank_rtol)
    witness = _greedy_witness(cols, labels, n, config.rank_rtol) if r >= n else []
    svals = np.linalg.svd(M, compute_uv=False)
    return RankReport(condition="Kalman", points=["global"], ranks=[r], needed=n,
                      witness=witness,
                      notes=[f"singular values {np.array2string(svals, precision=3)}"])


def linear_chain_conditions(C, E, mult: Multiplier,
                            config: RunConfig | None = None) -> ConditionReport:
    """For linear dynamics, p must kill the whole controllability chain.

    Tests p . C^k E = 0 for k < n and reports the resulting bound
    ||p|| <= n * (worst chain residual) / sigma_min of the Kalman matrix,
    which collapses p to zero when the pair is controllable and the chain
    residuals are at tolerance level.
    """
    config = config or RunConfig()
    C = np.atleast_2d(np.asarray(C, dtype=float))
    E = np.asarray(E, dtype=float)
    if E.ndim == 1:
        E = E[:, None]
    n = C.shape[0]
    mult, nrm = _normalized(mult)
    rep = ConditionReport(title="linear controllability chain")
    rep.notes.append(f"multiplier scaled by 1/{nrm:.6g} to unit size")
    p = mult.p
    worst = 0.0
    P = E.copy()
    blocks = []
    for k in range(n):
        vals = np.linalg.norm(p @ P, axis=1)
        j = int(np.argmax(vals))
        rep.add(f"p . C^{k}E = 0", float(vals[j]), config.tol_eq,
                location=float(mult.s[j]))
        worst = max(worst, float(vals[j]))
        blocks.append(P)
        P = C @ P
    svals = np.linalg.svd(np.hstack(blocks), compute_uv=False)
    smin = float(svals[n - 1]) if svals.size >= n else 0.0
    if smin > config.rank_rtol * float(svals[0]):
        bound = n * worst / smin
        sup_p = float(np.max(np.linalg.norm(p, axis=1)))
        rep.add("chain bound ||p|| <= n max_res / sigma_min", sup_p,
                bound * (1 + 1e-12) + 1e-15,
                note=f"sigma_min = {smin:.6g}; sqrt(n) would tighten the constant")
    else:
        rep.notes.append("pair not controllable; no norm bound follows")
    return rep


# -- fully impulsive classification ---------------------------------------------


@dataclass
class OptionReport:
    name: str
    applicable: bool
    holds: bool
    details: list = dc_field(default_factory=list)
    notes: list[str] = dc_field(default_factory=list)

    def format(self) -> str:
        if not self.applicable:
            head = f"option ({self.name}): not applicable"
        else:
            head = f"option ({self.name}): {'holds' if self.holds else 'fails'}"
        lines = [head]
        lines += [f"  note: {n}" for n in self.notes]
        for dt in self.details:
            lines += ["  " + ln for ln in dt.format().splitlines()]
        return "\n".join(lines)


@dataclass
class ClassifyReport:
    premises: ConditionReport
    options: list[OptionReport]
    verdict: str
    w0_measure: float
    consistent: bool
    notes: list[str] = dc_field(default_factory=list)

    @property
    def predicted(self) -> bool:
        return any(o.applicable and o.holds for o in self.options)

    def format(self) -> str:
        lines = ["== fully impulsive classification =="]
        lines += self.premises.format().splitlines()
        for o in self.options:
            lines.append(o.format())
        lines.append(f"verdict: {self.verdict}")
        lines.append(f"measure of {{w0 > 0}}: {self.w0_measure:.6g}")
        lines.append("process consistent with the prediction: "
                     + ("yes" if self.consistent else "NO"))
        lines += [f"note: {n}" for n in self.notes]
        return "\n".join(lines)


def _linear_structure(spec: ProblemSpec, states, config: RunConfig):
    """Detect x' = Cx + (controlled columns): constant Jacobians, no offset."""
    tol = 1e-9
    a0 = tuple(spec.control_points[0])
    C = spec.f_jac(np.zeros(spec.n), a0)
    scale = 1.0 + float(np.max(np.abs(C)))
    for x in states:
        for a in spec.control_points:
            a = tuple(a)
            if float(np.max(np.abs(spec.f_jac(x, a) - C))) > tol * scale:
                return None
            if float(np.max(np.abs(spec.f_at(x, a) - C @ x))) > tol * scale * (1 + np.linalg.norm(x)):
                return None
        if float(np.max(np.abs(spec.g_jacobians(x)))) > tol:
            return None
    E = spec.g_matrix(np.zeros(spec.n))
    return C, E


def classify_fully_impulsive(spec: ProblemSpec, process: Process, mult: Multiplier,
                             target: TargetSpec | None = None,
                             config: RunConfig | None = None,
                             pools=None, pool_depth: int = 3) -> ClassifyReport:
    """Decide whether the structural conditions force a pure-jump minimizer.

    Three routes: (a) the two-sided fields and their brackets span everywhere
    along the trajectory; (b) spanning holds after one drift differentiation,
    every control component is two-sided, and the cost is flat in x where (a)
    fails; (c) linear dynamics with a controllable pair and flat cost.  When
    one of them holds, minimizers run with w0 = 0 a.e., and the given process
    is checked against that prediction.
    """
    config = config or RunConfig()
    traj = process.traj
    target = target if target is not None else _empty_target(spec.n)
    mult.check_grid(traj)

    # multiplier-context requirements; failures are hypothesis errors
    _require_flat_impulse_cost(spec, traj, config.tol_eq)
    _, _, _, beta_S = traj.endpoint()
    if beta_S >= spec.K - config.tol_eq:
        raise HypothesisViolated(
            f"impulse budget saturated: beta(S) = {beta_S:.6g} against K = {spec.K:.6g}")
    if abs(mult.pi) > config.tol_eq * max(1.0, mult.norm()):
        raise HypothesisViolated(f"needs pi = 0, got pi = {mult.pi:.3e}")

    # structural premises are reported, not fatal: the rank options are still
    # worth evaluating when e.g. the terminal cost clocks time
    premises = ConditionReport(title="structural premises")
    A_T = target.A
    tcol = float(np.max(np.abs(A_T[:, 0]))) if A_T.shape[0] else 0.0
    premises.add("target is time-invariant", tcol, 1e-12,
                 note="largest time-column entry of the target matrix")
    tdep = "t" in spec.psi.free_vars()
    premises.add("terminal cost is time-independent", 1.0 if tdep else 0.0, 0.0,
                 passed=not tdep)
    lmin = min(spec.l0_at(x, tuple(a)) for x in traj.y[:: max(1, traj.y.shape[0] // 16)]
               for a in spec.control_points)
    premises.add("running cost l0 strictly positive (sampled)", max(0.0, -lmin),
                 config.tol_ineq, passed=lmin > 0.0, note=f"sampled min {lmin:.6g}")

    if pools is None:
        block = list(spec.g[: spec.m1])
        pools = ([], [])
        if block:
            from .fields import enumerate_bracket_pool
            pools = (enumerate_bracket_pool(block, pool_depth, k=0),
                     enumerate_bracket_pool(block, pool_depth, k=1))

    mult_n, _ = _normalized(mult)
    lam = mult_n.lam
    node_ctrl = _node_controls(traj)
    interior = np.nonzero(traj.interior_mask())[0]

    def flat_residual(nodes):
        worst, loc = 0.0, None
        for j in nodes:
            w0k, wk, ak = node_ctrl[j]
            v = abs(lam) * float(np.linalg.norm(
                spec.le_grad_x(traj.y[j], w0k, wk, ak)))
            if v > worst:
                worst, loc = v, float(traj.s[j])
        return worst, loc

    # option (a): pointwise spanning along the whole trajectory
    fields_a = [(spec.g[i].name or f"g{i + 1}", spec.g[i]) for i in range(spec.m1)]
    fields_a += _pool_fields(pools[0])
    ranks_a, bad_nodes = [], []
    for j in range(traj.s.shape[0]):
        cols = [eval_field(fld, traj.y[j]) for _, fld in fields_a]
        M = np.column_stack(cols) if cols else np.zeros((spec.n, 0))
        r = _numeric_rank(M, config.rank_rtol)
        ranks_a.append(r)
        if r < spec.n:
            bad_nodes.append(j)
    rep_a = RankReport(condition="I.1", points=[float(s) for s in traj.s],
                       ranks=ranks_a, needed=spec.n)
    if not bad_nodes:
        rep_a.witness = _greedy_witness(
            [eval_field(fld, traj.y[0]) for _, fld in fields_a],
            [lbl for lbl, _ in fields_a], spec.n, config.rank_rtol)
    opt_a = OptionReport(name="a", applicable=True, holds=rep_a.holds, details=[rep_a])

    # option (b): spanning after one drift differentiation, on top of m1 = m
    opt_b = OptionReport(name="b", applicable=spec.m1 == spec.m and bool(bad_nodes),
                         holds=False)
    if not bad_nodes:
        opt_b.notes.append("no exceptional set: option (a) already decides")
    elif spec.m1 != spec.m:
        opt_b.notes.append("one-sided control components present")
    else:
        holds_b = True
        min_rank = spec.n
        for j in range(traj.s.shape[0]):
            for a in spec.control_points:
                r = rank_I2(spec, traj.y[j], tuple(a), pools, config)
                min_rank = min(min_rank, r.ranks[0])
                if not r.holds:
                    holds_b = False
                    break
            if not holds_b:
                break
        rep_b = RankReport(condition="I.2", points=[float(s) for s in traj.s],
                           ranks=[min_rank], needed=spec.n,
                           notes=["worst rank over trajectory x control set"])
        opt_b.details.append(rep_b)
        exceptional = [j for j in bad_nodes if j in set(interior)]
        worst, loc = flat_residual(exceptional)
        flat_rep = ConditionReport(title="cost flat where spanning fails")
        flat_rep.add("lam dl/dx = 0 on the exceptional set", worst, config.tol_eq,
                     location=loc, note=f"{len(exceptional)} interior node(s)")
        opt_b.details.append(flat_rep)
        opt_b.holds = holds_b and flat_rep.passed

    # option (c): linear dynamics, controllable pair, flat cost everywhere
    probe = [traj.y[j] for j in range(0, traj.s.shape[0], max(1, traj.s.shape[0] // 8))]
    probe += [np.zeros(spec.n)] + [0.7 * e for e in np.eye(spec.n)]
    lin = _linear_structure(spec, probe, config)
    opt_c = OptionReport(name="c", applicable=lin is not None, holds=False)
    if lin is None:
        opt_c.notes.append("dynamics not linear in the state")
    else:
        C, E = lin
        kal = kalman_check(C, E, config)
        opt_c.details.append(kal)
        worst, loc = flat_residual(interior)
        flat_rep = ConditionReport(title="cost flat in x along the trajectory")
        flat_rep.add("lam dl/dx = 0 a.e.", worst, config.tol_eq, location=loc)
        opt_c.details.append(flat_rep)
        opt_c.holds = kal.holds and flat_rep.passed

    options = [opt_a, opt_b, opt_c]
    held = [o for o in options if o.applicable and o.holds]
    verdict = (f"fully impulsive: minimizers use w0 = 0 a.e. (option ({held[0].name}))"
               if held else "not established by options (a)-(c)")
    ctrl = traj.control
    w0_measure = float(np.sum(ctrl.durations[ctrl.w0 > 1e-9]))
    consistent = (not held) or w0_measure <= 1e-12 * max(1.0, ctrl.S)
    return ClassifyReport(premises=premises, options=options, verdict=verdict,
                          w0_measure=w0_measure, consistent=consistent)
