"""Problem data: dynamics, costs, control set, cone, target, and the file format.

Controls split into a drift intensity w0 >= 0 and an impulse-rate vector w
constrained to the cone C = R^m1 x C2, with C2 finitely generated and
pointed.  Impulse magnitude |w| is measured in the 1-norm throughout, so the
cross-section {w0 + |w| = 1} is a polytope and Hamiltonian maxima sit on its
vertices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.optimize import nnls

from .config import RunConfig
from .errors import ConeViolation, DimensionMismatch, ParseError
from .expressions import Expr, compile_exprs, parse_expression
from .fields import VectorField, jacobian_exprs, state_names
from .report import ConditionReport


def wnorm(w) -> float:
    """Impulse magnitude |w| (1-norm)."""
    return float(np.sum(np.abs(w)))


@lru_cache(maxsize=None)
def _compiled(exprs: tuple[Expr, ...], names: tuple[str, ...]):
    return compile_exprs(exprs, names)


@lru_cache(maxsize=None)
def _compiled_grad(exprs: tuple[Expr, ...], names: tuple[str, ...], wrt: tuple[str, ...]):
    grads = tuple(e.diff(nm) for e in exprs for nm in wrt)
    return compile_exprs(grads, names)


# -- cone ---------------------------------------------------------------------


@dataclass
class ConeSpec:
    """C = R^m1 x C2 with C2 = cone(generators), pointed."""

    m1: int
    m2: int
    generators: np.ndarray  # (r, m2), rows are |.|=1 generators; r may be 0

    def __post_init__(self):
        self.generators = np.atleast_2d(np.asarray(self.generators, dtype=float))
        if self.generators.size == 0:
            self.generators = np.zeros((0, self.m2))
        if self.generators.shape[1] != self.m2:
            raise DimensionMismatch(
                f"cone generators have {self.generators.shape[1]} components, expected m2={self.m2}"
            )
        norms = np.abs(self.generators).sum(axis=1)
        if np.any(norms == 0):
            raise ConeViolation("zero cone generator")
        self.generators = self.generators / norms[:, None]

    @property
    def m(self) -> int:
        return self.m1 + self.m2

    def contains(self, w, tol: float = 1e-9) -> bool:
        w = np.asarray(w, dtype=float)
        if w.shape != (self.m,):
            raise DimensionMismatch(f"w has shape {w.shape}, expected ({self.m},)")
        tail = w[self.m1 :]
        if self.m2 == 0:
            return True
        scale = 1.0 + wnorm(tail)
        if self.generators.shape[0] == 0:
            return bool(np.max(np.abs(tail), initial=0.0) <= tol * scale)
        _, resid = nnls(self.generators.T, tail)
        return bool(resid <= tol * scale)

    def pointed(self, tol: float = 1e-9) -> bool:
        """No generator's opposite lies back in the cone."""
        G = self.generators.T
        for row in self.generators:
            if G.shape[1] == 0:
                break
            _, resid = nnls(G, -row)
            if resid <= tol:
                return False
        return True

    def unit_rays(self) -> list[tuple[str, np.ndarray]]:
        """Vertices of the cross-section {w in C : |w| = 1}."""
        out = []
        for i in range(self.m1):
            for sign, tag in ((1.0, "+"), (-1.0, "-")):
                w = np.zeros(self.m)
                w[i] = sign
                out.append((f"{tag}e{i + 1}", w))
        for ridx, row in enumerate(self.generators):
            w = np.zeros(self.m)
            w[self.m1 :] = row
            out.append((f"gen{ridx + 1}", w))
        return out


# -- target -------------------------------------------------------------------


@dataclass
class TargetSpec:
    """Affine target {(t,x) : A (t,x) = b} with an approximating cone Gamma.

    Gamma rows are directions in R^(1+n); when none are supplied the tangent
    space of the affine set is used, encoded as +/- pairs of an orthonormal
    basis.
    """

    A: np.ndarray          # (k, 1+n); k may be 0
    b: np.ndarray          # (k,)
    gamma: np.ndarray      # (r, 1+n); r may be 0

    def __post_init__(self):
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
        self.gamma = np.atleast_2d(np.asarray(self.gamma, dtype=float))
        if self.A.size == 0:
            self.A = np.zeros((0, self.dim))
        if self.gamma.size == 0:
            self.gamma = np.zeros((0, self.dim))
        if self.A.shape[0] != self.b.shape[0]:
            raise DimensionMismatch("A_T and b_T row counts differ")

    @property
    def dim(self) -> int:
        if self.A.size:
            return self.A.shape[1]
        return self.gamma.shape[1]

    def effective_gamma(self) -> np.ndarray:
        """Supplied generators, or the +/- tangent basis of the affine part."""
        if self.gamma.shape[0]:
            return self.gamma
        if self.A.shape[0] == 0:
            basis = np.eye(self.dim)
        else:
            from scipy.linalg import null_space

            basis = null_space(self.A).T
        if basis.size == 0:
            return np.zeros((0, self.dim))
        return np.vstack([basis, -basis])

    def tangent_defect(self) -> float:
        """How far the cone leaves the tangent space of the affine part."""
        g = self.effective_gamma()
        if self.A.shape[0] == 0 or g.shape[0] == 0:
            return 0.0
        return float(np.max(np.abs(self.A @ g.T)))

    def endpoint_defect(self, t: float, x) -> float:
        if self.A.shape[0] == 0:
            return 0.0
        v = np.concatenate(([t], np.asarray(x, dtype=float)))
        return float(np.max(np.abs(self.A @ v - self.b)))


# -- problem ------------------------------------------------------------------


@dataclass
class ProblemSpec:
    n: int
    q: int
    cone: ConeSpec
    f: VectorField                      # drift, may read a1..aq
    g: tuple[VectorField, ...]          # controlled fields g1..gm, state only
    l0: Expr                            # running cost of drifting, l0(x, a)
    lhat1: Expr                         # impulse-rate cost, lhat1(x, w0, w), 1-homogeneous
    psi: Expr                           # terminal cost Psi(t, x)
    control_points: np.ndarray          # (k, q) finite control set A
    K: float                            # impulse budget, may be inf
    x0: np.ndarray                      # initial state
    name: str = ""

    def __post_init__(self):
        self.control_points = np.atleast_2d(np.asarray(self.control_points, dtype=float))
        self.x0 = np.asarray(self.x0, dtype=float)
        if self.f.dim != self.n:
            raise DimensionMismatch("drift dimension differs from n")
        if len(self.g) != self.cone.m:
            raise DimensionMismatch(f"{len(self.g)} controlled fields for m={self.cone.m}")
        for gi in self.g:
            if gi.dim != self.n:
                raise DimensionMismatch(f"{gi.name or 'g'} lives on R^{gi.dim}, expected R^{self.n}")
            extra = set(gi.param_names)
            if extra:
                raise DimensionMismatch(f"{gi.name or 'g'} may not depend on {sorted(extra)}")
        if self.x0.shape != (self.n,):
            raise DimensionMismatch(f"xcheck has shape {self.x0.shape}, expected ({self.n},)")
        if self.control_points.shape[0] < 1 or self.control_points.shape[1] != self.q:
            raise DimensionMismatch("control set must be a nonempty list of points in R^q")
        if not self.K > 0:
            raise ValueError("budget K must be positive")
        allowed_f = set(self.xnames) | set(self.anames)
        if not self.f.components_vars() <= allowed_f:
            raise DimensionMismatch("drift uses unknown symbols")
        if not self.l0.free_vars() <= allowed_f:
            raise DimensionMismatch("l0 uses unknown symbols")
        if not self.lhat1.free_vars() <= set(self.xnames) | {"w0"} | set(self.wnames):
            raise DimensionMismatch("lhat1 uses unknown symbols")
        if not self.psi.free_vars() <= {"t"} | set(self.xnames):
            raise DimensionMismatch("Psi uses unknown symbols")

    # -- names ------------------------------------------------------------

    @cached_property
    def xnames(self) -> tuple[str, ...]:
        return state_names(self.n)

    @cached_property
    def anames(self) -> tuple[str, ...]:
        return tuple(f"a{i}" for i in range(1, self.q + 1))

    @cached_property
    def wnames(self) -> tuple[str, ...]:
        return tuple(f"w{i}" for i in range(1, self.m + 1))

    @property
    def m(self) -> int:
        return self.cone.m

    @property
    def m1(self) -> int:
        return self.cone.m1

    # -- compiled evaluators ------------------------------------------------

    @cached_property
    def _f_fn(self):
        return _compiled(self.f.components, self.xnames + self.anames)

    @cached_property
    def _f_jac_fn(self):
        flat = tuple(e for row in jacobian_exprs(self.f) for e in row)
        return _compiled(flat, self.xnames + self.anames)

    @cached_property
    def _g_fn(self):
        flat = tuple(c for gi in self.g for c in gi.components)
        return _compiled(flat, self.xnames)

    @cached_property
    def _g_jac_fn(self):
        flat = tuple(e for gi in self.g for row in jacobian_exprs(gi) for e in row)
        return _compiled(flat, self.xnames)

    @cached_property
    def _l0_fn(self):
        return _compiled((self.l0,), self.xnames + self.anames)

    @cached_property
    def _l0_gx_fn(self):
        return _compiled_grad((self.l0,), self.xnames + self.anames, self.xnames)

    @cached_property
    def _lhat_fn(self):
        return _compiled((self.lhat1,), self.xnames + ("w0",) + self.wnames)

    @cached_property
    def _lhat_gx_fn(self):
        return _compiled_grad((self.lhat1,), self.xnames + ("w0",) + self.wnames, self.xnames)

    @cached_property
    def _psi_fn(self):
        return _compiled((self.psi,), ("t",) + self.xnames)

    @cached_property
    def _psi_grad_fn(self):
        return _compiled_grad((self.psi,), ("t",) + self.xnames, ("t",) + self.xnames)

    # -- evaluation ---------------------------------------------------------

    def f_at(self, x, a) -> np.ndarray:
        return np.array(self._f_fn(tuple(x) + tuple(a)))

    def f_jac(self, x, a) -> np.ndarray:
        return np.array(self._f_jac_fn(tuple(x) + tuple(a))).reshape(self.n, self.n)

    def g_matrix(self, x) -> np.ndarray:
        """Columns g_1(x) .. g_m(x)."""
        flat = np.array(self._g_fn(tuple(x)))
        return flat.reshape(self.m, self.n).T

    def g_jacobians(self, x) -> np.ndarray:
        """Stack of the m Jacobians, shape (m, n, n)."""
        flat = np.array(self._g_jac_fn(tuple(x)))
        return flat.reshape(self.m, self.n, self.n)

    def l0_at(self, x, a) -> float:
        return self._l0_fn(tuple(x) + tuple(a))[0]

    def l0_grad_x(self, x, a) -> np.ndarray:
        return np.array(self._l0_gx_fn(tuple(x) + tuple(a)))

    def lhat1_at(self, x, w0, w) -> float:
        return self._lhat_fn(tuple(x) + (w0,) + tuple(w))[0]

    def lhat1_grad_x(self, x, w0, w) -> np.ndarray:
        return np.array(self._lhat_gx_fn(tuple(x) + (w0,) + tuple(w)))

    def psi_at(self, t, x) -> float:
        return self._psi_fn((t,) + tuple(x))[0]

    def psi_grad(self, t, x) -> tuple[float, np.ndarray]:
        flat = self._psi_grad_fn((t,) + tuple(x))
        return flat[0], np.array(flat[1:])

    def fe(self, x, w0, w, a) -> np.ndarray:
        """Space-time velocity f(x,a) w0 + sum_i g_i(x) w^i."""
        return self.f_at(x, a) * w0 + self.g_matrix(x) @ np.asarray(w, dtype=float)

    def fe_jac(self, x, w0, w, a) -> np.ndarray:
        J = self.f_jac(x, a) * w0
        gj = self.g_jacobians(x)
        for i in range(self.m):
            J = J + gj[i] * w[i]
        return J

    def le(self, x, w0, w, a) -> float:
        return self.l0_at(x, a) * w0 + self.lhat1_at(x, w0, w)

    def le_grad_x(self, x, w0, w, a) -> np.ndarray:
        return self.l0_grad_x(x, a) * w0 + self.lhat1_grad_x(x, w0, w)


def extended_rhs(spec: ProblemSpec, x, w0: float, w, a):
    """Right-hand side (dy0, dy, dyl, dbeta) of the space-time system.

    Raises ConeViolation unless w0 >= 0 and w lies in the cone.
    """
    w = np.asarray(w, dtype=float)
    if w0 < 0:
        raise ConeViolation(f"w0 must be >= 0, got {w0}")
    if not spec.cone.contains(w):
        raise ConeViolation(f"w={w} outside R^{spec.m1} x C2")
    return w0, spec.fe(x, w0, w, a), spec.le(x, w0, w, a), wnorm(w)


# -- (Hp)-style structural validation -----------------------------------------


def validate_problem(spec: ProblemSpec, target: TargetSpec | None = None,
                     config: RunConfig | None = None) -> ConditionReport:
    """Sampled structural checks on the problem data.

    Covers cone pointedness, positive 1-homogeneity of lhat1, smoothness
    declarations needed for Jacobians, dimensions of the target blocks, and
    the cone-inside-tangent-space requirement.
    """
    config = config or RunConfig()
    rep = ConditionReport(title=f"problem validation{': ' + spec.name if spec.name else ''}")
    tol = config.tol_eq

    rep.add("cone pointed", 0.0 if spec.cone.pointed() else 1.0, tol,
            note="C2 generators span no line" if spec.cone.pointed() else "C2 contains a line")

    rng = np.random.default_rng(2024)
    worst = 0.0
    for _ in range(40):
        x = spec.x0 + rng.uniform(-1.0, 1.0, size=spec.n)
        w0 = rng.uniform(0.0, 2.0)
        w = np.zeros(spec.m)
        w[: spec.m1] = rng.uniform(-1.5, 1.5, size=spec.m1)
        if spec.cone.generators.shape[0]:
            w[spec.m1 :] = spec.cone.generators.T @ rng.uniform(0.0, 1.5, size=spec.cone.generators.shape[0])
        base = spec.lhat1_at(x, w0, w)
        for r in (0.37, 2.5):
            got = spec.lhat1_at(x, r * w0, r * w)
            worst = max(worst, abs(got - r * base) / (1.0 + abs(base)))
    rep.add("lhat1 positively 1-homogeneous (sampled)", worst, tol)

    smooth_ok = spec.f.smoothness >= 1 and all(gi.smoothness >= 1 for gi in spec.g)
    rep.add("fields at least C^1", 0.0 if smooth_ok else 1.0, tol)

    if target is not None:
        if target.dim != 1 + spec.n:
            rep.add("target dimension 1+n", 1.0, tol, note=f"target blocks live in R^{target.dim}")
        else:
            rep.add("target dimension 1+n", 0.0, tol)
            rep.add("Gamma inside target tangent space", target.tangent_defect(), tol)

    rep.add("budget K positive", 0.0 if spec.K > 0 else 1.0, tol)
    rep.add("control set nonempty", 0.0 if spec.control_points.shape[0] else 1.0, tol)
    return rep


# -- problem file parsing ------------------------------------------------------

_SECTIONS = ("problem", "dynamics", "cost", "controlset", "cone", "target")


def _parse_sections(text: str, allowed: tuple[str, ...] = _SECTIONS):
    """Split sectioned key = value text into {section: {key: (value, line)}}."""
    out: dict[str, dict[str, tuple[str, int]]] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError("unterminated section header", lineno, len(line))
            name = line[1:-1].strip().lower()
            if name not in allowed:
                raise ParseError(f"unknown section [{name}]", lineno, 2)
            section = out.setdefault(name, {})
            continue
        if section is None:
            raise ParseError("key outside any [section]", lineno, 1)
        if "=" not in line:
            raise ParseError("expected key = value", lineno, 1)
        key, value = line.split("=", 1)
        key = key.strip()
        if key in section:
            raise ParseError(f"duplicate key {key!r}", lineno, 1)
        section[key] = (value.strip(), lineno)
    return out


def _take(sec: dict, key: str, lineno_hint: int = 1, required=True, default=None):
    if key in sec:
        return sec.pop(key)
    if required:
        raise ParseError(f"missing key {key!r}", lineno_hint, 1)
    return (default, lineno_hint)


def _as_int(raw: str, line: int) -> int:
    try:
        return int(raw)
    except ValueError:
        raise ParseError(f"expected an integer, got {raw!r}", line, 1) from None


def _as_float(raw: str, line: int) -> float:
    if raw.lower() in ("inf", "+inf"):
        return math.inf
    try:
        return float(raw)
    except ValueError:
        raise ParseError(f"expected a number, got {raw!r}", line, 1) from None


def _as_vector(raw: str, line: int, length: int | None = None) -> np.ndarray:
    try:
        v = np.array([float(tok) for tok in raw.split()], dtype=float)
    except ValueError:
        raise ParseError(f"expected space-separated numbers, got {raw!r}", line, 1) from None
    if length is not None and v.shape != (length,):
        raise ParseError(f"expected {length} components, got {v.shape[0]}", line, 1)
    return v


def _as_vector_list(raw: str, line: int, length: int | None = None) -> np.ndarray:
    rows = [part for part in raw.split(";") if part.strip()]
    if not rows:
        return np.zeros((0, length or 0))
    return np.vstack([_as_vector(part, line, length) for part in rows])


def _smoothness_value(raw: str, line: int) -> float:
    if raw.lower() == "inf":
        return math.inf
    val = _as_int(raw, line)
    if val < 0:
        raise ParseError("smoothness class must be >= 0", line, 1)
    return val


def parse_problem_text(text: str, name: str = "") -> tuple[ProblemSpec, TargetSpec]:
    """Parse the sectioned problem format; raises ParseError with line/column."""
    secs = _parse_sections(text)
    for required in ("problem", "dynamics", "cost", "controlset"):
        if required not in secs:
            raise ParseError(f"missing section [{required}]", 1, 1)

    prob = secs["problem"]
    n = _as_int(*_take(prob, "n"))
    m1 = _as_int(*_take(prob, "m1"))
    m2 = _as_int(*_take(prob, "m2"))
    q = _as_int(*_take(prob, "q"))
    kraw, kline = _take(prob, "K")
    K = _as_float(kraw, kline)
    if not K > 0:
        raise ParseError("budget K must be positive", kline, 1)
    xraw, xline = _take(prob, "xcheck")
    x0 = _as_vector(xraw, xline, n)
    pname, _ = _take(prob, "name", required=False, default=name)
    if prob:
        key, (_, line) = next(iter(prob.items()))
        raise ParseError(f"unknown key {key!r} in [problem]", line, 1)
    if n < 1 or m1 < 0 or m2 < 0 or q < 1:
        raise ParseError("need n >= 1, m1, m2 >= 0, q >= 1", 1, 1)
    m = m1 + m2
    if m < 1:
        raise ParseError("need at least one controlled field (m1 + m2 >= 1)", 1, 1)

    xnames = set(state_names(n))
    anames = {f"a{i}" for i in range(1, q + 1)}
    wnames = {f"w{i}" for i in range(1, m + 1)}

    dyn = secs["dynamics"]

    def field_from(prefix: str, allowed, smooth_default=math.inf) -> VectorField:
        comps = []
        for i in range(1, n + 1):
            raw, line = _take(dyn, f"{prefix}.{i}")
            comps.append(parse_expression(raw, allowed_vars=allowed, line=line))
        smooth = math.inf
        if f"{prefix}.smooth" in dyn:
            raw, line = dyn.pop(f"{prefix}.smooth")
            smooth = _smoothness_value(raw, line)
        else:
            smooth = smooth_default
        return VectorField(dim=n, components=tuple(comps), smoothness=smooth, name=prefix)

    f = field_from("f", xnames | anames)
    g = tuple(field_from(f"g{j}", xnames) for j in range(1, m + 1))
    if dyn:
        key, (_, line) = next(iter(dyn.items()))
        raise ParseError(f"unknown key {key!r} in [dynamics]", line, 1)

    cost = secs["cost"]
    l0_raw, l0_line = _take(cost, "l0")
    l0 = parse_expression(l0_raw, allowed_vars=xnames | anames, line=l0_line)
    lh_raw, lh_line = _take(cost, "lhat1")
    lhat1 = parse_expression(lh_raw, allowed_vars=xnames | {"w0"} | wnames, line=lh_line)
    psi_raw, psi_line = _take(cost, "Psi")
    psi = parse_expression(psi_raw, allowed_vars={"t"} | xnames, line=psi_line)
    if cost:
        key, (_, line) = next(iter(cost.items()))
        raise ParseError(f"unknown key {key!r} in [cost]", line, 1)

    ctl = secs["controlset"]
    araw, aline = _take(ctl, "a")
    points = _as_vector_list(araw, aline, q)
    if points.shape[0] == 0:
        raise ParseError("control set must contain at least one point", aline, 1)
    if ctl:
        key, (_, line) = next(iter(ctl.items()))
        raise ParseError(f"unknown key {key!r} in [controlset]", line, 1)

    gens = np.zeros((0, m2))
    if "cone" in secs:
        cone_sec = secs["cone"]
        graw, gline = _take(cone_sec, "gen", required=False, default="")
        if graw:
            gens = _as_vector_list(graw, gline, m2)
        if cone_sec:
            key, (_, line) = next(iter(cone_sec.items()))
            raise ParseError(f"unknown key {key!r} in [cone]", line, 1)
    cone = ConeSpec(m1=m1, m2=m2, generators=gens)

    A = np.zeros((0, 1 + n))
    b = np.zeros((0,))
    gamma = np.zeros((0, 1 + n))
    if "target" in secs:
        tgt = secs["target"]
        if "A_T" in tgt:
            Araw, Aline = tgt.pop("A_T")
            A = _as_vector_list(Araw, Aline, 1 + n)
            braw, bline = _take(tgt, "b_T")
            b = _as_vector(braw, bline, A.shape[0])
        if "Gamma" in tgt:
            graw, gline = tgt.pop("Gamma")
            gamma = _as_vector_list(graw, gline, 1 + n)
        if tgt:
            key, (_, line) = next(iter(tgt.items()))
            raise ParseError(f"unknown key {key!r} in [target]", line, 1)
    target = TargetSpec(A=A, b=b, gamma=gamma)

    spec = ProblemSpec(
        n=n, q=q, cone=cone, f=f, g=g, l0=l0, lhat1=lhat1, psi=psi,
        control_points=points, K=K, x0=x0, name=pname or name,
    )
    return spec, target


def load_problem(path) -> tuple[ProblemSpec, TargetSpec]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_problem_text(fh.read(), name=str(path))
