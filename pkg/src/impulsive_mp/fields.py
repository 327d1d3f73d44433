"""Vector fields with symbolic components and iterated Lie brackets.

The bracket convention used throughout is [F,G] = DG*F - DF*G.  Components
are expression trees in the state variables x1..xn plus, for the drift field,
control parameters a1..aq that differentiation treats as constants.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field as dc_field
from functools import lru_cache

import numpy as np

from .brackets import FormalBracket, required_smoothness
from .errors import DimensionMismatch, InsufficientSmoothness
from .expressions import Expr, compile_exprs


def state_names(n: int) -> tuple[str, ...]:
    return tuple(f"x{i}" for i in range(1, n + 1))


@dataclass(frozen=True)
class VectorField:
    """A vector field on R^dim; ``smoothness`` is its declared C^k class."""

    dim: int
    components: tuple[Expr, ...]
    smoothness: float = math.inf
    name: str = ""

    def __post_init__(self):
        if len(self.components) != self.dim:
            raise DimensionMismatch(
                f"{self.dim} components expected, got {len(self.components)}"
            )
        if self.smoothness < 0:
            raise ValueError("smoothness class must be >= 0")

    def components_vars(self) -> set[str]:
        out = set()
        for c in self.components:
            out |= c.free_vars()
        return out

    @property
    def param_names(self) -> tuple[str, ...]:
        """Free variables other than the state coordinates, sorted."""
        return tuple(sorted(self.components_vars() - set(state_names(self.dim))))

    def __str__(self):
        return self.name or "(" + ", ".join(str(c) for c in self.components) + ")"


@lru_cache(maxsize=None)
def _field_fn(fld: VectorField):
    names = state_names(fld.dim) + fld.param_names
    return compile_exprs(fld.components, names)


def eval_field(fld: VectorField, x, params=()) -> np.ndarray:
    """Evaluate the field at x (params filled in by name order)."""
    vals = tuple(x) + tuple(params)
    return np.array(_field_fn(fld)(vals))


@lru_cache(maxsize=None)
def jacobian_exprs(fld: VectorField) -> tuple[tuple[Expr, ...], ...]:
    """Row i holds the partials of component i with respect to x1..xn."""
    names = state_names(fld.dim)
    return tuple(tuple(c.diff(nm) for nm in names) for c in fld.components)


@lru_cache(maxsize=None)
def _jacobian_fn(fld: VectorField):
    names = state_names(fld.dim) + fld.param_names
    flat = [e for row in jacobian_exprs(fld) for e in row]
    return compile_exprs(flat, names)


def jacobian(fld: VectorField, x, params=()) -> np.ndarray:
    vals = tuple(x) + tuple(params)
    flat = _jacobian_fn(fld)(vals)
    return np.array(flat).reshape(fld.dim, fld.dim)


def lie_bracket_field(F: VectorField, G: VectorField) -> VectorField:
    """Symbolic bracket [F,G] = DG*F - DF*G."""
    if F.dim != G.dim:
        raise DimensionMismatch(f"bracket of fields on R^{F.dim} and R^{G.dim}")
    if F.smoothness < 1 or G.smoothness < 1:
        raise InsufficientSmoothness(
            f"bracket needs C^1 arguments, got C^{F.smoothness} and C^{G.smoothness}"
        )
    dF = jacobian_exprs(F)
    dG = jacobian_exprs(G)
    comps = []
    for i in range(F.dim):
        acc = Expr.const(0.0)
        for j in range(F.dim):
            acc = acc + dG[i][j] * F.components[j] - dF[i][j] * G.components[j]
        comps.append(acc)
    name = f"[{F.name},{G.name}]" if F.name and G.name else ""
    return VectorField(
        dim=F.dim,
        components=tuple(comps),
        smoothness=min(F.smoothness, G.smoothness) - 1,
        name=name,
    )


def lie_bracket(F: VectorField, G: VectorField, x, params=()) -> np.ndarray:
    """[F,G](x) evaluated through the Jacobians, without building new trees."""
    if F.dim != G.dim:
        raise DimensionMismatch(f"bracket of fields on R^{F.dim} and R^{G.dim}")
    fx = eval_field(F, x, params)
    gx = eval_field(G, x, params)
    return jacobian(G, x, params) @ fx - jacobian(F, x, params) @ gx


@dataclass
class FieldAssignment:
    """Binding of bracket leaf indices to concrete vector fields."""

    fields: dict[int, VectorField] = dc_field(default_factory=dict)

    def __post_init__(self):
        dims = {f.dim for f in self.fields.values()}
        if len(dims) > 1:
            raise DimensionMismatch(f"assigned fields live on different spaces: {sorted(dims)}")

    def field_for(self, j: int) -> VectorField:
        try:
            return self.fields[j]
        except KeyError:
            raise DimensionMismatch(f"no field assigned to X{j}") from None

    def check_smoothness(self, b: FormalBracket, k: int = 0) -> None:
        """Raise unless every assigned field meets the C^(b+k) requirement."""
        need = required_smoothness(b, k)
        bad = []
        for j, order in sorted(need.items()):
            fld = self.field_for(j)
            if fld.smoothness < order:
                bad.append(f"X{j} -> {fld.name or 'field'} is C^{fld.smoothness}, needs C^{order}")
        if bad:
            raise InsufficientSmoothness("; ".join(bad))


def iterated_bracket_field(b: FormalBracket, assignment: FieldAssignment) -> VectorField:
    """Build the concrete field b(F_1, ..., F_m) symbolically."""
    assignment.check_smoothness(b, 0)

    def build(node: FormalBracket) -> VectorField:
        if node.is_leaf:
            return assignment.field_for(node.index)
        return lie_bracket_field(build(node.left), build(node.right))

    return build(b)


def eval_iterated_bracket(b: FormalBracket, assignment: FieldAssignment, x, params=()) -> np.ndarray:
    return eval_field(iterated_bracket_field(b, assignment), x, params)


def bracket_display(b: FormalBracket, assignment: FieldAssignment) -> str:
    """Bracket text with assigned field names in place of the Xj."""
    if b.is_leaf:
        fld = assignment.field_for(b.index)
        return fld.name or f"X{b.index}"
    return f"[{bracket_display(b.left, assignment)},{bracket_display(b.right, assignment)}]"


def _leaf_signature(b: FormalBracket, names: tuple[str, ...]):
    # shape plus assigned names in leaf order; equal signatures on both factors
    # of a pair make the bracket identically zero
    if b.is_leaf:
        return ("X", names[0])
    k = b.left.length
    return (_leaf_signature(b.left, names[:k]), _leaf_signature(b.right, names[k:]))


def _vanishes_formally(b: FormalBracket, names: tuple[str, ...]) -> bool:
    # true when some sub-bracket pairs identical factors, e.g. [g,[g,g]]
    if b.is_leaf:
        return False
    k = b.left.length
    sig = _leaf_signature(b, names)
    return (sig[0] == sig[1] or _vanishes_formally(b.left, names[:k])
            or _vanishes_formally(b.right, names[k:]))


def enumerate_bracket_pool(fields, max_length: int, k: int = 0, skip_trivial=True):
    """All (bracket, assignment) pairs of length 2..max_length over ``fields``.

    Assignments may repeat fields.  Pairs failing the C^(b+k) smoothness
    requirement are dropped, as are brackets whose two factors carry the very
    same shape and fields (identically zero) when ``skip_trivial``.
    """
    from .brackets import bracket_shapes

    fields = list(fields)
    out = []
    for length in range(2, max_length + 1):
        for shape in bracket_shapes(length):
            seq = shape.seq
            for combo in itertools.product(fields, repeat=length):
                if skip_trivial:
                    names = tuple(f.name or str(id(f)) for f in combo)
                    if _vanishes_formally(shape, names):
                        continue
                assignment = FieldAssignment(dict(zip(seq, combo)))
                try:
                    assignment.check_smoothness(shape, k)
                except InsufficientSmoothness:
                    continue
                out.append((shape, assignment))
    return out
