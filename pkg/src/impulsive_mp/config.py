"""Run configuration: grids, tolerances, ladders."""

from __future__ import annotations

from dataclasses import dataclass, fields


@dataclass(frozen=True)
class RunConfig:
    """Knobs shared by integration, checking and the CLI.

    Equality residuals pass at tol_eq*(1+|data|); inequality slacks at
    tol_ineq.  The ladder drives expansion-order fits.
    """

    grid: int = 64                 # uniform pieces when a control needs discretizing
    substeps: int = 8              # minimum RK4 substeps per control piece
    min_total_steps: int = 256     # lower bound on RK4 steps over the whole horizon
    tol_eq: float = 1e-6
    tol_ineq: float = 1e-8
    rank_rtol: float = 1e-9        # singular values below rank_rtol*max count as zero
    pivot_tol: float = 1e-10       # null-space cutoff in the multiplier search
    ladder: tuple[float, ...] = (1e-2, 5e-3, 2.5e-3, 1.25e-3)
    slope_min: float = 1.2
    remainder_floor: float = 1e-12
    blowup: float = 1e8
    rho: float = 0.5               # bound for the clock-dilation control zeta
    w_resolution: int = 1          # >= 2 adds diagnostic blends between drift and rays
    scan_lattice: int = 3          # integer lattice radius for the multiplier sphere scan

    def __post_init__(self):
        if self.grid < 16:
            raise ValueError(f"grid must be >= 16, got {self.grid}")
        for nm in ("tol_eq", "tol_ineq", "rank_rtol", "pivot_tol", "remainder_floor"):
            if getattr(self, nm) <= 0:
                raise ValueError(f"{nm} must be positive")
        lad = self.ladder
        if len(lad) < 4 or any(e <= 0 for e in lad) or any(a >= b for a, b in zip(lad[1:], lad)):
            raise ValueError("ladder must be >= 4 strictly decreasing positive values")
        if self.substeps < 2:
            raise ValueError("substeps must be >= 2")
        if not 0 < self.rho <= 0.5:
            raise ValueError("rho must lie in (0, 0.5]")

    def describe(self) -> str:
        pairs = [f"{f.name}={getattr(self, f.name)}" for f in fields(self)]
        return "config: " + ", ".join(pairs)
