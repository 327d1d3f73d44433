"""Plain result records shared by validation, checking and the CLI."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class ConditionRecord:
    """One named scalar verdict: residual against a tolerance."""

    name: str
    residual: float
    tol: float
    passed: bool
    location: float | None = None  # parameter value s where the worst residual sits
    note: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        loc = "" if self.location is None else f" at s={self.location:.6g}"
        note = f"  ({self.note})" if self.note else ""
        return f"{status}  {self.name}: residual {self.residual:.3e} vs tol {self.tol:.3e}{loc}{note}"


@dataclass
class ConditionReport:
    title: str
    records: list[ConditionRecord] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def add(self, name, residual, tol, location=None, note="", passed=None):
        ok = (residual <= tol) if passed is None else passed
        self.records.append(ConditionRecord(name, float(residual), float(tol), ok, location, note))

    def worst(self) -> float:
        return max((r.residual for r in self.records), default=0.0)

    def format(self) -> str:
        lines = [f"== {self.title} =="]
        lines += [r.line() for r in self.records]
        lines += [f"note: {n}" for n in self.notes]
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


@dataclass
class RankReport:
    condition: str
    points: list
    ranks: list[int]
    needed: int
    witness: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return bool(self.ranks) and all(r >= self.needed for r in self.ranks)

    def format(self) -> str:
        lines = [f"== rank condition {self.condition} =="]
        lines.append(f"needed rank: {self.needed}")
        lines.append(f"achieved: min {min(self.ranks) if self.ranks else 0} over {len(self.ranks)} point(s)")
        if self.witness:
            lines.append("witness columns: " + ", ".join(self.witness))
        lines += [f"note: {n}" for n in self.notes]
        lines.append(f"overall: {'PASS' if self.holds else 'FAIL'}")
        return "\n".join(lines)


@dataclass
class LadderReport:
    epsilons: list[float]
    remainders: list[float]
    slope: float
    slope_min: float
    exact: bool  # every remainder under the absolute floor
    floor: float

    @property
    def passed(self) -> bool:
        return self.exact or self.slope >= self.slope_min

    def format(self) -> str:
        lines = ["== expansion order =="]
        for e, r in zip(self.epsilons, self.remainders):
            lines.append(f"eps {e:.4e}  remainder {r:.6e}")
        if self.exact:
            lines.append(f"remainders below floor {self.floor:.1e}; order confirmed exactly")
        else:
            lines.append(f"log-log slope {self.slope:.3f} (pass at >= {self.slope_min})")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)
