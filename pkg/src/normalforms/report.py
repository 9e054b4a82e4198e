"""Machine-readable verification records."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

__all__ = ["Residual", "Report", "SCHEMA_VERSION"]

SCHEMA_VERSION = "1.0"


@dataclass
class Residual:
    name: str
    value: float
    tol: float
    witness: str = ""

    @property
    def passed(self) -> bool:
        return math.isfinite(self.value) and self.value <= self.tol

    def as_dict(self):
        d = {"name": self.name, "value": _num(self.value), "tol": _num(self.tol), "pass": self.passed}
        if self.witness:
            d["witness"] = self.witness
        return d


def _num(v):
    v = float(v)
    if math.isnan(v):
        return "nan"
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return float(f"{v:.6e}")


@dataclass
class Report:
    """Residual table plus computed artifacts for one task.

    ``skipped`` lists checks that were configured off; a report with no
    failing residual but some skipped checks is ``partial``.
    """

    task: str
    residuals: list = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)
    errors: list = field(default_factory=list)

    def add(self, name, value, tol, witness=""):
        self.residuals.append(Residual(name, float(value), float(tol), witness))
        return self.residuals[-1]

    def add_max(self, name, values, tol, witnesses=None):
        """Record the largest of ``values`` under ``name``, with its witness."""
        values = list(values)
        if not values:
            self.skipped.append(name)
            return None
        k = max(range(len(values)), key=lambda i: (not math.isfinite(values[i]), values[i]))
        w = witnesses[k] if witnesses else ""
        return self.add(name, values[k], tol, w)

    def merge(self, other: "Report", prefix=""):
        for r in other.residuals:
            self.residuals.append(Residual(prefix + r.name, r.value, r.tol, r.witness))
        for k, v in other.artifacts.items():
            self.artifacts[prefix + k] = v
        self.skipped.extend(prefix + s for s in other.skipped)
        self.errors.extend(other.errors)

    @property
    def status(self) -> str:
        if self.errors or any(not r.passed for r in self.residuals):
            return "fail"
        if self.skipped or not self.residuals:
            return "partial"
        return "pass"

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def residual(self, name) -> Residual:
        for r in self.residuals:
            if r.name == name:
                return r
        raise KeyError(name)

    def failures(self):
        return [r for r in self.residuals if not r.passed]
