"""Serializable verification reports."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass
class Check:
    name: str
    measured: float
    bound: float
    passed: bool
    relation: str = "<="  # measured <relation> bound
    detail: str = ""


@dataclass
class VerificationReport:
    suite: str
    checks: list[Check] = field(default_factory=list)
    environment: dict = field(default_factory=dict)
    data: dict = field(default_factory=dict)

    def add(self, name: str, measured: float, bound: float, relation: str = "<=", detail: str = "") -> Check:
        measured = float(measured)
        bound = float(bound)
        if relation == "<=":
            ok = measured <= bound
        elif relation == ">=":
            ok = measured >= bound
        elif relation == "==":
            ok = measured == bound
        else:
            raise ValueError(f"unknown relation {relation!r}")
        ok = ok and not math.isnan(measured)
        chk = Check(name, measured, bound, bool(ok), relation, detail)
        self.checks.append(chk)
        return chk

    def add_flag(self, name: str, ok: bool, detail: str = "") -> Check:
        return self.add(name, 1.0 if ok else 0.0, 1.0, "==", detail)

    def extend(self, other: "VerificationReport", prefix: str | None = None) -> None:
        pre = f"{prefix or other.suite}/"
        for c in other.checks:
            self.checks.append(Check(pre + c.name, c.measured, c.bound, c.passed, c.relation, c.detail))
        if other.data:
            self.data[other.suite] = other.data

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            "suite": self.suite,
            "passed": self.passed,
            "checks": [asdict(c) for c in self.checks],
            "environment": self.environment,
            "data": self.data,
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(_clean(self.to_dict()), indent=indent, sort_keys=True)

    def summary_lines(self) -> list[str]:
        out = []
        for c in self.checks:
            tag = "PASS" if c.passed else "FAIL"
            out.append(f"[{tag}] {c.name}: {c.measured:.3e} {c.relation} {c.bound:.3e}")
        return out


def _clean(obj):
    """Replace non-finite floats and numpy values so the JSON stays standard."""
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float):
        if math.isnan(obj):
            return "nan"
        if math.isinf(obj):
            return "inf" if obj > 0 else "-inf"
        return obj
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj
