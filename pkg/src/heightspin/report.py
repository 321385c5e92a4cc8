"""Check reports and their deterministic JSON form."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np


@dataclass
class CheckReport:
    check_name: str
    lhs: float
    rhs: float
    slack: float
    tolerance: float
    passed: bool
    tail_estimate: float = 0.0
    inputs: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def inputs_digest(self) -> str:
        return digest(self.inputs)

    def to_dict(self) -> dict:
        return {
            "check_name": self.check_name,
            "inputs_digest": self.inputs_digest,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "tolerance": self.tolerance,
            "pass": bool(self.passed),
            "tail_estimate": self.tail_estimate,
            "details": self.details,
        }

    def line(self) -> str:
        mark = "PASS" if self.passed else "FAIL"
        return f"{mark} {self.check_name}: lhs={self.lhs:.12g} rhs={self.rhs:.12g} slack={self.slack:.3e}"


def make_report(name: str, lhs: float, rhs: float, tol: float, tail: float = 0.0, inputs=None, **details) -> CheckReport:
    """Report for an inequality ``lhs <= rhs`` with absolute tolerance ``tol``."""
    lhs, rhs = float(lhs), float(rhs)
    slack = rhs - lhs
    return CheckReport(name, lhs, rhs, slack, tol, bool(slack >= -tol), float(tail), dict(inputs or {}), details)


def _plain(x: Any) -> Any:
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def dumps(obj: Any, indent: int | None = 2) -> str:
    """JSON with floats written to 17 significant digits and sorted keys."""
    return _dump(_plain(obj), indent, 0)


def _dump(x: Any, indent: int | None, depth: int) -> str:
    nl = "" if indent is None else "\n"
    pad = "" if indent is None else " " * (indent * (depth + 1))
    end = "" if indent is None else " " * (indent * depth)
    sep = ", " if indent is None else ","
    if x is None:
        return "null"
    if x is True:
        return "true"
    if x is False:
        return "false"
    if isinstance(x, int):
        return str(x)
    if isinstance(x, float):
        if math.isnan(x):
            return '"nan"'
        if math.isinf(x):
            return '"inf"' if x > 0 else '"-inf"'
        return format(x, ".17g")
    if isinstance(x, str):
        return json.dumps(x)
    if isinstance(x, dict):
        if not x:
            return "{}"
        items = [f"{pad}{_dump(str(k), indent, depth + 1)}: {_dump(v, indent, depth + 1)}" for k, v in sorted(x.items())]
        return "{" + nl + (sep + nl).join(items) + nl + end + "}"
    if isinstance(x, list):
        if not x:
            return "[]"
        items = [pad + _dump(v, indent, depth + 1) for v in x]
        return "[" + nl + (sep + nl).join(items) + nl + end + "]"
    raise TypeError(f"cannot serialize {type(x).__name__}")


def digest(inputs: Any) -> str:
    return hashlib.sha256(dumps(inputs, indent=None).encode()).hexdigest()[:16]
