"""Machine-readable run reports.

Floats are written with 17 significant digits so that every value round-trips
exactly.  Wall-clock fields live under ``timing`` and are the only part of a
report allowed to differ between two runs of the same configuration.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

SCHEMA_VERSION = 1


def fmt_float(x: float) -> str:
    return format(float(x), ".17g")


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or obj is True or obj is False:
        return {None: "null", True: "true", False: "false"}[obj]
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            # JSON has no inf/nan; keep them readable rather than silently null
            return '"' + repr(obj) + '"'
        return fmt_float(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if hasattr(obj, "item") and not isinstance(obj, (list, tuple, dict)):
        return _encode(obj.item(), indent, level)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{_encode(str(k), indent, level + 1)}: {_encode(v, indent, level + 1)}"
                 for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = [pad + _encode(v, indent, level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(obj, indent: int = 2) -> str:
    """JSON text with every float printed to 17 significant digits."""
    return _encode(obj, indent, 0) + "\n"


@dataclass(frozen=True)
class Check:
    """One gated quantity: a residual, an oracle gap or an observed order."""

    name: str
    kind: str
    value: float
    tolerance: float
    passed: bool
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind, "value": float(self.value),
               "tolerance": float(self.tolerance), "passed": bool(self.passed)}
        if self.detail:
            out["detail"] = self.detail
        return out


@dataclass
class RunReport:
    config: dict
    resolution: int
    checks: list
    diagnostics: dict
    margins: dict
    timing: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def payload(self) -> dict:
        """Everything except wall-clock time; bit-identical across reruns."""
        return {
            "schema_version": self.schema_version,
            "config": self.config,
            "resolution": self.resolution,
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
            "diagnostics": self.diagnostics,
            "margins": self.margins,
        }

    def to_dict(self) -> dict:
        out = self.payload()
        out["timing"] = self.timing
        return out

    def to_json(self) -> str:
        return dumps(self.to_dict())

    def write(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


@dataclass
class ConvergenceTable:
    config: dict
    resolutions: list
    values: dict
    tolerances: dict
    kinds: dict
    orders: dict
    checks: list
    timing: dict = field(default_factory=dict)
    schema_version: int = SCHEMA_VERSION

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def payload(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "config": self.config,
            "resolutions": list(self.resolutions),
            "passed": self.passed,
            "values": self.values,
            "orders": self.orders,
            "checks": [c.to_dict() for c in self.checks],
        }

    def to_dict(self) -> dict:
        out = self.payload()
        out["timing"] = self.timing
        return out

    def to_json(self) -> str:
        return dumps(self.to_dict())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["quantity", "kind", "resolution", "value", "tolerance",
                    "pairwise_order", "richardson_order", "floor"])
        for name, vals in self.values.items():
            od = self.orders.get(name, {})
            pairwise = [None] + list(od.get("pairwise", []))
            for k, r in enumerate(self.resolutions):
                p = pairwise[k] if k < len(pairwise) else None
                rich = od.get("richardson") if k == len(self.resolutions) - 1 else None
                w.writerow([name, self.kinds.get(name, ""), r, _cell(vals[k]),
                            _cell(self.tolerances.get(name)), _cell(p), _cell(rich),
                            str(bool(od.get("floor", False))).lower()])
        return buf.getvalue()


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return fmt_float(x)
    return str(x)
