"""Experiment reports: checks, verdict roll-up and serialization.

JSON output is canonical (sorted keys, ``repr`` floats, no timestamps) so
that two runs with the same seed produce byte-identical files.  CSV is
tidy long format: one row per check and statistic.
"""

import csv
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from .stats import MCEstimate, Verdict, combine_verdicts

SCHEMA_VERSION = "1"
CSV_COLUMNS = ("experiment", "check", "n", "statistic", "estimate", "stderr", "target", "verdict")

Number = Union[float, complex]


@dataclass
class Check:
    """One comparison: an estimate, its target and the verdict."""

    name: str
    verdict: Verdict
    estimate: Optional[Number] = None
    stderr: Optional[Union[float, tuple]] = None
    target: Optional[Number] = None
    n: Optional[int] = None
    tolerance: str = ""
    extra: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_estimate(
        cls, name: str, est: MCEstimate, target: Optional[Number], verdict: Verdict,
        n: Optional[int] = None, tolerance: str = "", **extra,
    ) -> "Check":
        return cls(name, verdict, est.value, est.stderr, target, n, tolerance, dict(extra))

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "estimate": _plain(self.estimate),
            "stderr": _plain(self.stderr),
            "target": _plain(self.target),
            "tolerance": self.tolerance,
            "verdict": self.verdict.value,
            "extra": _plain(self.extra),
        }


@dataclass
class ExperimentReport:
    experiment: str
    anchor: str
    config: Dict[str, Any]
    seed: Optional[int]
    checks: List[Check] = field(default_factory=list)
    notes: List[str] = field(default_factory=list)
    tables: Dict[str, Any] = field(default_factory=dict)

    @property
    def verdict(self) -> Verdict:
        if not self.checks:
            return Verdict.INCONCLUSIVE
        return combine_verdicts([c.verdict for c in self.checks])

    def counts(self) -> Dict[str, int]:
        out = {v.value: 0 for v in Verdict}
        for c in self.checks:
            out[c.verdict.value] += 1
        return out

    def add(self, check: Check) -> Check:
        self.checks.append(check)
        return check

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "anchor": self.anchor,
            "config": _plain(self.config),
            "seed": self.seed,
            "verdict": self.verdict.value,
            "counts": self.counts(),
            "checks": [c.to_dict() for c in self.checks],
            "notes": list(self.notes),
            "tables": _plain(self.tables),
        }


@dataclass
class SuiteReport:
    seed: Optional[int]
    reports: List[ExperimentReport]

    @property
    def verdict(self) -> Verdict:
        return combine_verdicts([r.verdict for r in self.reports]) if self.reports else Verdict.INCONCLUSIVE

    def counts(self) -> Dict[str, int]:
        out = {v.value: 0 for v in Verdict}
        for r in self.reports:
            for k, v in r.counts().items():
                out[k] += v
        return out

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "seed": self.seed,
            "verdict": self.verdict.value,
            "counts": self.counts(),
            "experiments": [r.to_dict() for r in self.reports],
        }


def _plain(x: Any) -> Any:
    """JSON-ready copy: complex -> {re, im}, numpy -> python, inf/nan -> str."""
    if isinstance(x, Verdict):
        return x.value
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": _plain(float(x.real)), "im": _plain(float(x.imag))}
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x) or math.isinf(x):
            return str(x)
        return x
    if hasattr(x, "value") and isinstance(getattr(x, "value"), str):
        return x.value
    return x


def to_json(report: Union[ExperimentReport, SuiteReport]) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _split(value: Any, stderr: Any, target: Any):
    """Yield (suffix, estimate, stderr, target), splitting complex values."""
    if isinstance(value, complex) or isinstance(target, complex):
        v = complex(value) if value is not None else None
        t = complex(target) if target is not None else None
        se = stderr if isinstance(stderr, tuple) else (stderr, stderr)
        yield "_re", None if v is None else v.real, se[0], None if t is None else t.real
        yield "_im", None if v is None else v.imag, se[1], None if t is None else t.imag
    else:
        yield "", value, stderr, target


def to_csv(report: Union[ExperimentReport, SuiteReport]) -> str:
    reports = report.reports if isinstance(report, SuiteReport) else [report]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)

    def fmt(v):
        return "" if v is None else repr(float(v))

    for r in reports:
        for c in r.checks:
            stat = c.name.split("[")[0]
            for suffix, v, se, t in _split(c.estimate, c.stderr, c.target):
                w.writerow([
                    r.experiment, c.name, "" if c.n is None else c.n, stat + suffix,
                    fmt(v), fmt(se), fmt(t), c.verdict.value,
                ])
    return buf.getvalue()


def render(report, fmt: str) -> str:
    if fmt == "json":
        return to_json(report)
    if fmt == "csv":
        return to_csv(report)
    raise ValueError(f"unknown format {fmt!r}")


def load_schema() -> dict:
    return json.loads(resources.files("gradlim").joinpath("report_schema.json").read_text())


def validate_report(doc: dict) -> None:
    """Raise ``jsonschema.ValidationError`` if ``doc`` violates the schema."""
    import jsonschema

    jsonschema.validate(doc, load_schema())


def summary_lines(report: Union[ExperimentReport, SuiteReport]) -> List[str]:
    reports = report.reports if isinstance(report, SuiteReport) else [report]
    lines = []
    for r in reports:
        c = r.counts()
        lines.append(
            f"{r.experiment}: {r.verdict.value} "
            f"({c['pass']} pass, {c['fail']} fail, {c['inconclusive']} inconclusive)"
        )
    return lines
