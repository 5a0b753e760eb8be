"""Check records, suite execution, and machine-readable reports.

A suite is a list of named check thunks; they are evaluated in a small
work pool (capped by BOLAB_THREADS) and the records are sorted by id
before writing, so report content is independent of evaluation order.
"""

from __future__ import annotations

import csv
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

__all__ = ["Check", "Report", "run_suite", "max_workers"]


@dataclass
class Check:
    """One verified identity: lhs vs rhs at a relative tolerance.

    tol=None marks an informational record (reported, never failing).
    """

    identity_id: str
    geometry: str
    parameters: dict
    lhs: float
    rhs: float
    tol: float | None

    @property
    def abs_err(self) -> float:
        return abs(self.lhs - self.rhs)

    @property
    def rel_err(self) -> float:
        scale = max(abs(self.rhs), 1e-300)
        return self.abs_err / scale

    @property
    def passed(self) -> bool:
        if self.tol is None:
            return True
        return self.rel_err <= self.tol


@dataclass
class Report:
    suite: str
    checks: list = field(default_factory=list)
    wall_time_s: float = 0.0

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def records(self) -> list[dict]:
        return [
            {
                "identity_id": c.identity_id,
                "geometry": c.geometry,
                "parameters": c.parameters,
                "lhs": c.lhs,
                "rhs": c.rhs,
                "abs_err": c.abs_err,
                "rel_err": c.rel_err,
                "pass": c.passed,
            }
            for c in sorted(self.checks, key=lambda c: c.identity_id)
        ]

    def to_json(self) -> str:
        return json.dumps(
            {
                "suite": self.suite,
                "passed": self.all_passed,
                "wall_time_s": round(self.wall_time_s, 3),
                "checks": self.records(),
            },
            indent=2,
        )

    def write(self, path_json: str, path_csv: str | None = None) -> None:
        with open(path_json, "w") as fh:
            fh.write(self.to_json() + "\n")
        if path_csv is None:
            return
        with open(path_csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["identity_id", "geometry", "parameters", "lhs", "rhs",
                 "abs_err", "rel_err", "pass"]
            )
            for rec in self.records():
                writer.writerow(
                    [rec["identity_id"], rec["geometry"],
                     json.dumps(rec["parameters"], sort_keys=True),
                     repr(rec["lhs"]), repr(rec["rhs"]),
                     repr(rec["abs_err"]), repr(rec["rel_err"]), rec["pass"]]
                )


def max_workers() -> int:
    raw = os.environ.get("BOLAB_THREADS", "")
    try:
        cap = int(raw)
    except ValueError:
        cap = 0
    if cap < 1:
        cap = min(4, os.cpu_count() or 1)
    return cap


def run_suite(name: str, thunks) -> Report:
    """Evaluate `(callable) -> list[Check]` thunks in a bounded pool."""
    start = time.perf_counter()
    checks: list[Check] = []
    workers = max_workers()
    if workers == 1 or len(thunks) == 1:
        for thunk in thunks:
            checks.extend(thunk())
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for result in pool.map(lambda f: f(), thunks):
                checks.extend(result)
    return Report(name, checks, time.perf_counter() - start)
