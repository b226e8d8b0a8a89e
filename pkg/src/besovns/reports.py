"""Inequality reports and their CSV schema.

Every checked inequality ``lhs <= C * rhs`` is recorded sample by sample.
The empirical constant of a report is the largest observed ``lhs / rhs``;
its stability factor compares that constant between the finest and the
coarsest resolution that contributed samples.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

CSV_COLUMNS = ("sample_id", "law_id", "s", "p", "r", "lhs", "rhs", "ratio", "resolution")


class DegenerateSampleError(ArithmeticError):
    """A sample whose reference norm vanishes, so no ratio can be formed."""


@dataclass
class InequalityRecord:
    sample_id: int
    lhs: float
    rhs: float
    resolution: int = 0
    s: float = float("nan")
    p: float = float("nan")
    r: float = float("nan")
    extra: dict = field(default_factory=dict)

    @property
    def ratio(self) -> float:
        if self.rhs == 0:
            return 0.0 if self.lhs == 0 else math.inf
        return self.lhs / self.rhs


@dataclass
class InequalityReport:
    """Per-sample ``(lhs, rhs)`` pairs for one law."""

    law_id: str
    records: list[InequalityRecord] = field(default_factory=list)
    skipped: int = 0
    notes: dict = field(default_factory=dict)

    def add(self, lhs, rhs, resolution=0, s=float("nan"), p=float("nan"), r=float("nan"), **extra):
        rec = InequalityRecord(len(self.records), float(lhs), float(rhs), int(resolution),
                               float(s), float(p), float(r), extra)
        self.records.append(rec)
        return rec

    def extend(self, other: "InequalityReport"):
        for rec in other.records:
            rec.sample_id = len(self.records)
            self.records.append(rec)
        self.skipped += other.skipped

    def __len__(self):
        return len(self.records)

    @property
    def ratios(self) -> list[float]:
        return [rec.ratio for rec in self.records]

    @property
    def resolutions(self) -> list[int]:
        return sorted({rec.resolution for rec in self.records})

    def constant(self, resolution: int | None = None) -> float:
        """Empirical constant ``max(lhs / rhs)``, optionally at one resolution."""
        vals = [rec.ratio for rec in self.records
                if resolution is None or rec.resolution == resolution]
        if not vals:
            return math.nan
        return max(vals)

    @property
    def c_emp(self) -> float:
        return self.constant()

    def stability(self) -> float:
        """``C_emp(finest) / C_emp(coarsest)``; 1 when only one resolution exists."""
        res = self.resolutions
        if len(res) < 2:
            return 1.0
        coarse, fine = self.constant(res[0]), self.constant(res[-1])
        if coarse == 0:
            return 1.0 if fine == 0 else math.inf
        return fine / coarse

    def all_finite(self) -> bool:
        return all(math.isfinite(x) and x >= 0 for x in self.ratios)

    def rows(self) -> Iterable[dict]:
        for rec in self.records:
            yield {
                "sample_id": rec.sample_id,
                "law_id": self.law_id,
                "s": repr(rec.s),
                "p": repr(rec.p),
                "r": repr(rec.r),
                "lhs": repr(rec.lhs),
                "rhs": repr(rec.rhs),
                "ratio": repr(rec.ratio),
                "resolution": rec.resolution,
            }

    def summary(self) -> dict:
        return {
            "law_id": self.law_id,
            "samples": len(self.records),
            "skipped": self.skipped,
            "c_emp": self.c_emp,
            "stability": self.stability(),
            "constants": {str(n): self.constant(n) for n in self.resolutions},
            **self.notes,
        }


def write_reports_csv(path, reports: Iterable[InequalityReport]) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for rep in reports:
            for row in rep.rows():
                writer.writerow(row)
    return path


def read_reports_csv(path) -> list[InequalityReport]:
    reports: dict[str, InequalityReport] = {}
    with Path(path).open() as fh:
        for row in csv.DictReader(fh):
            rep = reports.setdefault(row["law_id"], InequalityReport(row["law_id"]))
            rep.add(float(row["lhs"]), float(row["rhs"]), int(row["resolution"]),
                    float(row["s"]), float(row["p"]), float(row["r"]))
    return list(reports.values())
