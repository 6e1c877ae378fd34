"""Deterministic residual reports and CSV emission."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from . import __version__


@dataclass
class ReportEntry:
    label: str
    max_residual: float
    mean_residual: float
    worst_point: tuple
    tolerance: float | None = None

    @property
    def verdict(self) -> str:
        if self.tolerance is None:
            return "info"
        return "pass" if self.max_residual <= self.tolerance else "fail"

    def to_dict(self) -> dict:
        return {"label": self.label,
                "max_residual": self.max_residual,
                "mean_residual": self.mean_residual,
                "worst_point": list(self.worst_point) if self.worst_point else [],
                "tolerance": self.tolerance,
                "verdict": self.verdict}


@dataclass
class ResidualReport:
    scenario: str
    seed: int
    entries: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    def add(self, label, max_residual, mean_residual=None, worst_point=(),
            tolerance=None) -> None:
        if mean_residual is None:
            mean_residual = max_residual
        self.entries.append(ReportEntry(label, float(max_residual),
                                        float(mean_residual), tuple(worst_point),
                                        tolerance))

    @property
    def passed(self) -> bool:
        return all(e.verdict != "fail" for e in self.entries)

    def to_dict(self) -> dict:
        return {"scenario": self.scenario,
                "engine_version": __version__,
                "seed": self.seed,
                "passed": self.passed,
                "entries": [e.to_dict() for e in sorted(self.entries, key=lambda e: e.label)],
                "notes": sorted(self.notes)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2,
                          separators=(",", ": ")) + "\n"


def format_cell(x) -> str:
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def emit_csv(table, path) -> None:
    """Write a rectangular table: header row then data rows, 17 significant digits."""
    if table:
        width = len(table[0])
        for row in table:
            if len(row) != width:
                raise ValueError("csv table must be rectangular")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in table:
            fh.write(",".join(format_cell(x) for x in row))
            fh.write("\n")


def csv_text(table) -> str:
    return "".join(",".join(format_cell(x) for x in row) + "\n" for row in table)
