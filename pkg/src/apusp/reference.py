"""Published reference values and cell-by-cell comparison against solver output.

Tables ship as CSV (``menu_id,x1,x2,column,value,tag``).  Each cell reports
the choice probability of allocation ``(x1, x2)`` in the menu.  Cells tagged
``discrepancy:<key>`` are known to be internally inconsistent; they are
shown in every diff report with an explanation but never fail it.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from importlib import resources
from typing import Any, Mapping

from apusp.dataset import StochasticChoiceDataset
from apusp.errors import MissingMenuError, SpecError
from apusp.model import Allocation, Menu
from apusp.presets import PRESETS
from apusp.solver import solve_dataset

REFERENCE_HEADER = ["menu_id", "x1", "x2", "column", "value", "tag"]
TABLE_NAMES = ("table1", "sec33", "table2")

COLUMN_PRESETS = {
    "selfish": "table1-selfish",
    "selfishness": "table1-selfish",
    "ia": "sec33-ia",
    "shame": "sec33-shame",
}

DEFAULT_TOLERANCES: dict[str, dict[str, float]] = {
    "table1": {"selfish": 5e-4},
    "sec33": {"ia": 1e-4, "shame": 2e-3},
    "table2": {"selfishness": 2e-3, "ia": 1e-3, "shame": 2e-3},
}

ANNOTATIONS = {
    "shame-doubleton-sum": (
        "reported pair 0.5651/0.4379 sums to 1.003; the first value reproduces, "
        "the second is fixed by normalization at about 0.4349"
    ),
    "selfishness-permuted": (
        "with u(x1)=x1 this cell is not reproducible; the reported column appears "
        "permuted across rows (equal own payoffs must give 0.5, a 20-vs-0 gap about 1)"
    ),
    "ia-decimal-shift": (
        "closed-form quadratic solution is ten times smaller than the reported value"
    ),
    "shame-zero-allocation": (
        "phi(0,0)=1 gives weight 2^100, pinning that allocation at exp(-1); "
        "the left allocation gets about 0.632, not 0.5"
    ),
}


@dataclass(frozen=True)
class ReferenceCell:
    menu: Menu
    allocation: Allocation
    column: str
    value: float
    text: str  # value text as stored
    tag: str

    @property
    def annotation(self) -> str | None:
        if self.tag.startswith("discrepancy:"):
            key = self.tag.split(":", 1)[1]
            return ANNOTATIONS.get(key, key)
        return None


@dataclass(frozen=True)
class ReferenceTable:
    name: str
    cells: tuple[ReferenceCell, ...]

    @property
    def columns(self) -> list[str]:
        return list(dict.fromkeys(c.column for c in self.cells))

    def menus(self, column: str | None = None) -> list[Menu]:
        return list(dict.fromkeys(c.menu for c in self.cells if column in (None, c.column)))

    def column_cells(self, column: str) -> list[ReferenceCell]:
        return [c for c in self.cells if c.column == column]


def parse_reference_csv(text: str, name: str) -> ReferenceTable:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != REFERENCE_HEADER:
        raise SpecError(f"{name}: header must be {','.join(REFERENCE_HEADER)}", field="row 1")
    cells = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            menu = Menu.from_id(row[0])
            a = Allocation(float(row[1]), float(row[2]))
            value = float(row[4])
        except (ValueError, IndexError, SpecError):
            raise SpecError(f"{name}: row {lineno} is malformed", field=f"row {lineno}") from None
        if a not in menu:
            raise SpecError(f"{name}: row {lineno} allocation {a} not in menu", field=f"row {lineno}")
        cells.append(ReferenceCell(menu, a, row[3], value, row[4], row[5]))
    return ReferenceTable(name, tuple(cells))


def load_reference(name: str) -> ReferenceTable:
    if name not in TABLE_NAMES:
        raise SpecError(f"unknown table {name!r}; choose from {list(TABLE_NAMES)}", field="table")
    text = resources.files("apusp").joinpath("data").joinpath(f"{name}.csv").read_text(encoding="utf-8")
    return parse_reference_csv(text, name)


@dataclass(frozen=True)
class DiffCell:
    table: str
    column: str
    menu_id: str
    allocation: str
    computed: float
    reported: float
    delta: float
    tol: float
    verdict: str  # pass | fail | annotated
    annotation: str | None

    def to_dict(self) -> dict[str, Any]:
        return {
            "table": self.table, "column": self.column, "menu_id": self.menu_id,
            "allocation": self.allocation, "computed": self.computed, "reported": self.reported,
            "delta": self.delta, "tol": self.tol, "verdict": self.verdict, "annotation": self.annotation,
        }


@dataclass(frozen=True)
class DiffReport:
    cells: tuple[DiffCell, ...]

    def __add__(self, other: DiffReport) -> DiffReport:
        return DiffReport(self.cells + other.cells)

    @property
    def passed(self) -> bool:
        return all(c.verdict != "fail" for c in self.cells)

    @property
    def annotated(self) -> list[DiffCell]:
        return [c for c in self.cells if c.verdict == "annotated"]

    def counts(self) -> dict[str, int]:
        out = {"pass": 0, "fail": 0, "annotated": 0}
        for c in self.cells:
            out[c.verdict] += 1
        return out

    def to_dict(self) -> dict[str, Any]:
        return {"passed": self.passed, "counts": self.counts(), "cells": [c.to_dict() for c in self.cells]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        keys = list(DiffCell.__dataclass_fields__)
        w.writerow(keys)
        for c in self.cells:
            w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in c.to_dict().values()])
        return buf.getvalue()

    def to_markdown(self) -> str:
        counts = self.counts()
        lines = [
            "# Reference comparison", "",
            f"{counts['pass']} pass, {counts['fail']} fail, {counts['annotated']} annotated", "",
            "| table | column | menu | allocation | computed | reported | delta | tol | verdict |",
            "|---|---|---|---|---|---|---|---|---|",
        ]
        for c in self.cells:
            lines.append(
                f"| {c.table} | {c.column} | {c.menu_id} | {c.allocation} | {c.computed:.6f} | "
                f"{c.reported:g} | {c.delta:.2e} | {c.tol:g} | {c.verdict} |"
            )
        notes = self.annotated
        if notes:
            lines += ["", "## Known discrepancies", ""]
            for c in notes:
                lines.append(f"- {c.table}/{c.column} {c.menu_id} @ {c.allocation}: "
                             f"reported {c.reported:g}, computed {c.computed:.6f}. {c.annotation}")
        return "\n".join(lines) + "\n"


def compare_to_reference(
    computed: StochasticChoiceDataset,
    ref: ReferenceTable,
    tol: float | Mapping[str, float],
    column: str | None = None,
) -> DiffReport:
    """Per-cell |computed - reported| against ``tol`` (a number or per-column map)."""
    out = []
    for cell in ref.cells:
        if column is not None and cell.column != column:
            continue
        if cell.menu not in computed:
            raise MissingMenuError(f"menu {cell.menu} of {ref.name} is missing from the computed data")
        t = tol if isinstance(tol, (int, float)) else tol[cell.column]
        value = computed.prob(cell.allocation, cell.menu)
        delta = abs(value - cell.value)
        if cell.annotation is not None:
            verdict = "annotated"
        else:
            verdict = "pass" if delta <= t else "fail"
        out.append(DiffCell(ref.name, cell.column, cell.menu.id, cell.allocation.label,
                            value, cell.value, delta, float(t), verdict, cell.annotation))
    return DiffReport(tuple(out))


def reproduce(name: str, tol: float | Mapping[str, float] | None = None) -> DiffReport:
    """Solve every column of a built-in table with its preset and diff it."""
    ref = load_reference(name)
    tol = DEFAULT_TOLERANCES[name] if tol is None else tol
    report = DiffReport(())
    for column in ref.columns:
        model = PRESETS[COLUMN_PRESETS[column]]
        computed = solve_dataset(model, ref.menus(column))
        report = report + compare_to_reference(computed, ref, tol, column)
    return report
