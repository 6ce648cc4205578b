"""Finite stochastic-choice datasets and their CSV form.

CSV contract: header ``menu_id,x1,x2,prob``, one row per (menu, allocation).
Rows sharing a ``menu_id`` form one menu; their probabilities must sum to
1 within ``INGEST_TOL``.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, Iterator, TextIO

from apusp.errors import SpecError
from apusp.model import Allocation, ChoiceDistribution, Menu, PROB_TOL, fmt_num

CSV_HEADER = ["menu_id", "x1", "x2", "prob"]
INGEST_TOL = 1e-6
DEFAULT_EPS_TIE = 1e-9


class StochasticChoiceDataset:
    """Map from menus (keyed by canonical id) to observed choice distributions."""

    def __init__(self, entries: Iterable[ChoiceDistribution] = (), eps_tie: float = DEFAULT_EPS_TIE):
        if not eps_tie >= 0:
            raise SpecError("eps_tie must be >= 0", field="eps_tie")
        self.eps_tie = float(eps_tie)
        self._entries: dict[str, ChoiceDistribution] = {}
        for dist in entries:
            self.add(dist)

    def add(self, dist: ChoiceDistribution) -> None:
        if dist.menu.id in self._entries:
            raise SpecError(f"menu {dist.menu} appears twice in the dataset", field="menu")
        self._entries[dist.menu.id] = dist

    @classmethod
    def from_probs(cls, rows: Iterable[tuple[Iterable, Iterable[float]]], eps_tie: float = DEFAULT_EPS_TIE):
        """Build from ``(allocations, probs)`` pairs given in any order."""
        dists = []
        for allocs, probs in rows:
            allocs = [a if isinstance(a, Allocation) else Allocation(*a) for a in allocs]
            dists.append(ChoiceDistribution.from_mapping(dict(zip(allocs, probs))))
        return cls(dists, eps_tie)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, menu: object) -> bool:
        key = menu.id if isinstance(menu, Menu) else menu
        return key in self._entries

    def __getitem__(self, menu: Menu | str) -> ChoiceDistribution:
        key = menu.id if isinstance(menu, Menu) else menu
        return self._entries[key]

    def __iter__(self) -> Iterator[ChoiceDistribution]:
        """Distributions in canonical order (menu size, then menu id)."""
        for key in sorted(self._entries, key=lambda k: (len(self._entries[k].menu), k)):
            yield self._entries[key]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, StochasticChoiceDataset):
            return NotImplemented
        return self._entries == other._entries

    def __repr__(self) -> str:
        return f"StochasticChoiceDataset({len(self)} menus)"

    @property
    def menus(self) -> list[Menu]:
        return [d.menu for d in self]

    def prob(self, a: Allocation, menu: Menu | str) -> float:
        return self[menu].prob(a)

    def get(self, menu: Menu | str) -> ChoiceDistribution | None:
        key = menu.id if isinstance(menu, Menu) else menu
        return self._entries.get(key)


def read_dataset_csv(source: str | Path | TextIO, eps_tie: float = DEFAULT_EPS_TIE) -> StochasticChoiceDataset:
    """Parse the dataset CSV; errors carry the 1-based line number."""
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8", newline="") as fh:
            return read_dataset_csv(fh, eps_tie)
    reader = csv.reader(source)
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != CSV_HEADER:
        raise SpecError(f"row 1: header must be {','.join(CSV_HEADER)}", field="row 1")

    groups: dict[str, dict[Allocation, float]] = {}
    first_row: dict[str, int] = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 4:
            raise SpecError(f"row {lineno}: expected 4 fields, got {len(row)}", field=f"row {lineno}")
        menu_id = row[0].strip()
        try:
            a = Allocation(float(row[1]), float(row[2]))
            p = float(row[3])
        except (ValueError, SpecError):
            raise SpecError(f"row {lineno}: non-numeric or non-finite value", field=f"row {lineno}") from None
        if not (0.0 <= p <= 1.0):
            raise SpecError(f"row {lineno}: probability {p} outside [0, 1]", field=f"row {lineno}")
        group = groups.setdefault(menu_id, {})
        first_row.setdefault(menu_id, lineno)
        if a in group:
            raise SpecError(f"row {lineno}: allocation {a} repeated in menu {menu_id!r}", field=f"row {lineno}")
        group[a] = p

    ds = StochasticChoiceDataset(eps_tie=eps_tie)
    seen: dict[str, str] = {}
    for menu_id, group in groups.items():
        lineno = first_row[menu_id]
        total = math.fsum(group.values())
        if abs(total - 1.0) > INGEST_TOL:
            raise SpecError(
                f"row {lineno}: probabilities of menu {menu_id!r} sum to {total:.9g}, not 1",
                field=f"row {lineno}",
            )
        if abs(total - 1.0) > PROB_TOL:
            group = {a: p / total for a, p in group.items()}
        dist = ChoiceDistribution.from_mapping(group)
        if dist.menu.id in seen:
            raise SpecError(
                f"row {lineno}: menu {menu_id!r} repeats the allocations of menu {seen[dist.menu.id]!r}",
                field=f"row {lineno}",
            )
        seen[dist.menu.id] = menu_id
        ds.add(dist)
    return ds


def dataset_to_csv(ds: StochasticChoiceDataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for dist in ds:
        for a, p in dist.items():
            writer.writerow([dist.menu.id, fmt_num(a.x1), fmt_num(a.x2), repr(p)])
    return buf.getvalue()


def write_dataset_csv(ds: StochasticChoiceDataset, path: str | Path) -> None:
    Path(path).write_text(dataset_to_csv(ds), encoding="utf-8")
