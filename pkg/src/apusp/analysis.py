"""Finite-sample layer: draws, the compromise-effect test, and grid fitting."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
from scipy import stats

from apusp._parallel import map_ordered
from apusp.dataset import StochasticChoiceDataset
from apusp.errors import ApuspError, EmptySampleError, SpecError
from apusp.model import ChoiceDistribution
from apusp.presets import FAMILIES, FamilyTemplate
from apusp.solver import solve_dataset


def sample_draws(dist: ChoiceDistribution, n: int, seed: int) -> tuple[int, ...]:
    """Counts of ``n`` inverse-CDF draws over the menu's canonical order.

    Uses a counter-based generator so a given seed reproduces exactly,
    whatever else runs in parallel.
    """
    if n < 0:
        raise SpecError("number of draws must be >= 0", field="n")
    rng = np.random.Generator(np.random.Philox(seed))
    cdf = np.cumsum(dist.probs)
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, rng.random(n), side="right")
    idx = np.minimum(idx, len(cdf) - 1)
    return tuple(int(c) for c in np.bincount(idx, minlength=len(cdf)))


@dataclass(frozen=True)
class TestResult:
    n_x: int
    n_y: int
    p_value: float
    reject: bool
    sig: float

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_x": self.n_x,
            "n_y": self.n_y,
            "p_value": self.p_value,
            "reject": self.reject,
            "sig": self.sig,
            "null": "rho(x,B) > rho(y,B)",
            "statistic": "n_y ~ Binomial(n_x + n_y, 1/2) at the null boundary, conditional on x-or-y draws",
        }


def compromise_test(n_x: int, n_y: int, sig: float = 0.05) -> TestResult:
    """One-sided exact binomial test of H0: rho(x,B) > rho(y,B).

    Conditioning on draws of x or y puts the null boundary at 1/2; the
    p-value is P(Bin(n_x + n_y, 1/2) >= n_y).
    """
    if n_x < 0 or n_y < 0:
        raise SpecError("counts must be nonnegative", field="counts")
    n = n_x + n_y
    if n == 0:
        raise EmptySampleError("no draws of x or y")
    p = float(stats.binom.sf(n_y - 1, n, 0.5))
    return TestResult(n_x, n_y, p, p <= sig, sig)


# ---------------------------------------------------------------------------
# grid fitting


def parse_grid(spec: str) -> list[dict[str, float]]:
    """``"gamma=50:150:5;eta=2"`` -> cartesian product of inclusive ranges."""
    axes = []
    for part in filter(None, (p.strip() for p in spec.split(";"))):
        name, sep, rng = part.partition("=")
        if not sep or not name.strip():
            raise SpecError(f"grid axis {part!r} is not name=start:stop:step", field="grid")
        nums = rng.split(":")
        try:
            vals = [float(v) for v in nums]
        except ValueError:
            raise SpecError(f"grid axis {part!r} has a non-numeric bound", field="grid") from None
        if len(vals) == 1:
            points = vals
        elif len(vals) == 3:
            start, stop, step = vals
            if step <= 0:
                raise SpecError(f"grid axis {part!r} needs a positive step", field="grid")
            count = math.floor((stop - start) / step + 1e-9) + 1
            points = [start + k * step for k in range(max(count, 0))]
        else:
            raise SpecError(f"grid axis {part!r} is not name=start:stop:step", field="grid")
        if not points:
            raise SpecError(f"grid axis {part!r} is empty", field="grid")
        axes.append((name.strip(), points))
    if not axes:
        raise SpecError("grid is empty", field="grid")
    names = [n for n, _ in axes]
    return [dict(zip(names, combo)) for combo in itertools.product(*(p for _, p in axes))]


@dataclass(frozen=True)
class FitResult:
    family: str
    best_params: dict[str, float]
    best_sse: float
    trace: tuple[tuple[dict[str, float], float], ...]

    def ranked(self) -> list[tuple[dict[str, float], float]]:
        return sorted(self.trace, key=lambda t: t[1])

    def to_dict(self) -> dict[str, Any]:
        return {
            "family": self.family,
            "best_params": self.best_params,
            "best_sse": self.best_sse,
            "grid": [{"params": p, "sse": s} for p, s in self.ranked()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        names = list(self.best_params)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(names + ["sse"])
        for p, s in self.ranked():
            w.writerow([repr(p[k]) for k in names] + [repr(s)])
        return buf.getvalue()

    def to_markdown(self) -> str:
        names = list(self.best_params)
        best = ", ".join(f"{k}={v:g}" for k, v in self.best_params.items())
        lines = [f"# Fit: {self.family}", "", f"best: {best}  (SSE {self.best_sse:.6g})", "",
                 "| " + " | ".join(names + ["SSE"]) + " |", "|" + "---|" * (len(names) + 1)]
        for p, s in self.ranked():
            lines.append("| " + " | ".join([f"{p[k]:g}" for k in names] + [f"{s:.6g}"]) + " |")
        return "\n".join(lines) + "\n"


def sse(model_ds: StochasticChoiceDataset, ds: StochasticChoiceDataset) -> float:
    terms = []
    for dist in ds:
        fitted = model_ds[dist.menu]
        terms.extend((fitted.prob(a) - p) ** 2 for a, p in dist.items())
    return math.fsum(terms)


def fit_cost_family(
    ds: StochasticChoiceDataset,
    family: FamilyTemplate | str,
    grid: Sequence[dict[str, float]],
    workers: int | None = None,
) -> FitResult:
    """Evaluate every grid point; the first point attaining the minimum SSE wins."""
    template = FAMILIES[family] if isinstance(family, str) else family
    if not grid:
        raise SpecError("grid is empty", field="grid")
    menus = ds.menus

    def score(params: dict[str, float]) -> float:
        try:
            return sse(solve_dataset(template.model(**params), menus, workers=1), ds)
        except ApuspError as exc:
            raise type(exc)(f"grid point {params}: {exc}") from exc

    sses = map_ordered(score, list(grid), workers)
    best = min(range(len(sses)), key=lambda i: (sses[i], i))
    return FitResult(template.name, dict(grid[best]), sses[best],
                     tuple((dict(p), s) for p, s in zip(grid, sses)))
