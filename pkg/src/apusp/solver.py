"""Optimal choice distributions for one menu.

The objective ``sum_x u(x1) p(x) - c_{a(x)}(p(x))`` is separable and
strictly concave on the simplex, so the KKT system collapses to a single
scalar: given the multiplier ``lam`` every coordinate is
``p(x; lam) = (c'_{a(x)})^{-1}(u(x1) + lam)`` (clamped to [0, 1]), and the
total mass is nondecreasing in ``lam``.  ``solve_menu`` bisects ``lam``
until the mass is one.  ``oracle_solve`` maximizes the same objective by
brute force and shares none of that code path.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
from scipy.special import xlogy

from apusp._parallel import map_ordered
from apusp.dataset import StochasticChoiceDataset
from apusp.errors import (
    ApuspError,
    BracketFailure,
    MenuMismatchError,
    NonConvergenceError,
    SpecError,
)
from apusp.model import (
    ChoiceDistribution,
    Menu,
    ModelSpec,
    cost_value,
    cost_weight,
    log_marginal_inverse,
)

DEFAULT_TOL = 1e-12
MAX_ITER = 200
MAX_EXPANSIONS = 2100
PRINT_ZERO = 1e-12


@dataclass(frozen=True)
class SolveResult:
    distribution: ChoiceDistribution
    lam: float
    iterations: int
    max_foc_residual: float
    # natural-log probabilities for the entropy family; they stay exact where
    # the probabilities themselves underflow
    log_probs: tuple[float, ...] | None = None

    @property
    def menu(self) -> Menu:
        return self.distribution.menu

    @property
    def probs(self) -> tuple[float, ...]:
        return self.distribution.probs

    def to_dict(self) -> dict[str, Any]:
        return {
            "menu_id": self.menu.id,
            "probs": [
                {"x1": a.x1, "x2": a.x2, "p": 0.0 if p < PRINT_ZERO else p}
                for a, p in self.distribution.items()
            ],
            "lambda": self.lam,
            "iterations": self.iterations,
            "max_foc_residual": self.max_foc_residual,
        }


def _menu_terms(model: ModelSpec, menu: Menu) -> tuple[list[float], list[float]]:
    return [model.utility_of(a) for a in menu], [cost_weight(model, a) for a in menu]


def _probs_at(family: str, us: Sequence[float], ws: Sequence[float], lam: float):
    if family == "entropy":
        logs = [log_marginal_inverse(w, u + lam) for u, w in zip(us, ws)]
        return [math.exp(v) for v in logs], logs
    return [min(max((u + lam) / (2.0 * w), 0.0), 1.0) for u, w in zip(us, ws)], None


def solve_menu(model: ModelSpec, menu: Menu, tol: float = DEFAULT_TOL, max_iter: int = MAX_ITER) -> SolveResult:
    """Solve the KKT system by bisection on the menu multiplier."""
    if not 0 < tol <= 1e-9:
        raise SpecError("tol must lie in (0, 1e-9]", field="tol")
    family = model.family
    us, ws = _menu_terms(model, menu)

    if len(menu) == 1:
        # simplex is a point; smallest multiplier satisfying the corner KKT inequality
        lam = (ws[0] if family == "entropy" else 2.0 * ws[0]) - us[0]
        dist = ChoiceDistribution(menu, (1.0,))
        logs = (0.0,) if family == "entropy" else None
        return SolveResult(dist, lam, 0, 0.0, logs)

    def mass(lam: float):
        ps, logs = _probs_at(family, us, ws, lam)
        return math.fsum(ps), ps, logs

    span = max(abs(u) for u in us) + max(ws)
    lo, hi = -span, span
    for _ in range(MAX_EXPANSIONS):
        if mass(lo)[0] <= 1.0:
            break
        lo *= 2.0
    else:
        raise BracketFailure(f"no lower multiplier bracket for {menu}")
    for _ in range(MAX_EXPANSIONS):
        if mass(hi)[0] >= 1.0:
            break
        hi *= 2.0
    else:
        raise BracketFailure(f"no upper multiplier bracket for {menu}")
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise BracketFailure(f"multiplier bracket for {menu} is not finite")

    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        s, ps, logs = mass(mid)
        if abs(s - 1.0) <= tol:
            lam = mid
            break
        if mid <= lo or mid >= hi:
            # bracket is two adjacent doubles: blend the endpoint solutions
            s_lo, p_lo, l_lo = mass(lo)
            s_hi, p_hi, _ = mass(hi)
            t = (1.0 - s_lo) / (s_hi - s_lo)
            ps = [a + t * (b - a) for a, b in zip(p_lo, p_hi)]
            lam = lo + t * (hi - lo)
            if logs is not None:
                logs = [math.log(p) if p > 0 else v for p, v in zip(ps, l_lo)]
            break
        if s < 1.0:
            lo = mid
        else:
            hi = mid
    else:
        raise NonConvergenceError(f"bisection did not converge on {menu} within {max_iter} iterations")

    dist = ChoiceDistribution(menu, tuple(ps))
    partial = SolveResult(dist, lam, it, 0.0, tuple(logs) if logs is not None else None)
    res = foc_residuals(model, menu, partial)
    return SolveResult(dist, lam, it, max(res), partial.log_probs)


def objective_value(model: ModelSpec, menu: Menu, rho: ChoiceDistribution) -> float:
    if rho.menu != menu:
        raise MenuMismatchError(f"distribution is on {rho.menu}, not {menu}")
    us, ws = _menu_terms(model, menu)
    return math.fsum(u * p - cost_value(model.family, w, p) for u, w, p in zip(us, ws, rho.probs))


def foc_residuals(model: ModelSpec, menu: Menu, result: SolveResult) -> list[float]:
    """Per-allocation KKT violation, scaled by ``max(1, a(x))``.

    Interior coordinates report ``|u - c'(p) + lam|``; boundary coordinates
    report how far the corresponding inequality is violated (0 if it holds).
    """
    us, ws = _menu_terms(model, menu)
    lam = result.lam
    out = []
    for i, (u, w) in enumerate(zip(us, ws)):
        p = result.distribution.probs[i]
        scale = max(1.0, w)
        if model.family == "entropy":
            logp = result.log_probs[i] if result.log_probs is not None else (math.log(p) if p > 0 else -math.inf)
            if logp == -math.inf:
                out.append(math.inf)  # c'(0+) = -inf: zero mass is never optimal
            elif logp >= 0.0:
                out.append(max(0.0, -(u - w + lam)) / scale)
            else:
                out.append(abs((u + lam) / w - 1.0 - logp) * (w / scale))
        else:
            if p <= 0.0:
                out.append(max(0.0, u + lam) / scale)
            elif p >= 1.0:
                out.append(max(0.0, -(u - 2.0 * w + lam)) / scale)
            else:
                out.append(abs(u - 2.0 * w * p + lam) / scale)
    return out


# ---------------------------------------------------------------------------
# brute-force oracle


@functools.lru_cache(maxsize=16)
def _simplex_lattice(n: int, divisions: int) -> np.ndarray:
    """All points of the simplex whose coordinates are multiples of 1/divisions."""
    axes = [np.arange(divisions + 1)] * (n - 1)
    free = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n - 1)
    free = free[free.sum(axis=1) <= divisions]
    last = divisions - free.sum(axis=1, keepdims=True)
    pts = np.hstack([free, last])
    pts.setflags(write=False)
    return pts


def _window_lattice(center: np.ndarray, divisions: int, radius: int) -> np.ndarray:
    n = center.size
    axes = [np.arange(max(0, c - radius), min(divisions, c + radius) + 1) for c in center[:-1]]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n - 1)
    last = divisions - mesh.sum(axis=1, keepdims=True)
    pts = np.hstack([mesh, last])
    return pts[last[:, 0] >= 0]


def _grid_objective(family: str, us: np.ndarray, ws: np.ndarray, P: np.ndarray) -> np.ndarray:
    cost = xlogy(P, P) if family == "entropy" else P * P
    return P @ us - cost @ ws


def _oracle_grid(model: ModelSpec, menu: Menu, grid_step: float) -> np.ndarray:
    n = len(menu)
    us = np.array([model.utility_of(a) for a in menu])
    ws = np.array([cost_weight(model, a) for a in menu])
    fine = int(round(1.0 / grid_step))
    # coarse pass sized to a few tens of thousands of points
    budget = {2: fine, 3: 250, 4: 100}[n]
    coarse = min(fine, budget)
    pts = _simplex_lattice(n, coarse)
    best = pts[np.argmax(_grid_objective(model.family, us, ws, pts / coarse))]
    # single refinement: fine lattice within two coarse cells of the best point
    ratio = fine / coarse
    center = np.rint(best * ratio).astype(np.int64)
    pts = _window_lattice(center, fine, int(math.ceil(2 * ratio)))
    vals = _grid_objective(model.family, us, ws, pts / fine)
    return pts[np.argmax(vals)] / fine


def _project_simplex(v: np.ndarray, floor: float) -> np.ndarray:
    """Euclidean projection onto {p >= floor, sum p = 1}."""
    n = v.size
    shifted = v - floor
    mass = 1.0 - n * floor
    u = np.sort(shifted)[::-1]
    css = np.cumsum(u) - mass
    k = np.nonzero(u - css / np.arange(1, n + 1) > 0)[0][-1]
    theta = css[k] / (k + 1)
    return np.maximum(shifted - theta, 0.0) + floor


def _oracle_ascent(model: ModelSpec, menu: Menu, max_steps: int = 50000) -> np.ndarray:
    n = len(menu)
    us = np.array([model.utility_of(a) for a in menu])
    ws = np.array([cost_weight(model, a) for a in menu])
    entropy = model.family == "entropy"
    floor = 1e-15 if entropy else 0.0

    def f(p):
        return float(_grid_objective(model.family, us, ws, p[None, :])[0])

    def grad(p):
        return us - ws * (np.log(p) + 1.0) if entropy else us - 2.0 * ws * p

    p = np.full(n, 1.0 / n)
    step = 1.0 / (2.0 * ws.max())
    fp = f(p)
    for _ in range(max_steps):
        g = grad(p)
        while True:
            q = _project_simplex(p + step * g, floor)
            fq = f(q)
            if fq >= fp + 1e-4 * g @ (q - p) or step < 1e-300:
                break
            step *= 0.5
        if np.max(np.abs(q - p)) < 1e-13:
            p = q
            break
        p, fp = q, fq
        step *= 2.0
    return p


def oracle_solve(model: ModelSpec, menu: Menu, grid_step: float = 1e-3, method: str = "grid") -> ChoiceDistribution:
    """Maximize the objective without the multiplier: simplex grid or projected ascent.

    The grid variant handles menus of up to four allocations.
    """
    if len(menu) == 1:
        return ChoiceDistribution(menu, (1.0,))
    if method == "grid":
        if len(menu) > 4:
            raise SpecError("grid oracle supports at most 4 allocations", field="menu")
        p = _oracle_grid(model, menu, grid_step)
    elif method == "ascent":
        p = _oracle_ascent(model, menu)
    else:
        raise SpecError(f"unknown oracle method {method!r}", field="method")
    p = p / p.sum()
    return ChoiceDistribution(menu, tuple(float(v) for v in p))


# ---------------------------------------------------------------------------
# batches


def solve_dataset(
    model: ModelSpec,
    menus: Sequence[Menu],
    tol: float = DEFAULT_TOL,
    workers: int | None = None,
    eps_tie: float | None = None,
) -> StochasticChoiceDataset:
    """Solve each menu; failures re-raise with the offending menu id."""

    def one(menu: Menu) -> ChoiceDistribution:
        try:
            return solve_menu(model, menu, tol).distribution
        except ApuspError as exc:
            err = type(exc)(f"menu {menu.id}: {exc}")
            raise err from exc

    dists = map_ordered(one, list(menus), workers)
    if eps_tie is None:
        return StochasticChoiceDataset(dists)
    return StochasticChoiceDataset(dists, eps_tie)
