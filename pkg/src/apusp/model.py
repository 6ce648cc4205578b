"""Domain types and the three ingredients of the model.

An instance pairs a selfish utility ``u`` (a function of the decision
maker's own payoff only), a personal-norm utility ``phi`` over whole
allocations, and a family of randomization costs ``c_a(p)`` whose weight
``a(x)`` is derived from the allocation.  Everything here is an immutable
value; evaluation functions are pure.
"""

from __future__ import annotations

import functools
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Sequence

from apusp.errors import (
    CostDomainError,
    MissingTableEntryError,
    NonPositiveNormError,
    NonPositiveWeightError,
    SpecError,
    WeightOverflowError,
)

FAMILIES = ("entropy", "quadratic")
WEIGHT_RULES = ("selfish_exponent", "inverse_norm_exponent", "fs_exponent", "constant")
NORM_KINDS = ("multiplicative", "fehr_schmidt", "selfish", "table")

PROB_TOL = 1e-9
_LOG_FLOAT_MAX = math.log(sys.float_info.max)


def fmt_num(v: float) -> str:
    """Shortest round-trip text for a payoff (``5`` rather than ``5.0``)."""
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _finite(value: Any, name: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError):
        raise SpecError(f"{name} must be a real number, got {value!r}", field=name) from None
    if not math.isfinite(v):
        raise SpecError(f"{name} must be finite, got {value!r}", field=name)
    return v


# ---------------------------------------------------------------------------
# allocations, menus, distributions


@dataclass(frozen=True)
class Allocation:
    """Payoff pair: ``x1`` to the decision maker, ``x2`` to the recipient."""

    x1: float
    x2: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "x1", _finite(self.x1, "x1"))
        object.__setattr__(self, "x2", _finite(self.x2, "x2"))

    @property
    def is_fair(self) -> bool:
        return self.x1 == self.x2

    @property
    def label(self) -> str:
        return f"{fmt_num(self.x1)}:{fmt_num(self.x2)}"

    @classmethod
    def parse(cls, token: str) -> Allocation:
        parts = token.strip().split(":")
        if len(parts) != 2:
            raise SpecError(f"allocation {token!r} is not of the form x1:x2")
        return cls(float(parts[0]), float(parts[1]))

    def __str__(self) -> str:
        return f"({fmt_num(self.x1)},{fmt_num(self.x2)})"


def _canonical_key(a: Allocation) -> tuple[float, float]:
    return (-a.x1, -a.x2)


class Menu:
    """Finite nonempty set of allocations in canonical order (x1 desc, x2 desc)."""

    __slots__ = ("allocations", "_set")

    def __init__(self, allocations: Iterable[Allocation | tuple[float, float]]):
        allocs = [a if isinstance(a, Allocation) else Allocation(*a) for a in allocations]
        if not allocs:
            raise SpecError("menu must contain at least one allocation", field="menu")
        as_set = frozenset(allocs)
        if len(as_set) != len(allocs):
            raise SpecError("menu contains duplicate allocations", field="menu")
        object.__setattr__(self, "allocations", tuple(sorted(allocs, key=_canonical_key)))
        object.__setattr__(self, "_set", as_set)

    def __setattr__(self, name, value):
        raise AttributeError("Menu is immutable")

    @property
    def id(self) -> str:
        return "|".join(a.label for a in self.allocations)

    @property
    def allocation_set(self) -> frozenset[Allocation]:
        return self._set

    def __len__(self) -> int:
        return len(self.allocations)

    def __iter__(self) -> Iterator[Allocation]:
        return iter(self.allocations)

    def __contains__(self, a: object) -> bool:
        return a in self._set

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Menu) and self._set == other._set

    def __hash__(self) -> int:
        return hash(self._set)

    def __repr__(self) -> str:
        return f"Menu({self.id!r})"

    def __str__(self) -> str:
        return "{" + ",".join(str(a) for a in self.allocations) + "}"

    def index(self, a: Allocation) -> int:
        return self.allocations.index(a)

    def issubset(self, other: Menu) -> bool:
        return self._set <= other._set

    def union(self, *allocs: Allocation) -> Menu:
        return Menu(self._set.union(allocs))

    @classmethod
    def parse(cls, literal: str, sep: str = ",") -> Menu:
        """Parse ``"4:4,5:2"``; errors name the 1-based offending token."""
        tokens = literal.split(sep)
        allocs = []
        for i, tok in enumerate(tokens, start=1):
            parts = tok.strip().split(":")
            try:
                if len(parts) != 2:
                    raise ValueError
                allocs.append(Allocation(float(parts[0]), float(parts[1])))
            except (ValueError, SpecError):
                raise SpecError(
                    f"menu token {i} ({tok.strip()!r}) is not x1:x2 with finite numeric payoffs",
                    field=f"menu[{i}]",
                ) from None
        return cls(allocs)

    @classmethod
    def from_id(cls, menu_id: str) -> Menu:
        return cls.parse(menu_id, sep="|")


@dataclass(frozen=True)
class ChoiceDistribution:
    """Choice probabilities aligned with ``menu.allocations``."""

    menu: Menu
    probs: tuple[float, ...]

    def __post_init__(self) -> None:
        probs = tuple(float(p) for p in self.probs)
        if len(probs) != len(self.menu):
            raise SpecError(
                f"{len(probs)} probabilities for a menu of {len(self.menu)} allocations",
                field="probs",
            )
        for a, p in zip(self.menu, probs):
            if not (-PROB_TOL <= p <= 1 + PROB_TOL) or math.isnan(p):
                raise SpecError(f"probability of {a} is {p}, outside [0, 1]", field="probs")
        total = math.fsum(probs)
        if abs(total - 1.0) > PROB_TOL:
            raise SpecError(f"probabilities on {self.menu} sum to {total!r}", field="probs")
        object.__setattr__(self, "probs", tuple(min(max(p, 0.0), 1.0) for p in probs))

    @classmethod
    def from_mapping(cls, mapping: Mapping[Allocation, float]) -> ChoiceDistribution:
        menu = Menu(mapping.keys())
        return cls(menu, tuple(mapping[a] for a in menu))

    def prob(self, a: Allocation) -> float:
        return self.probs[self.menu.index(a)]

    def items(self) -> Iterator[tuple[Allocation, float]]:
        return zip(self.menu.allocations, self.probs)

    def as_dict(self) -> dict[Allocation, float]:
        return dict(self.items())


# ---------------------------------------------------------------------------
# specs


@dataclass(frozen=True)
class UtilitySpec:
    """Selfish utility of own payoff: identity, or ``slope * x1 + intercept``."""

    kind: str = "linear"
    slope: float = 1.0
    intercept: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("linear", "affine"):
            raise SpecError(f"unknown utility kind {self.kind!r}", field="utility.kind")
        if self.kind == "linear" and (self.slope != 1.0 or self.intercept != 0.0):
            raise SpecError("linear utility takes no parameters", field="utility")
        slope = _finite(self.slope, "utility.slope")
        if slope <= 0:
            raise SpecError("utility slope must be > 0", field="utility.slope")
        object.__setattr__(self, "slope", slope)
        object.__setattr__(self, "intercept", _finite(self.intercept, "utility.intercept"))

    @classmethod
    def affine(cls, slope: float, intercept: float = 0.0) -> UtilitySpec:
        return cls("affine", slope, intercept)


@dataclass(frozen=True)
class NormSpec:
    """Personal-norm utility over allocations.

    ``table`` holds ``(allocation, phi)`` pairs and is only used by the
    table kind.  The selfish kind delegates to the model's utility.
    """

    kind: str = "multiplicative"
    alpha: float | None = None
    beta: float | None = None
    table: tuple[tuple[Allocation, float], ...] = field(default=(), repr=False)

    def __post_init__(self) -> None:
        if self.kind not in NORM_KINDS:
            raise SpecError(f"unknown norm kind {self.kind!r}", field="norm.kind")
        if self.kind == "fehr_schmidt":
            alpha = _finite(self.alpha, "norm.alpha")
            beta = _finite(self.beta, "norm.beta")
            if alpha <= 0:
                raise SpecError("fehr_schmidt alpha must be > 0", field="norm.alpha")
            if not 0 < beta < 1:
                raise SpecError("fehr_schmidt beta must lie in (0, 1)", field="norm.beta")
            object.__setattr__(self, "alpha", alpha)
            object.__setattr__(self, "beta", beta)
        if self.kind == "table":
            entries = tuple((a, _finite(v, f"norm.table[{a}]")) for a, v in self.table)
            if len({a for a, _ in entries}) != len(entries):
                raise SpecError("norm table has duplicate allocations", field="norm.table")
            fair = sorted((a.x1, v) for a, v in entries if a.is_fair)
            for (x, vx), (y, vy) in zip(fair, fair[1:]):
                if not vy > vx:
                    raise SpecError(
                        f"norm table is not increasing on fair allocations: "
                        f"phi({fmt_num(y)},{fmt_num(y)})={vy} <= phi({fmt_num(x)},{fmt_num(x)})={vx}",
                        field="norm.table",
                    )
            object.__setattr__(self, "table", entries)

    @classmethod
    def multiplicative(cls) -> NormSpec:
        return cls("multiplicative")

    @classmethod
    def fehr_schmidt(cls, alpha: float, beta: float) -> NormSpec:
        return cls("fehr_schmidt", alpha, beta)

    @classmethod
    def selfish(cls) -> NormSpec:
        return cls("selfish")

    @classmethod
    def from_table(cls, mapping: Mapping[Allocation, float]) -> NormSpec:
        return cls("table", table=tuple(mapping.items()))


@dataclass(frozen=True)
class WeightRule:
    kind: str
    eta: float | None = None
    gamma: float | None = None
    alpha: float | None = None
    beta: float | None = None
    a: float | None = None

    _REQUIRED = {
        "selfish_exponent": ("eta", "gamma"),
        "inverse_norm_exponent": ("eta", "gamma"),
        "fs_exponent": ("eta", "alpha", "beta"),
        "constant": ("a",),
    }

    def __post_init__(self) -> None:
        if self.kind not in WEIGHT_RULES:
            raise SpecError(f"unknown weight rule {self.kind!r}", field="cost.weight_rule")
        required = self._REQUIRED[self.kind]
        for name in ("eta", "gamma", "alpha", "beta", "a"):
            value = getattr(self, name)
            path = f"cost.weight_rule.{self.kind}.{name}"
            if name not in required:
                if value is not None:
                    raise SpecError(f"{self.kind} does not take {name}", field=path)
                continue
            v = _finite(value, path)
            if name == "eta" and v <= 1:
                raise SpecError("eta must be > 1", field=path)
            if name != "eta" and v <= 0:
                raise SpecError(f"{name} must be > 0", field=path)
            object.__setattr__(self, name, v)

    def params(self) -> dict[str, float]:
        return {k: getattr(self, k) for k in self._REQUIRED[self.kind]}


@dataclass(frozen=True)
class CostFamilySpec:
    family: str
    rule: WeightRule

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise SpecError(f"unknown cost family {self.family!r}", field="cost.family")


@dataclass(frozen=True)
class ModelSpec:
    utility: UtilitySpec
    norm: NormSpec
    cost: CostFamilySpec

    @property
    def family(self) -> str:
        return self.cost.family

    def utility_of(self, a: Allocation) -> float:
        return eval_selfish_utility(self.utility, a)

    def norm_of(self, a: Allocation) -> float:
        return eval_norm(self.norm, a, self.utility)

    def weight_of(self, a: Allocation) -> float:
        return cost_weight(self, a)


# ---------------------------------------------------------------------------
# evaluation


def eval_selfish_utility(spec: UtilitySpec, a: Allocation) -> float:
    return spec.slope * a.x1 + spec.intercept


def eval_norm(spec: NormSpec, a: Allocation, utility: UtilitySpec | None = None) -> float:
    if spec.kind == "multiplicative":
        return (a.x1 + 1.0) * (a.x2 + 1.0)
    if spec.kind == "fehr_schmidt":
        return a.x1 - spec.alpha * max(a.x2 - a.x1, 0.0) - spec.beta * max(a.x1 - a.x2, 0.0)
    if spec.kind == "selfish":
        return eval_selfish_utility(utility or UtilitySpec(), a)
    for entry, value in spec.table:
        if entry == a:
            return value
    raise MissingTableEntryError(f"norm table has no entry for {a}")


def log_cost_weight(model: ModelSpec, a: Allocation) -> float:
    """Natural log of the cost weight ``a(x)``; exponents never leave log space."""
    rule = model.cost.rule
    if rule.kind == "constant":
        return math.log(rule.a)
    if rule.kind == "selfish_exponent":
        exponent = model.utility_of(a) / rule.gamma
    elif rule.kind == "inverse_norm_exponent":
        phi = model.norm_of(a)
        if phi <= 0:
            raise NonPositiveNormError(f"phi{a} = {phi} <= 0; inverse_norm_exponent needs phi > 0")
        exponent = rule.gamma / phi
    else:
        exponent = rule.alpha * max(a.x2 - a.x1, 0.0) + rule.beta * max(a.x1 - a.x2, 0.0)
    return exponent * math.log(rule.eta)


@functools.lru_cache(maxsize=65536)
def cost_weight(model: ModelSpec, a: Allocation) -> float:
    logw = log_cost_weight(model, a)
    if logw > _LOG_FLOAT_MAX:
        raise WeightOverflowError(f"cost weight for {a} overflows (log weight {logw:.6g})")
    w = math.exp(logw)
    if w <= 0.0:
        raise NonPositiveWeightError(f"cost weight for {a} underflows to 0 (log weight {logw:.6g})")
    return w


def _check_weight(a: float) -> None:
    if not a > 0:
        raise NonPositiveWeightError(f"cost weight must be > 0, got {a}")


def cost_value(family: str, a: float, p: float) -> float:
    _check_weight(a)
    if family == "entropy":
        return 0.0 if p == 0.0 else a * p * math.log(p)
    if family == "quadratic":
        return a * p * p
    raise SpecError(f"unknown cost family {family!r}", field="family")


def cost_marginal(family: str, a: float, p: float) -> float:
    _check_weight(a)
    if family == "entropy":
        if not 0.0 < p < 1.0:
            raise CostDomainError(f"entropy marginal cost is undefined at p={p}")
        return a * (math.log(p) + 1.0)
    if family == "quadratic":
        return 2.0 * a * p
    raise SpecError(f"unknown cost family {family!r}", field="family")


def log_marginal_inverse(a: float, m: float) -> float:
    """Log of the entropy-family inverse marginal, clamped at log 1 = 0."""
    return min(m / a - 1.0, 0.0)


def cost_marginal_inverse(family: str, a: float, m: float) -> float:
    if family == "entropy":
        return math.exp(log_marginal_inverse(a, m))
    if family == "quadratic":
        return min(max(m / (2.0 * a), 0.0), 1.0)
    raise SpecError(f"unknown cost family {family!r}", field="family")


# ---------------------------------------------------------------------------
# marginal-cost ordering diagnostic


@dataclass(frozen=True)
class OrderingCheck:
    lower: Allocation  # smaller phi, must carry the larger marginal cost
    higher: Allocation
    p: float
    marginal_lower: float
    marginal_higher: float

    @property
    def ok(self) -> bool:
        return self.marginal_lower > self.marginal_higher


@dataclass(frozen=True)
class MarginalOrderingReport:
    checks: tuple[OrderingCheck, ...]

    @property
    def passed(self) -> bool:
        return all(c.ok for c in self.checks)

    @property
    def failures(self) -> tuple[OrderingCheck, ...]:
        return tuple(c for c in self.checks if not c.ok)


def check_marginal_ordering(
    model: ModelSpec, allocs: Sequence[Allocation], p_grid: Sequence[float]
) -> MarginalOrderingReport:
    """For each pair with phi(x) < phi(y), test c'_x(p) > c'_y(p) on the grid."""
    if len(set(allocs)) != len(allocs):
        raise SpecError("allocations must be pairwise distinct", field="allocs")
    for p in p_grid:
        if not 0.0 < p < 1.0:
            raise SpecError(f"grid point {p} is outside (0, 1)", field="p_grid")
    checks = []
    for i, x in enumerate(allocs):
        for y in allocs[i + 1:]:
            fx, fy = model.norm_of(x), model.norm_of(y)
            if fx == fy:
                continue
            lo, hi = (x, y) if fx < fy else (y, x)
            wlo, whi = cost_weight(model, lo), cost_weight(model, hi)
            for p in p_grid:
                checks.append(
                    OrderingCheck(
                        lo, hi, p,
                        cost_marginal(model.family, wlo, p),
                        cost_marginal(model.family, whi, p),
                    )
                )
    return MarginalOrderingReport(tuple(checks))


# ---------------------------------------------------------------------------
# JSON model files


def _kind_and_params(node: Any, where: str) -> tuple[str, dict]:
    if isinstance(node, str):
        return node, {}
    if isinstance(node, dict) and len(node) == 1:
        (kind, params), = node.items()
        if isinstance(params, dict):
            return kind, params
        if kind == "table" and isinstance(params, list):
            return kind, {"rows": params}
    raise SpecError(f"{where} must be a string or a single-key object", field=where)


def _require(d: Any, key: str, where: str) -> Any:
    if not isinstance(d, dict) or key not in d:
        raise SpecError(f"missing field {where}.{key}", field=f"{where}.{key}")
    return d[key]


def model_from_dict(d: Mapping[str, Any]) -> ModelSpec:
    if not isinstance(d, Mapping):
        raise SpecError("model config must be a JSON object", field="model")
    unknown = set(d) - {"utility", "norm", "cost"}
    if unknown:
        raise SpecError(f"unknown top-level field(s) {sorted(unknown)}", field=sorted(unknown)[0])

    kind, params = _kind_and_params(_require(_require(d, "utility", "model"), "kind", "utility"), "utility.kind")
    if kind == "linear" and not params:
        utility = UtilitySpec()
    elif kind == "affine":
        utility = UtilitySpec.affine(
            _require(params, "slope", "utility.kind.affine"),
            _require(params, "intercept", "utility.kind.affine"),
        )
    else:
        raise SpecError(f"unknown utility kind {kind!r}", field="utility.kind")

    kind, params = _kind_and_params(_require(_require(d, "norm", "model"), "kind", "norm"), "norm.kind")
    if kind == "fehr_schmidt":
        norm = NormSpec.fehr_schmidt(
            _require(params, "alpha", "norm.kind.fehr_schmidt"),
            _require(params, "beta", "norm.kind.fehr_schmidt"),
        )
    elif kind == "table":
        rows = params.get("rows", [])
        mapping = {}
        for i, row in enumerate(rows):
            where = f"norm.kind.table[{i}]"
            mapping[Allocation(_require(row, "x1", where), _require(row, "x2", where))] = _require(row, "phi", where)
        norm = NormSpec.from_table(mapping)
    elif kind in ("multiplicative", "selfish") and not params:
        norm = NormSpec(kind)
    else:
        raise SpecError(f"unknown norm kind {kind!r}", field="norm.kind")

    cost = _require(d, "cost", "model")
    family = _require(cost, "family", "cost")
    kind, params = _kind_and_params(_require(cost, "weight_rule", "cost"), "cost.weight_rule")
    if kind not in WEIGHT_RULES:
        raise SpecError(f"unknown weight rule {kind!r}", field="cost.weight_rule")
    expected = set(WeightRule._REQUIRED[kind])
    if set(params) != expected:
        raise SpecError(
            f"{kind} takes exactly {sorted(expected)}, got {sorted(params)}",
            field=f"cost.weight_rule.{kind}",
        )
    return ModelSpec(utility, norm, CostFamilySpec(family, WeightRule(kind, **params)))


def model_to_dict(model: ModelSpec) -> dict[str, Any]:
    u = model.utility
    utility: Any = "linear" if u.kind == "linear" else {"affine": {"slope": u.slope, "intercept": u.intercept}}
    n = model.norm
    if n.kind == "fehr_schmidt":
        norm: Any = {"fehr_schmidt": {"alpha": n.alpha, "beta": n.beta}}
    elif n.kind == "table":
        norm = {"table": [{"x1": a.x1, "x2": a.x2, "phi": v} for a, v in n.table]}
    else:
        norm = n.kind
    rule = model.cost.rule
    return {
        "utility": {"kind": utility},
        "norm": {"kind": norm},
        "cost": {"family": model.family, "weight_rule": {rule.kind: rule.params()}},
    }


def load_model(path: str | Path) -> ModelSpec:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: invalid JSON ({exc})", field="config") from None
    return model_from_dict(data)
