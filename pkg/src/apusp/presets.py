"""Built-in parameterizations used by the reproduction and fitting workflows."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from apusp.errors import SpecError
from apusp.model import CostFamilySpec, ModelSpec, NormSpec, UtilitySpec, WeightRule

# norm used alongside the inequity weight; the weight rule carries its own alpha/beta
IA_NORM = NormSpec.fehr_schmidt(1.0, 0.5)


def selfish_model(eta: float = 2.0, gamma: float = 100.0) -> ModelSpec:
    """Entropy cost weighted by eta ** (u / gamma); the norm is own payoff."""
    return ModelSpec(UtilitySpec(), NormSpec.selfish(),
                     CostFamilySpec("entropy", WeightRule("selfish_exponent", eta=eta, gamma=gamma)))


def ia_model(eta: float = 2.0, alpha: float = 1.0, beta: float = 1.0) -> ModelSpec:
    """Quadratic cost weighted by eta ** (inequity), inequity = alpha*envy + beta*guilt."""
    return ModelSpec(UtilitySpec(), IA_NORM,
                     CostFamilySpec("quadratic", WeightRule("fs_exponent", eta=eta, alpha=alpha, beta=beta)))


def shame_model(eta: float = 2.0, gamma: float = 100.0) -> ModelSpec:
    """Entropy cost weighted by eta ** (gamma / phi) with phi = (x1 + 1)(x2 + 1)."""
    return ModelSpec(UtilitySpec(), NormSpec.multiplicative(),
                     CostFamilySpec("entropy", WeightRule("inverse_norm_exponent", eta=eta, gamma=gamma)))


PRESETS: dict[str, ModelSpec] = {
    "table1-selfish": selfish_model(),
    "sec33-ia": ia_model(),
    "sec33-shame": shame_model(),
}


def get_preset(name: str) -> ModelSpec:
    try:
        return PRESETS[name]
    except KeyError:
        raise SpecError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}", field="preset") from None


@dataclass(frozen=True)
class FamilyTemplate:
    """A parametric model family: builder plus default parameter values."""

    name: str
    build: Callable[..., ModelSpec]
    defaults: tuple[tuple[str, float], ...]

    def model(self, **params: float) -> ModelSpec:
        unknown = set(params) - {k for k, _ in self.defaults}
        if unknown:
            raise SpecError(f"family {self.name!r} has no parameter(s) {sorted(unknown)}", field="grid")
        return self.build(**{**dict(self.defaults), **params})


FAMILIES: dict[str, FamilyTemplate] = {
    "shame": FamilyTemplate("shame", shame_model, (("eta", 2.0), ("gamma", 100.0))),
    "ia": FamilyTemplate("ia", ia_model, (("eta", 2.0), ("alpha", 1.0), ("beta", 1.0))),
    "selfish": FamilyTemplate("selfish", selfish_model, (("eta", 2.0), ("gamma", 100.0))),
}
