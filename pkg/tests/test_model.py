import json
import math

import pytest
from hypothesis import given, strategies as st

from apusp.errors import (
    CostDomainError,
    MissingTableEntryError,
    NonPositiveNormError,
    NonPositiveWeightError,
    SpecError,
    WeightOverflowError,
)
from apusp.model import (
    Allocation,
    ChoiceDistribution,
    CostFamilySpec,
    Menu,
    ModelSpec,
    NormSpec,
    UtilitySpec,
    WeightRule,
    check_marginal_ordering,
    cost_marginal,
    cost_marginal_inverse,
    cost_value,
    cost_weight,
    eval_norm,
    eval_selfish_utility,
    load_model,
    model_from_dict,
    model_to_dict,
)
from apusp.presets import ia_model, selfish_model, shame_model

payoff = st.floats(0, 20, allow_nan=False).map(lambda v: round(v, 3))
weights = st.floats(0.01, 100)
interior = st.floats(0.01, 0.99)


def constant(a, family="entropy"):
    return ModelSpec(UtilitySpec(), NormSpec.multiplicative(), CostFamilySpec(family, WeightRule("constant", a=a)))


# ---------------------------------------------------------------------------
# allocations and menus


def test_menu_canonical_order_and_id():
    m = Menu.parse("4:4,5:2,6:1")
    assert [a.label for a in m] == ["6:1", "5:2", "4:4"]
    assert m.id == "6:1|5:2|4:4"
    assert m == Menu.parse("6:1, 4:4 ,5:2")
    assert hash(m) == hash(Menu.from_id(m.id))
    assert Menu.parse("5:2,5:3").id == "5:3|5:2"


def test_menu_parse_error_names_token():
    with pytest.raises(SpecError) as exc:
        Menu.parse("4:4,five:2")
    assert exc.value.field == "menu[2]"
    assert "token 2" in str(exc.value)


@pytest.mark.parametrize("bad", ["", "4:4,4:4", "4:4,nan:1", "4:4,inf:1", "4"])
def test_menu_rejects(bad):
    with pytest.raises(SpecError):
        Menu.parse(bad)


def test_allocation_exact_equality():
    assert Allocation(0.1, 2) == Allocation(0.1, 2.0)
    assert Allocation(0.1 + 0.2, 0) != Allocation(0.3, 0)
    with pytest.raises(SpecError):
        Allocation(float("nan"), 1)


def test_choice_distribution_validation():
    m = Menu.parse("1:0,0:1")
    ChoiceDistribution(m, (0.5, 0.5 + 5e-10))
    with pytest.raises(SpecError):
        ChoiceDistribution(m, (0.5, 0.6))
    with pytest.raises(SpecError):
        ChoiceDistribution(m, (1.1, -0.1))
    with pytest.raises(SpecError):
        ChoiceDistribution(m, (1.0,))


@given(st.lists(st.tuples(payoff, payoff), min_size=1, max_size=6, unique=True), st.randoms())
def test_menu_order_is_function_of_set(pairs, rnd):
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    assert Menu(pairs).allocations == Menu(shuffled).allocations
    assert Menu.from_id(Menu(pairs).id) == Menu(pairs)


# ---------------------------------------------------------------------------
# utility and norm


def test_selfish_utility():
    assert eval_selfish_utility(UtilitySpec(), Allocation(10, 0)) == 10
    assert eval_selfish_utility(UtilitySpec(), Allocation(5, 5)) == 5
    assert eval_selfish_utility(UtilitySpec.affine(2, 1), Allocation(4, 4)) == 9
    with pytest.raises(SpecError):
        UtilitySpec.affine(0)


def test_norm_kinds():
    assert eval_norm(NormSpec.multiplicative(), Allocation(10, 0)) == 11
    assert eval_norm(NormSpec.multiplicative(), Allocation(5, 5)) == 36
    fs = NormSpec.fehr_schmidt(1, 0.5)
    assert eval_norm(fs, Allocation(5, 2)) == 3.5
    assert eval_norm(fs, Allocation(4, 4)) == 4
    assert eval_norm(fs, Allocation(2, 5)) == -1
    assert eval_norm(NormSpec.selfish(), Allocation(7, 1), UtilitySpec.affine(2, 1)) == 15
    table = NormSpec.from_table({Allocation(1, 1): 1.0, Allocation(2, 2): 3.0})
    assert eval_norm(table, Allocation(2, 2)) == 3.0
    with pytest.raises(MissingTableEntryError):
        eval_norm(table, Allocation(3, 3))


@pytest.mark.parametrize("alpha,beta", [(0, 0.5), (1, 0), (1, 1), (-1, 0.5)])
def test_fehr_schmidt_parameter_domain(alpha, beta):
    with pytest.raises(SpecError):
        NormSpec.fehr_schmidt(alpha, beta)


def test_table_norm_must_increase_on_fair_allocations():
    with pytest.raises(SpecError) as exc:
        NormSpec.from_table({Allocation(1, 1): 2.0, Allocation(2, 2): 1.0})
    assert exc.value.field == "norm.table"


@given(st.floats(0, 50), st.floats(0.01, 10))
def test_parametric_norms_monotone_on_fair(x, d):
    y = x + d
    for spec in (NormSpec.multiplicative(), NormSpec.fehr_schmidt(1, 0.5), NormSpec.selfish()):
        assert eval_norm(spec, Allocation(y, y)) > eval_norm(spec, Allocation(x, x))


# ---------------------------------------------------------------------------
# weights and costs


def test_cost_weight_examples():
    assert cost_weight(shame_model(), Allocation(4, 4)) == pytest.approx(16, rel=1e-14)
    assert cost_weight(selfish_model(), Allocation(4, 4)) == pytest.approx(2 ** 0.04, rel=1e-14)
    assert cost_weight(ia_model(), Allocation(5, 2)) == pytest.approx(8, rel=1e-14)
    assert cost_weight(constant(1.5), Allocation(9, 3)) == 1.5
    # phi(0,0) = 1 gives 2**100, finite
    assert cost_weight(shame_model(), Allocation(0, 0)) == pytest.approx(2.0 ** 100, rel=1e-12)


def test_cost_weight_errors():
    fs_norm = ModelSpec(UtilitySpec(), NormSpec.fehr_schmidt(1, 0.5),
                        CostFamilySpec("entropy", WeightRule("inverse_norm_exponent", eta=2, gamma=1)))
    with pytest.raises(NonPositiveNormError):
        cost_weight(fs_norm, Allocation(0, 4))
    with pytest.raises(WeightOverflowError):
        cost_weight(shame_model(gamma=5000), Allocation(0, 0))


def test_weight_rule_validation():
    with pytest.raises(SpecError):
        WeightRule("constant", a=0)
    with pytest.raises(SpecError):
        WeightRule("selfish_exponent", eta=1, gamma=1)
    with pytest.raises(SpecError):
        WeightRule("constant", a=1, eta=2)
    with pytest.raises(SpecError):
        CostFamilySpec("cubic", WeightRule("constant", a=1))


def test_cost_examples():
    assert cost_value("entropy", 1, 1) == 0
    assert cost_value("entropy", 1, 0) == 0
    assert cost_value("entropy", 2, 0.5) == pytest.approx(-0.693147, abs=1e-6)
    assert cost_value("quadratic", 8, 0.5) == 2.0
    assert cost_marginal("entropy", 1, math.exp(-1)) == pytest.approx(0, abs=1e-15)
    assert cost_marginal("quadratic", 8, 0.5) == 8
    assert cost_marginal("entropy", 1, 1e-300) < -600
    assert cost_marginal_inverse("entropy", 1, 0) == pytest.approx(math.exp(-1))
    assert cost_marginal_inverse("quadratic", 8, 8) == 0.5
    assert cost_marginal_inverse("quadratic", 8, -1) == 0
    assert cost_marginal_inverse("entropy", 1, 50) == 1.0
    with pytest.raises(CostDomainError):
        cost_marginal("entropy", 1, 0)
    with pytest.raises(CostDomainError):
        cost_marginal("entropy", 1, 1)
    with pytest.raises(NonPositiveWeightError):
        cost_value("quadratic", 0, 0.5)


@pytest.mark.parametrize("family", ["entropy", "quadratic"])
@given(a=weights, p=interior, q=interior, t=st.floats(0.05, 0.95))
def test_cost_strictly_convex(family, a, p, q, t):
    if abs(p - q) < 1e-3:
        return
    mid = cost_value(family, a, t * p + (1 - t) * q)
    chord = t * cost_value(family, a, p) + (1 - t) * cost_value(family, a, q)
    assert mid < chord


@pytest.mark.parametrize("family", ["entropy", "quadratic"])
@given(a=weights, p=st.floats(0.01, 0.99))
def test_marginal_matches_finite_difference(family, a, p):
    h = 1e-6
    fd = (cost_value(family, a, p + h) - cost_value(family, a, p - h)) / (2 * h)
    m = cost_marginal(family, a, p)
    assert abs(fd - m) <= 1e-6 * max(abs(m), a)


@pytest.mark.parametrize("family", ["entropy", "quadratic"])
@given(a=weights, p=st.floats(0.001, 0.999))
def test_inverse_marginal_round_trip(family, a, p):
    assert abs(cost_marginal_inverse(family, a, cost_marginal(family, a, p)) - p) <= 1e-10


# ---------------------------------------------------------------------------
# marginal ordering


def test_marginal_ordering_examples():
    pair = [Allocation(4, 4), Allocation(5, 2)]
    assert check_marginal_ordering(ia_model(), pair, [0.1, 0.5, 0.9]).passed
    assert check_marginal_ordering(shame_model(), pair, [0.5]).passed
    low = check_marginal_ordering(shame_model(), pair, [0.1])
    assert not low.passed
    (fail,) = low.failures
    assert fail.lower == Allocation(5, 2) and fail.p == 0.1


def test_marginal_ordering_entropy_restricted_range():
    allocs = [Allocation(x1, x2) for x1, x2 in ((4, 4), (5, 2), (6, 1), (0, 20), (10, 10))]
    above = [0.37, 0.5, 0.9, 0.999]
    below = [0.001, 0.1, 0.36]
    # inverse-norm weights: ordering holds exactly on (1/e, 1)
    assert check_marginal_ordering(shame_model(), allocs, above).passed
    assert not any(c.ok for c in check_marginal_ordering(shame_model(), allocs, below).checks)
    # selfish-exponent weights grow with the norm, so the sign flips the other way
    assert not any(c.ok for c in check_marginal_ordering(selfish_model(), allocs, above).checks)
    assert check_marginal_ordering(selfish_model(), allocs, below).passed


def test_marginal_ordering_preconditions():
    with pytest.raises(SpecError):
        check_marginal_ordering(ia_model(), [Allocation(1, 1)] * 2, [0.5])
    with pytest.raises(SpecError):
        check_marginal_ordering(ia_model(), [Allocation(1, 1)], [1.0])


# ---------------------------------------------------------------------------
# JSON


def test_model_json_examples(tmp_path):
    doc = {
        "utility": {"kind": {"affine": {"slope": 2, "intercept": 1}}},
        "norm": {"kind": {"table": [{"x1": 1, "x2": 1, "phi": 2}, {"x1": 3, "x2": 0, "phi": 1}]}},
        "cost": {"family": "quadratic", "weight_rule": {"constant": {"a": 1.5}}},
    }
    m = model_from_dict(doc)
    assert m.utility == UtilitySpec.affine(2, 1)
    assert m.norm_of(Allocation(3, 0)) == 1
    path = tmp_path / "m.json"
    path.write_text(json.dumps(model_to_dict(shame_model())))
    assert load_model(path) == shame_model()


@pytest.mark.parametrize("doc,field", [
    ({"norm": {"kind": "selfish"}, "cost": {}}, "model.utility"),
    ({"utility": {"kind": "cubic"}, "norm": {"kind": "selfish"},
      "cost": {"family": "entropy", "weight_rule": {"constant": {"a": 1}}}}, "utility.kind"),
    ({"utility": {"kind": "linear"}, "norm": {"kind": "selfish"},
      "cost": {"family": "entropy", "weight_rule": {"constant": {"a": -1}}}}, "cost.weight_rule.constant.a"),
    ({"utility": {"kind": "linear"}, "norm": {"kind": "selfish"},
      "cost": {"family": "entropy", "weight_rule": {"fs_exponent": {"eta": 2}}}}, "cost.weight_rule.fs_exponent"),
    ({"utility": {"kind": "linear"}, "norm": {"kind": {"fehr_schmidt": {"alpha": 1, "beta": 2}}},
      "cost": {"family": "entropy", "weight_rule": {"constant": {"a": 1}}}}, "norm.beta"),
    ({"utility": {"kind": "linear"}, "norm": {"kind": "selfish"},
      "cost": {"family": "cubic", "weight_rule": {"constant": {"a": 1}}}}, "cost.family"),
])
def test_model_json_errors_name_field(doc, field):
    with pytest.raises(SpecError) as exc:
        model_from_dict(doc)
    assert exc.value.field == field


def test_load_model_invalid_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{nope")
    with pytest.raises(SpecError):
        load_model(path)


rules = st.one_of(
    st.builds(lambda e, g: WeightRule("selfish_exponent", eta=e, gamma=g), st.floats(1.01, 5), st.floats(0.1, 500)),
    st.builds(lambda e, g: WeightRule("inverse_norm_exponent", eta=e, gamma=g), st.floats(1.01, 5), st.floats(0.1, 500)),
    st.builds(lambda e, a, b: WeightRule("fs_exponent", eta=e, alpha=a, beta=b),
              st.floats(1.01, 5), st.floats(0.01, 5), st.floats(0.01, 5)),
    st.builds(lambda a: WeightRule("constant", a=a), st.floats(0.01, 100)),
)
norms = st.one_of(
    st.just(NormSpec.multiplicative()), st.just(NormSpec.selfish()),
    st.builds(NormSpec.fehr_schmidt, st.floats(0.01, 5), st.floats(0.01, 0.99)),
)
utilities = st.one_of(st.just(UtilitySpec()), st.builds(UtilitySpec.affine, st.floats(0.01, 10), st.floats(-10, 10)))


@given(utilities, norms, st.sampled_from(["entropy", "quadratic"]), rules)
def test_model_json_round_trip(u, n, fam, rule):
    m = ModelSpec(u, n, CostFamilySpec(fam, rule))
    assert model_from_dict(json.loads(json.dumps(model_to_dict(m)))) == m
