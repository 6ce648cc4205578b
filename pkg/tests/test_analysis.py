import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import comb

from apusp.analysis import compromise_test, fit_cost_family, parse_grid, sample_draws, sse
from apusp.errors import EmptySampleError, SpecError
from apusp.model import ChoiceDistribution, Menu
from apusp.presets import FAMILIES, ia_model, shame_model
from apusp.solver import solve_dataset, solve_menu

PAIR = Menu.parse("4:4,5:2")
TRIPLE = Menu.parse("4:4,5:2,6:1")
SEC33 = [PAIR, TRIPLE, Menu.parse("4:4,6:1")]


def test_sample_examples():
    assert sample_draws(ChoiceDistribution(Menu.parse("1:1"), (1.0,)), 50, seed=3) == (50,)
    assert sample_draws(ChoiceDistribution(PAIR, (0.5, 0.5)), 0, seed=3) == (0, 0)
    n = 100_000
    for seed in (0, 1, 12345):
        a, b = sample_draws(ChoiceDistribution(PAIR, (0.5, 0.5)), n, seed)
        assert a + b == n
        assert abs(a - n / 2) <= 4 * math.sqrt(n * 0.25)
    with pytest.raises(SpecError):
        sample_draws(ChoiceDistribution(PAIR, (0.5, 0.5)), -1, seed=0)


def test_sample_deterministic_and_skips_zero_mass():
    dist = solve_menu(ia_model(), Menu.parse("10:10,0:0")).distribution
    assert sample_draws(dist, 1000, seed=5) == (1000, 0)
    shame = solve_menu(shame_model(), TRIPLE).distribution
    assert sample_draws(shame, 1000, 7) == sample_draws(shame, 1000, 7)
    assert sample_draws(shame, 1000, 7) != sample_draws(shame, 1000, 8)


def test_compromise_examples():
    r = compromise_test(0, 10)
    assert r.p_value == pytest.approx(0.000977, abs=1e-6) and r.reject
    r = compromise_test(10, 0)
    assert r.p_value == 1 and not r.reject
    r = compromise_test(5, 5)
    exact = sum(comb(10, k, exact=True) for k in range(5, 11)) / 2 ** 10
    assert r.p_value == pytest.approx(exact, rel=1e-12)
    assert r.p_value == pytest.approx(0.623, abs=1e-3) and not r.reject
    with pytest.raises(EmptySampleError):
        compromise_test(0, 0)
    with pytest.raises(SpecError):
        compromise_test(-1, 3)


@given(st.integers(1, 200), st.data())
def test_p_value_monotone_in_n_y(n, data):
    k = data.draw(st.integers(0, n - 1))
    assert compromise_test(n - k - 1, k + 1).p_value <= compromise_test(n - k, k).p_value


@given(st.integers(0, 60), st.integers(0, 60))
def test_p_value_matches_direct_sum(n_x, n_y):
    if n_x + n_y == 0:
        return
    n = n_x + n_y
    direct = sum(comb(n, k, exact=True) for k in range(n_y, n + 1)) / 2 ** n
    assert compromise_test(n_x, n_y).p_value == pytest.approx(direct, rel=1e-9, abs=1e-300)


def test_parse_grid():
    assert parse_grid("gamma=50:60:5") == [{"gamma": 50.0}, {"gamma": 55.0}, {"gamma": 60.0}]
    assert parse_grid("gamma=1:2:1;eta=2") == [{"gamma": 1.0, "eta": 2.0}, {"gamma": 2.0, "eta": 2.0}]
    assert len(parse_grid("gamma=50:150:5")) == 21
    for bad in ("gamma=5:4:1", "", "gamma", "gamma=1:2:0", "gamma=a:b:c", "gamma=1:2"):
        with pytest.raises(SpecError):
            parse_grid(bad)


def test_fit_examples():
    ds = solve_dataset(shame_model(), SEC33)
    res = fit_cost_family(ds, "shame", parse_grid("gamma=50:150:5"))
    assert res.best_params == {"gamma": 100.0} and res.best_sse <= 1e-12
    assert all(s >= 0 for _, s in res.trace)
    ia = solve_dataset(ia_model(), SEC33)
    mismatch = fit_cost_family(ia, FAMILIES["shame"], parse_grid("gamma=50:150:5"))
    assert mismatch.best_sse > 1e-3
    assert mismatch.ranked()[0][1] == mismatch.best_sse


def test_fit_tie_goes_to_first_point():
    ds = solve_dataset(shame_model(), SEC33)
    res = fit_cost_family(ds, "shame", [{"gamma": 100.0}, {"gamma": 100.0}])
    assert res.best_params == {"gamma": 100.0}
    assert res.trace[0][1] == res.trace[1][1]


def test_fit_rejects_unknown_parameter_and_empty_grid():
    ds = solve_dataset(shame_model(), SEC33)
    with pytest.raises(SpecError):
        fit_cost_family(ds, "shame", [{"alpha": 1.0}])
    with pytest.raises(SpecError):
        fit_cost_family(ds, "shame", [])


@pytest.mark.parametrize("family,point", [
    ("shame", {"gamma": 35.0}),
    ("ia", {"alpha": 0.5}),
    ("selfish", {"gamma": 60.0}),
])
def test_fit_round_trip_any_grid_point(family, point):
    (name, value), = point.items()
    grid = [{name: value + d} for d in (-10.0, -5.0, 0.0, 5.0, 10.0) if value + d > 0]
    ds = solve_dataset(FAMILIES[family].model(**point), SEC33)
    res = fit_cost_family(ds, family, grid)
    assert res.best_params == point and res.best_sse < 1e-12


def test_fit_parallel_matches_sequential():
    ds = solve_dataset(shame_model(), SEC33)
    grid = parse_grid("gamma=50:150:10")
    a = fit_cost_family(ds, "shame", grid, workers=1)
    b = fit_cost_family(ds, "shame", grid, workers=4)
    assert a.to_json() == b.to_json()


def test_fit_renderings():
    ds = solve_dataset(shame_model(), SEC33)
    res = fit_cost_family(ds, "shame", parse_grid("gamma=90:110:10"))
    assert res.to_csv().splitlines()[0] == "gamma,sse"
    assert "best: gamma=100" in res.to_markdown()
    assert res.to_dict()["grid"][0]["params"] == {"gamma": 100.0}


def test_sse_zero_on_self():
    ds = solve_dataset(shame_model(), SEC33)
    assert sse(ds, ds) == 0.0
    assert np.isfinite(sse(solve_dataset(ia_model(), SEC33), ds))
