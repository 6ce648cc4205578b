"""Stochastic choice under additive perturbed utility with norm-dependent cost weights."""

from apusp.analysis import FitResult, TestResult, compromise_test, fit_cost_family, parse_grid, sample_draws
from apusp.axioms import AuditReport, RevealedNormRelation, Verdict, audit_all, reveal_norm_ranking
from apusp.dataset import StochasticChoiceDataset, read_dataset_csv, write_dataset_csv
from apusp.errors import ApuspError, NumericalError, SpecError
from apusp.model import (
    Allocation,
    ChoiceDistribution,
    CostFamilySpec,
    Menu,
    ModelSpec,
    NormSpec,
    UtilitySpec,
    WeightRule,
    load_model,
    model_from_dict,
    model_to_dict,
)
from apusp.presets import FAMILIES, PRESETS, get_preset
from apusp.reference import DiffReport, compare_to_reference, load_reference, reproduce
from apusp.solver import SolveResult, oracle_solve, solve_dataset, solve_menu

__version__ = "0.1.0"
