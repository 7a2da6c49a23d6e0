"""Discrete Carleman weight calculus: half-step operators, remainders, asymptotic checks."""

from .jets import Jet, JetError, jet_var, jet_add, jet_mul, jet_scale, jet_exp
from .fields import (DomainError, ExprField, ScalarField, SpecError, WeightSpec, make_weights,
                     regime_check, theta, theta_max)
from .discrete import (BiIndex, MultiIndex, apply_bi, avg, diff, dt_diff, tepper_sum, translate)

__all__ = [
    "Jet", "JetError", "jet_var", "jet_add", "jet_mul", "jet_scale", "jet_exp",
    "DomainError", "ExprField", "ScalarField", "SpecError", "WeightSpec", "make_weights",
    "regime_check", "theta", "theta_max",
    "BiIndex", "MultiIndex", "apply_bi", "avg", "diff", "dt_diff", "tepper_sum", "translate",
]
