"""Unrolled short-term solvers."""
from .base import (CenterInit, ConstantInit, InitRule, ShortTermLayer, ShortTermResult,
                   ShortTermSolverSpec, run_short_term)
from .cmac import CmacClosedForm, cmac_init, cmac_short_term
from .gp import GradientProjection, estimate_lipschitz, with_trainable_steps
from .mm import MajorizationMinimization
from .wmmse import MatchedFilterInit, WmmseLayer, wmmse_layer, wmmse_objective

__all__ = [
    "CenterInit", "ConstantInit", "InitRule", "ShortTermLayer", "ShortTermResult",
    "ShortTermSolverSpec", "run_short_term", "CmacClosedForm", "cmac_init", "cmac_short_term",
    "GradientProjection", "estimate_lipschitz", "with_trainable_steps",
    "MajorizationMinimization", "MatchedFilterInit", "WmmseLayer", "wmmse_layer",
    "wmmse_objective",
]
