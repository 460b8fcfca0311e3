"""Worked applications: multiple-access power control, hybrid precoding, and a toy."""
from .baselines import dual_ellipsoid_baseline, per_state_power, short_term_constraint_baseline
from .cmac import CmacInstance, capacity, cmac_initial, cmac_problem, cmac_solver, sample_gains
from .thp import ThpInstance, sample_channels, saa_rates, thp_initial, thp_problem, thp_solver
from .toy import TOY_OPTIMUM, toy_initial, toy_problem, toy_solver

__all__ = [
    "dual_ellipsoid_baseline", "per_state_power", "short_term_constraint_baseline",
    "CmacInstance", "capacity", "cmac_initial", "cmac_problem", "cmac_solver", "sample_gains",
    "ThpInstance", "sample_channels", "saa_rates", "thp_initial", "thp_problem", "thp_solver",
    "TOY_OPTIMUM", "toy_initial", "toy_problem", "toy_solver",
]
