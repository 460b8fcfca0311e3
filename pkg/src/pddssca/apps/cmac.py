"""Cognitive multiple-access channel: sum-capacity under power and interference budgets.

``N`` secondary users share a multiple-access channel with gains ``a`` and
interfere with a primary receiver through gains ``b``. Powers ``p`` are
chosen per channel state from prices ``lam`` (per-user average power) and
``upsilon`` (average interference), which form the long-term variables.
The objective sample is the negated capacity ``-log(1 + a.p)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import Box, ProblemDefinition, ProblemError
from ..shortterm import CmacClosedForm, ShortTermSolverSpec, cmac_init
from ..shortterm.cmac import DEFAULT_P_MAX


@dataclass(frozen=True)
class CmacInstance:
    """Configuration of the multiple-access example.

    Parameters
    ----------
    N : int
        Number of users.
    gamma : float
        Interference budget at the primary receiver.
    power_db : float
        Per-user average power budget in dB (the same for every user).
    p_max : float
        Upper end of the short-term power box.
    gain_law : {"exponential", "uniform"}
        Law of every gain ``a_i`` and ``b_i``; "uniform" is uniform on
        ``[0, 2 * gain_mean]``.
    gain_mean : float
    """

    N: int = 2
    gamma: float = 0.5
    power_db: float = 5.0
    p_max: float = DEFAULT_P_MAX
    gain_law: str = "exponential"
    gain_mean: float = 1.0

    def __post_init__(self):
        if self.N < 1 or self.gamma <= 0 or self.p_max <= 0 or self.gain_mean <= 0:
            raise ProblemError("CMAC instance needs N >= 1 and positive gamma, p_max, gain_mean")
        if self.gain_law not in GAIN_LAWS:
            raise ProblemError(f"unknown gain law {self.gain_law!r}")

    @property
    def power(self) -> np.ndarray:
        return np.full(self.N, 10.0 ** (self.power_db / 10.0))


GAIN_LAWS = ("exponential", "uniform")


def sample_gains(rng: np.random.Generator, size: int, N: int, law: str = "exponential",
                 mean: float = 1.0) -> np.ndarray:
    """I.i.d. gains of the given mean, shape ``(size, 2, N)`` with ``[a; b]`` per state."""
    if law == "exponential":
        return rng.exponential(mean, size=(size, 2, N))
    if law == "uniform":
        return rng.uniform(0.0, 2.0 * mean, size=(size, 2, N))
    raise ProblemError(f"unknown gain law {law!r}")


def capacity(a, p) -> np.ndarray:
    """Sum capacity ``log(1 + a.p)`` in nats (last axis is the user axis)."""
    return np.log1p(np.sum(np.asarray(a) * np.asarray(p), axis=-1))


def cmac_problem(inst: CmacInstance, pool=None) -> ProblemDefinition:
    """Build the problem; ``lam`` is ``(lam_1, .., lam_N, upsilon)``.

    Parameters
    ----------
    inst : CmacInstance
    pool : ndarray, shape (T, 2, N), optional
        When given, the sampler draws states uniformly from this fixed set.
    """
    N = inst.N
    P = inst.power

    def g0(x, p, xi):
        a = xi[0]
        s = 1.0 + a @ p
        return -np.log(s), np.zeros(0), -a / s

    def power_fn(i):
        def gi(x, p, xi):
            e = np.zeros(N)
            e[i] = 1.0
            return p[i] - P[i], np.zeros(0), e
        return gi

    def interference(x, p, xi):
        return xi[1] @ p - inst.gamma, np.zeros(0), xi[1].copy()

    def second_order(i, x, p, xi, v):
        if i != 0:
            return np.zeros(N), np.zeros(0)
        a = xi[0]
        s = 1.0 + a @ p
        return a * (a @ v) / s**2, np.zeros(0)

    if pool is None:
        def sampler(rng, size):
            return list(sample_gains(rng, size, N, inst.gain_law, inst.gain_mean))
    else:
        pool = np.asarray(pool, dtype=float)

        def sampler(rng, size):
            return list(pool[rng.integers(0, pool.shape[0], size=size)])

    return ProblemDefinition(
        n_x=0, n_y=N, m=N + 1, n=0,
        domain_x=Box(np.zeros(0), np.zeros(0)),
        domain_y=Box.uniform(N, 0.0, inst.p_max),
        sample_fns=[g0] + [power_fn(i) for i in range(N)] + [interference],
        sampler=sampler, second_order=second_order, objective_sign=-1.0, name="cmac",
    )


def cmac_solver(problem: ProblemDefinition, inst: CmacInstance) -> ShortTermSolverSpec:
    return ShortTermSolverSpec(J=1, layer=CmacClosedForm(problem, inst.p_max),
                               init_rule=cmac_init(inst.N), layer_params={"closed_form": True})


def cmac_initial(inst: CmacInstance):
    """Initial long-term point: unit prices, no ``x``."""
    return np.zeros(0), np.ones(inst.N + 1)
