"""Two-timescale hybrid precoding: minimum power under average-rate targets.

The analog phases ``theta`` adapt to channel statistics (long-term); the
digital precoder ``G`` adapts to every channel realization (short-term)
through an unrolled WMMSE solver. Constraint ``k`` asks the average rate of
user ``k`` to reach ``gamma_k`` nats.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import Box, ProblemDefinition, ProblemError
from ..shortterm import ShortTermSolverSpec
from ..shortterm.wmmse import MatchedFilterInit, WmmseLayer, pack, rates, rf_precoder, rf_precoder_vjp, unpack


@dataclass(frozen=True)
class ThpInstance:
    """Configuration of the hybrid precoding example.

    Parameters
    ----------
    M : int
        Transmit antennas.
    S : int
        RF chains.
    K : int
        Single-antenna users.
    paths : int
        Propagation paths per user in the geometric channel.
    gamma : float
        Rate target in nats, the same for every user.
    g_bound : float
        Half-width of the box on each real coordinate of ``G``.
    """

    M: int = 16
    S: int = 2
    K: int = 2
    paths: int = 3
    gamma: float = 1.0
    g_bound: float = 1e3

    def __post_init__(self):
        if not (1 <= self.K <= self.S < self.M):
            raise ProblemError("hybrid precoding needs 1 <= K <= S < M")
        if self.paths < 1 or self.gamma <= 0 or self.g_bound <= 0:
            raise ProblemError("paths, gamma and g_bound must be positive")

    @property
    def n_x(self) -> int:
        return self.M * self.S

    @property
    def n_y(self) -> int:
        return 2 * self.S * self.K


def steering(angles, M: int) -> np.ndarray:
    """Half-wavelength ULA responses with unit norm, shape ``(..., M)``."""
    phase = np.pi * np.sin(np.asarray(angles))[..., None] * np.arange(M)
    return np.exp(1j * phase) / np.sqrt(M)


def sample_channels(rng: np.random.Generator, size: int, inst: ThpInstance) -> np.ndarray:
    """Geometric channels ``H`` of shape ``(size, K, M)``; row ``k`` is ``h_k^H``.

    Each user sees ``paths`` rays with angles uniform on ``[-pi/2, pi/2]`` and
    circularly symmetric unit-variance gains, scaled so ``E||h_k||^2 = M``.
    """
    L, K, M = inst.paths, inst.K, inst.M
    angles = rng.uniform(-np.pi / 2, np.pi / 2, size=(size, K, L))
    gains = (rng.standard_normal((size, K, L)) + 1j * rng.standard_normal((size, K, L))) / np.sqrt(2)
    h = np.sqrt(M / L) * np.einsum("nkl,nklm->nkm", gains, steering(angles, M))
    return np.conj(h)


def thp_problem(inst: ThpInstance) -> ProblemDefinition:
    M, S, K = inst.M, inst.S, inst.K
    gamma = np.full(K, inst.gamma)

    def power(theta, y, H):
        F = rf_precoder(theta, M, S)
        G = unpack(y, S, K)
        P = F @ G
        Pbar = 2.0 * P
        return float(np.sum(np.abs(P) ** 2)), rf_precoder_vjp(F, Pbar @ G.conj().T), pack(F.conj().T @ Pbar)

    def rate_fn(k):
        def g(theta, y, H):
            F = rf_precoder(theta, M, S)
            G = unpack(y, S, K)
            Heff = H @ F
            r, tot, intf, A = rates(Heff, G)
            Abar = np.zeros_like(A)
            # d(gamma - r_k): r_k = log tot_k - log intf_k
            Abar[k] = -2.0 * A[k] / tot[k] + 2.0 * A[k] / intf[k]
            Abar[k, k] = -2.0 * A[k, k] / tot[k]
            Gbar = Heff.conj().T @ Abar
            Fbar = H.conj().T @ (Abar @ G.conj().T)
            return gamma[k] - r[k], rf_precoder_vjp(F, Fbar), pack(Gbar)
        return g

    def sampler(rng, size):
        return list(sample_channels(rng, size, inst))

    return ProblemDefinition(
        n_x=inst.n_x, n_y=inst.n_y, m=K, n=0,
        domain_x=Box.uniform(inst.n_x, -2 * np.pi, 4 * np.pi),
        domain_y=Box.uniform(inst.n_y, -inst.g_bound, inst.g_bound),
        sample_fns=[power] + [rate_fn(k) for k in range(K)],
        sampler=sampler, name="thp",
    )


def thp_solver(problem: ProblemDefinition, inst: ThpInstance, J: int = 5) -> ShortTermSolverSpec:
    return ShortTermSolverSpec(J=J, layer=WmmseLayer(problem, inst.M, inst.S, inst.K),
                               init_rule=MatchedFilterInit(inst.M, inst.S, inst.K),
                               layer_params={"init": "matched_filter"})


def thp_initial(inst: ThpInstance, rng: np.random.Generator):
    """Phases uniform on ``[0, 2 pi)`` and unit prices."""
    return rng.uniform(0.0, 2 * np.pi, size=inst.n_x), np.ones(inst.K)


def saa_rates(inst: ThpInstance, theta, lam, channels, spec: ShortTermSolverSpec) -> np.ndarray:
    """Average per-user rate of the unrolled solver over ``channels``."""
    from ..shortterm import run_short_term

    F = rf_precoder(theta, inst.M, inst.S)
    total = np.zeros(inst.K)
    for H in channels:
        y = run_short_term(spec, theta, lam, H).y
        total += rates(H @ F, unpack(y, inst.S, inst.K))[0]
    return total / len(channels)
