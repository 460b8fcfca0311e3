"""Small synthetic problems shared by the tests."""
import numpy as np

from pddssca.core import Box, ProblemDefinition


def quadratic_problem(D=(1.0, 4.0), constraint="none", with_long=True, box=(-10.0, 10.0)):
    """``g0 = 1/2 sum D_k (y_k - x_k - xi_k)^2 + 1/4 ||x||^2``, ``g1 = 1/2 ||y||^2 - 1``.

    ``constraint`` selects the short-term constraint set: "none", "linear"
    (``y_0 + y_1 <= 0.5``) or "ball" (``||y - (1, 0)||^2 <= 1``).
    """
    D = np.asarray(D, dtype=float)

    def g0(x, y, xi):
        r = y - x - xi
        return 0.5 * float(D @ (r * r)) + 0.25 * float(x @ x), -D * r + 0.5 * x, D * r

    def g1(x, y, xi):
        return 0.5 * float(y @ y) - 1.0, np.zeros(2), y.copy()

    def lin(y, xi):
        return y[0] + y[1] - 0.5, np.ones(2)

    def ball(y, xi):
        d = y - np.array([1.0, 0.0])
        return float(d @ d) - 1.0, 2.0 * d

    def second_order(i, x, y, xi, v):
        v = np.asarray(v, dtype=float)
        if i == 0:
            return D * v, -D * v
        return v.copy(), np.zeros(2)

    def short_second(j, y, xi, v):
        return np.zeros(2) if constraint == "linear" else 2.0 * np.asarray(v, dtype=float)

    short = {"none": [], "linear": [lin], "ball": [ball]}[constraint]
    fns = [g0, g1] if with_long else [g0]
    return ProblemDefinition(
        n_x=2, n_y=2, m=len(fns) - 1, n=len(short),
        domain_x=Box.uniform(2, -5.0, 5.0), domain_y=Box.uniform(2, *box),
        sample_fns=fns, short_fns=short,
        sampler=lambda rng, size: list(0.3 * rng.standard_normal((size, 2))),
        second_order=second_order, short_second_order=short_second, name="quadratic",
    )
