"""Reference implementations of the convergence-rate formulas.

Pure functions of the problem dimensions used to overlay theory on
empirical risk curves.  Conventions: natural logarithms throughout; the
R^{4/q} and R^{2r/q} branches are treated as +infinity at q = 0 (they
never bind there); R = 0 gives rate 0.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

__all__ = ["RateQuery", "RateRegimeWarning", "psi_quad", "phi_quad",
           "psi_lr", "phi_lr", "kappa_bar", "kappa_lower"]


class RateRegimeWarning(UserWarning):
    """Raised when a query leaves the validity regime of a lower bound."""


@dataclass(frozen=True)
class RateQuery:
    """Dimensions and constants a rate formula is evaluated at."""

    n: int
    p: int
    q: float = 0.0
    R: float = 1.0
    r: float = 1.0
    gamma: float = 1.0
    C: float = 1.0
    nu_const: float = 1.0

    def __post_init__(self) -> None:
        if self.n < 2 or self.p < 2:
            raise ValueError("need n, p >= 2")
        if self.R < 0:
            raise ValueError("R must be >= 0")
        if self.q < 0:
            raise ValueError("q must be >= 0")
        if self.r <= 0:
            raise ValueError("r must be > 0")
        if self.gamma <= 0 or self.C <= 0 or self.nu_const <= 0:
            raise ValueError("gamma, C and nu_const must be positive")


def _pow_or_inf(base: float, exponent_num: float, q: float) -> float:
    """base^{exponent_num / q} with the q -> 0 limit of +infinity."""
    if q == 0.0:
        return math.inf
    return base ** (exponent_num / q)


def psi_quad(query: RateQuery) -> float:
    """Attainable rate for the off-diagonal quadratic functional:
    (R^2/n) v R^2 (log p / n)^{2-q}, with the elbow at the branch switch."""
    if not query.q < 2:
        raise ValueError("psi_quad needs q in [0, 2)")
    if query.R == 0:
        return 0.0
    r2 = query.R * query.R
    return max(r2 / query.n,
               r2 * (math.log(query.p) / query.n) ** (2.0 - query.q))


def phi_quad(query: RateQuery) -> float:
    """Lower-bound rate for the quadratic functional.

    (R^2/n) v { R^2 (log((p-1)/(R^2 n^q) + 1) / (2n))^{2-q} ^ R^{4/q} ^ 1 }.
    Queries with R^2 >= (p-1) n^{-q} / 2 fall outside the theorem's regime
    and are flagged with a warning; the value is still returned.
    """
    if not query.q < 2:
        raise ValueError("phi_quad needs q in [0, 2)")
    if query.R == 0:
        return 0.0
    n, p, q = query.n, query.p, query.q
    r2 = query.R * query.R
    if r2 >= (p - 1) * n ** (-q) / 2.0:
        warnings.warn("R^2 >= (p-1) n^-q / 2: outside the lower bound's "
                      "regime", RateRegimeWarning, stacklevel=2)
    log_term = math.log((p - 1) / (r2 * n**q) + 1.0)
    middle = min(r2 * (log_term / (2.0 * n)) ** (2.0 - q),
                 _pow_or_inf(query.R, 4.0, q),
                 1.0)
    return max(r2 / n, middle)


def psi_lr(query: RateQuery) -> float:
    """Attainable rate for the max-row functional.

    R^2 log p / n below the elbow q = max(r-1, 0); otherwise
    R^2 (gamma log p / n)^{r-q}.
    """
    if not query.q < query.r:
        raise ValueError("psi_lr needs q in [0, r)")
    if query.R == 0:
        return 0.0
    n, p, q, r = query.n, query.p, query.q, query.r
    r2 = query.R * query.R
    if q < max(r - 1.0, 0.0):
        return r2 * math.log(p) / n
    return r2 * (query.gamma * math.log(p) / n) ** (r - q)


def phi_lr(query: RateQuery) -> float:
    """Lower-bound rate for the max-row functional.

    R^2 (log p / n) v { R^2 (log((p-1)/(R^2 n^q) + 1)/(2n))^{r-q}
    ^ R^{2r/q} ^ 1 }.
    """
    if not query.q < query.r:
        raise ValueError("phi_lr needs q in [0, r)")
    if query.R == 0:
        return 0.0
    n, p, q, r = query.n, query.p, query.q, query.r
    r2 = query.R * query.R
    if r2 >= (p - 1) * n ** (-q) / 2.0:
        warnings.warn("R^2 >= (p-1) n^-q / 2: outside the lower bound's "
                      "regime", RateRegimeWarning, stacklevel=2)
    log_term = math.log((p - 1) / (r2 * n**q) + 1.0)
    middle = min(r2 * (log_term / (2.0 * n)) ** (r - q),
                 _pow_or_inf(query.R, 2.0 * r, q),
                 1.0)
    return max(r2 * math.log(p) / n, middle)


def kappa_bar(query: RateQuery, delta: float = 0.05) -> float:
    """Critical detectable signal strength of the thresholded row test:
    2 C R^{1/r} ((2 log p + log(4/delta)) / n)^{(r-q)/(2r)}."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if not query.q < query.r:
        raise ValueError("kappa_bar needs q in [0, r)")
    if query.R == 0:
        return 0.0
    t = (2.0 * math.log(query.p) + math.log(4.0 / delta)) / query.n
    return (2.0 * query.C * query.R ** (1.0 / query.r)
            * t ** ((query.r - query.q) / (2.0 * query.r)))


def kappa_lower(query: RateQuery) -> float:
    """Signal strength below which no test can detect:
    R^{1/r} (log(nu p / (R^2 n^q)) / (2n))^{(r-q)/(2r)}.

    Requires nu p > R^2 n^q so the logarithm is positive.
    """
    if not query.q < query.r:
        raise ValueError("kappa_lower needs q in [0, r)")
    if query.R == 0:
        return 0.0
    n, p, q, r = query.n, query.p, query.q, query.r
    arg = query.nu_const * p / (query.R**2 * n**q)
    if arg <= 1.0:
        raise ValueError("kappa_lower needs nu * p > R^2 n^q")
    return (query.R ** (1.0 / r)
            * (math.log(arg) / (2.0 * n)) ** ((r - q) / (2.0 * r)))
