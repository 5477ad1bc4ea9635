"""Functional estimators for covariance matrices.

Empirical covariance, entrywise thresholding, the off-diagonal plug-in
Q-hat, the diagonal U-statistic D-hat, row-wise l_r functionals, the
ratio-consistent B^2 baseline, and exactly location-invariant unbiased
U-statistics for tr(Sigma^2) and tr(Sigma_1 Sigma_2).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .matgen import (CENTER_BY_COLUMN_MEAN, KNOWN_ZERO_MEAN, CovarianceModel,
                     SampleMatrix, as_sample)

if TYPE_CHECKING:
    from .cvselect import CvConfig

__all__ = [
    "ThresholdSpec",
    "ThresholdedEstimate",
    "FunctionalEstimate",
    "ThresholdAssumptionWarning",
    "empirical_cov",
    "resolve_threshold",
    "threshold",
    "q_offdiag",
    "d_diag",
    "frobenius_sq",
    "lr_functional",
    "bs_b2",
    "cq_functionals",
    "trace_sq_ustat",
    "trace_cross_ustat",
]


class ThresholdAssumptionWarning(UserWarning):
    """Raised when a theory-faithful threshold violates its standing
    assumptions (gamma * log p < n and tau <= 1)."""


@dataclass
class ThresholdSpec:
    """Parameterization of the entrywise threshold tau.

    Modes:

    * ``explicit`` -- tau given directly.
    * ``rule``     -- tau = 2 * c0 * sqrt(gamma * log(p) / n).  With
      ``theory_faithful`` set, c0 >= 4 and gamma > 8 are enforced and the
      standing assumptions are checked at resolution time; otherwise any
      positive constants are allowed (practical mode).
    * ``cv``       -- tau chosen by the cross-validation procedure in
      :mod:`covfuncs.cvselect`; requires data at resolution time.

    ``resolved_tau`` is filled in by :func:`resolve_threshold`.
    """

    mode: str = "rule"
    tau: float | None = None
    c0: float = 0.75
    gamma: float = 1.0
    theory_faithful: bool = False
    cv: "CvConfig | None" = None
    resolved_tau: float | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("explicit", "rule", "cv"):
            raise ValueError(f"unknown threshold mode {self.mode!r}")
        if self.mode == "explicit":
            if self.tau is None or self.tau < 0:
                raise ValueError("explicit mode needs tau >= 0")
        if self.mode == "rule":
            if self.theory_faithful:
                if self.c0 < 4 or self.gamma <= 8:
                    raise ValueError("theory-faithful rule requires "
                                     "c0 >= 4 and gamma > 8")
            elif self.c0 <= 0 or self.gamma <= 0:
                raise ValueError("rule mode needs positive c0 and gamma")

    @classmethod
    def explicit(cls, tau: float) -> "ThresholdSpec":
        return cls(mode="explicit", tau=float(tau))

    @classmethod
    def rule(cls, c0: float, gamma: float,
             theory_faithful: bool = False) -> "ThresholdSpec":
        return cls(mode="rule", c0=float(c0), gamma=float(gamma),
                   theory_faithful=theory_faithful)

    @classmethod
    def practical(cls, c: float = 1.5) -> "ThresholdSpec":
        """The simulation-style rule tau = c * sqrt(log(p) / n)."""
        return cls(mode="rule", c0=float(c) / 2.0, gamma=1.0)

    @classmethod
    def cross_validated(cls, cv: "CvConfig | None" = None) -> "ThresholdSpec":
        return cls(mode="cv", cv=cv)


@dataclass
class ThresholdedEstimate:
    """An empirical covariance with off-diagonal entries thresholded.

    Kept entries satisfy |sigma_hat_ij| > tau strictly; the diagonal is
    copied from the base matrix bit-for-bit.
    """

    base: np.ndarray
    tau: float
    entries: np.ndarray
    kept_mask: np.ndarray

    @property
    def p(self) -> int:
        return self.entries.shape[0]


@dataclass
class FunctionalEstimate:
    """A scalar functional estimate plus a description of its inputs."""

    value: float
    kind: str
    info: dict = field(default_factory=dict)

    def __float__(self) -> float:
        return self.value


def _cov_entries(sigma: "CovarianceModel | np.ndarray") -> np.ndarray:
    if isinstance(sigma, CovarianceModel):
        return sigma.entries
    m = np.asarray(sigma, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("covariance must be a square matrix")
    return m


def empirical_cov(x: "SampleMatrix | np.ndarray") -> CovarianceModel:
    """Empirical covariance of a sample, honoring its centering policy.

    KnownZeroMean uses the divisor n; CenterByColumnMean subtracts the
    column means and uses n - 1.  The output is exactly symmetric.
    """
    x = as_sample(x)
    if x.n < 2:
        raise ValueError("empirical covariance needs n >= 2")
    if x.centering == KNOWN_ZERO_MEAN:
        m = x.data.T @ x.data / x.n
    else:
        c = x.centered()
        m = c.T @ c / (x.n - 1)
    m = (m + m.T) / 2.0
    return CovarianceModel(x.p, m, "estimated",
                           {"n": x.n, "centering": x.centering})


def resolve_threshold(spec: ThresholdSpec, p: float, n: int,
                      x: "SampleMatrix | np.ndarray | None" = None) -> float:
    """Turn a ThresholdSpec into a numeric tau for dimensions (p, n).

    CV mode delegates to :func:`covfuncs.cvselect.cv_threshold` and needs
    the sample ``x``.  Theory-faithful rule mode warns (does not fail)
    when gamma * log p >= n or the resolved tau exceeds 1.
    """
    if p < 2 or n < 2:
        raise ValueError("need p >= 2 and n >= 2")
    if spec.mode == "explicit":
        tau = float(spec.tau)
    elif spec.mode == "rule":
        logp = math.log(p)
        tau = 2.0 * spec.c0 * math.sqrt(spec.gamma * logp / n)
        if spec.theory_faithful:
            if spec.gamma * logp >= n:
                warnings.warn("threshold rule assumption gamma*log(p) < n "
                              "violated", ThresholdAssumptionWarning,
                              stacklevel=2)
            if tau > 1.0:
                warnings.warn("resolved threshold exceeds 1; outside the "
                              "theory's regime", ThresholdAssumptionWarning,
                              stacklevel=2)
    elif spec.mode == "cv":
        if x is None:
            raise ValueError("cross-validated threshold needs the sample")
        from .cvselect import CvConfig, cv_threshold
        cfg = spec.cv if spec.cv is not None else CvConfig()
        tau = cv_threshold(as_sample(x), cfg).tau_final
    else:  # pragma: no cover - guarded in __post_init__
        raise ValueError(spec.mode)
    spec.resolved_tau = tau
    return tau


def threshold(sigma_hat: "CovarianceModel | np.ndarray",
              tau: float) -> ThresholdedEstimate:
    """Zero off-diagonal entries with |sigma_hat_ij| <= tau (strict keep).

    The diagonal is never touched; |entry| exactly equal to tau is zeroed.
    """
    tau = float(tau)
    if tau < 0:
        raise ValueError("tau must be >= 0")
    base = _cov_entries(sigma_hat)
    keep = np.abs(base) > tau
    np.fill_diagonal(keep, False)
    ent = np.where(keep, base, 0.0)
    np.fill_diagonal(ent, np.diag(base))
    return ThresholdedEstimate(base=base, tau=tau, entries=ent,
                               kept_mask=keep)


def q_offdiag(est: ThresholdedEstimate) -> FunctionalEstimate:
    """Plug-in off-diagonal quadratic functional of a thresholded matrix.

    Sum of squared surviving off-diagonal entries; the diagonal is never
    read.
    """
    vals = est.base[est.kept_mask]
    return FunctionalEstimate(float((vals * vals).sum()), "q_offdiag",
                              {"tau": est.tau, "p": est.p})


def d_diag(x: "SampleMatrix | np.ndarray") -> FunctionalEstimate:
    """Unbiased estimate of the diagonal part D = sum_i sigma_ii^2.

    Cross-product U-statistic (1/(n(n-1))) sum_i sum_{k != j} X_ki^2 X_ji^2.
    Zero-mean data is assumed; samples tagged for centering are centered
    first (at an O(1/n) bias cost).
    """
    x = as_sample(x)
    if x.n < 2:
        raise ValueError("d_diag needs n >= 2")
    z = x.residuals()
    sq = z * z
    col2 = sq.sum(axis=0)
    col4 = (sq * sq).sum(axis=0)
    val = float((col2 * col2 - col4).sum() / (x.n * (x.n - 1)))
    return FunctionalEstimate(val, "d_diag", {"n": x.n, "p": x.p})


def frobenius_sq(est: ThresholdedEstimate, x: "SampleMatrix | np.ndarray",
                 known_unit_diag: bool = False) -> FunctionalEstimate:
    """Thresholded estimate of the full quadratic functional Q + D.

    Combines the off-diagonal plug-in with the diagonal U-statistic; with
    ``known_unit_diag`` the diagonal part is the exact value p (the
    correlation-matrix setting where it needs no estimation).
    """
    x = as_sample(x)
    q = q_offdiag(est).value
    d = float(x.p) if known_unit_diag else d_diag(x).value
    return FunctionalEstimate(q + d, "frobenius_sq",
                              {"tau": est.tau, "n": x.n, "p": x.p,
                               "known_unit_diag": known_unit_diag})


def lr_functional(est: ThresholdedEstimate, r: float) -> FunctionalEstimate:
    """Max row sum of |entries|^r of the thresholded matrix.

    The diagonal term |sigma_hat_ii|^r is always included (the diagonal is
    not thresholded).
    """
    r = float(r)
    if r <= 0:
        raise ValueError("r must be > 0")
    rows = np.abs(est.entries) ** r
    val = float(rows.sum(axis=1).max())
    return FunctionalEstimate(val, "lr_functional",
                              {"r": r, "tau": est.tau, "p": est.p})


def _b_squared(sigma_hat: np.ndarray, dof: int) -> float:
    """B^2 from a covariance estimate with the given degrees of freedom."""
    if dof < 2:
        raise ValueError("B^2 needs at least 2 degrees of freedom")
    fro = float((sigma_hat * sigma_hat).sum())
    tr = float(np.trace(sigma_hat))
    return dof**2 / ((dof + 2) * (dof - 1)) * (fro - tr * tr / dof)


def bs_b2(x: "SampleMatrix | np.ndarray") -> FunctionalEstimate:
    """Ratio-consistent estimate of ||Sigma||_F^2 from one sample.

    B^2 = m^2/((m+2)(m-1)) * [||S||_F^2 - (tr S)^2 / m] where S is the
    empirical covariance and m its degrees of freedom (n for known zero
    mean, n - 1 after centering); with matching m the estimate is exactly
    unbiased under Gaussian sampling.
    """
    x = as_sample(x)
    s = empirical_cov(x).entries
    dof = x.n if x.centering == KNOWN_ZERO_MEAN else x.n - 1
    return FunctionalEstimate(_b_squared(s, dof), "bs_b2",
                              {"n": x.n, "p": x.p, "dof": dof})


def trace_sq_ustat(x: "SampleMatrix | np.ndarray") -> FunctionalEstimate:
    """Unbiased, exactly location-invariant estimate of tr(Sigma^2).

    Order-4 U-statistic with the difference kernel
    ((X1 - X2)' (X3 - X4))^2 / 4, evaluated in O(n^2 p) through Gram-matrix
    identities.  Unbiased for any distribution with finite second moments.
    """
    x = as_sample(x)
    n = x.n
    if n < 4:
        raise ValueError("trace_sq_ustat needs n >= 4")
    xc = x.centered()  # value depends on differences only
    g = xc @ xc.T
    dg = np.diag(g).copy()
    p2 = float((g * g).sum() - (dg * dg).sum())
    rows = g.sum(axis=1)
    sqrows = (g * g).sum(axis=1)
    p3 = float(((rows - dg) ** 2 - (sqrows - dg * dg)).sum())
    u = rows - dg
    t = float(u.sum())
    p4 = t * t - 4.0 * float((u * u).sum()) + 2.0 * p2
    n4 = n * (n - 1) * (n - 2) * (n - 3)
    val = ((n - 2) * (n - 3) * p2 - 2 * (n - 3) * p3 + p4) / n4
    return FunctionalEstimate(float(val), "cq_trace_sq", {"n": n, "p": x.p})


def trace_cross_ustat(x1: "SampleMatrix | np.ndarray",
                      x2: "SampleMatrix | np.ndarray") -> FunctionalEstimate:
    """Unbiased, location-invariant estimate of tr(Sigma_1 Sigma_2).

    2+2 U-statistic with kernel ((X1 - X2)' (Y1 - Y2))^2 / 4; collapses to
    ||X_c Y_c'||_F^2 / ((n1 - 1)(n2 - 1)) for column-centered samples.
    """
    x1, x2 = as_sample(x1), as_sample(x2)
    if x1.p != x2.p:
        raise ValueError("samples must share the same dimension")
    if x1.n < 2 or x2.n < 2:
        raise ValueError("trace_cross_ustat needs n1, n2 >= 2")
    h = x1.centered() @ x2.centered().T
    val = float((h * h).sum() / ((x1.n - 1) * (x2.n - 1)))
    return FunctionalEstimate(val, "cq_trace_cross",
                              {"n1": x1.n, "n2": x2.n, "p": x1.p})


def cq_functionals(x1: "SampleMatrix | np.ndarray",
                   x2: "SampleMatrix | np.ndarray",
                   ) -> tuple[FunctionalEstimate, FunctionalEstimate,
                              FunctionalEstimate]:
    """The three trace functionals feeding the two-sample null variance.

    Returns unbiased location-invariant U-statistic estimates of
    (tr Sigma_1^2, tr Sigma_2^2, tr Sigma_1 Sigma_2).  Requires
    n1, n2 >= 4 for the order-4 statistics.
    """
    x1, x2 = as_sample(x1), as_sample(x2)
    if x1.n < 4 or x2.n < 4:
        raise ValueError("cq_functionals needs n1, n2 >= 4")
    return (trace_sq_ustat(x1), trace_sq_ustat(x2),
            trace_cross_ustat(x1, x2))
