"""Multifactor pricing-error (alpha) tests.

Per-asset OLS factor regressions, the correlation-ignoring Wald statistic,
its normalization to an asymptotically standard normal test, and the
thresholded average-squared-correlation correction to its variance.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from .cvselect import CvConfig, RHO_BAR_SQ
from .estimators import ThresholdSpec, resolve_threshold
from .matgen import KNOWN_ZERO_MEAN, SampleMatrix

__all__ = [
    "FactorPanel",
    "AlphaTestReport",
    "ols_factor_fit",
    "wd_statistic",
    "rho_bar_sq",
    "j_alpha_test",
    "rolling_alpha_tests",
]

log = logging.getLogger(__name__)


@dataclass
class FactorPanel:
    """Excess returns (T x N) and observed factors (T x K) over a window.

    Needs T > K + 2 so the residual covariance has at least two degrees of
    freedom; the variance formula behind the test additionally needs
    T - K - 1 > 4.  Factors must be finite; returns may carry NaN only if
    the caller filters them out before fitting (see rolling_alpha_tests).
    """

    returns: np.ndarray
    factors: np.ndarray
    asset_ids: Sequence[str] | None = None
    dates: Sequence[str] | None = None

    def __post_init__(self) -> None:
        self.returns = np.asarray(self.returns, dtype=np.float64)
        self.factors = np.asarray(self.factors, dtype=np.float64)
        if self.returns.ndim != 2:
            raise ValueError("returns must be T x N")
        if self.factors.ndim != 2 or self.factors.shape[0] != self.T:
            raise ValueError("factors must be T x K with matching T")
        if self.T <= self.K + 2:
            raise ValueError("need T > K + 2 observations")
        if not np.all(np.isfinite(self.factors)):
            raise ValueError("factors must be finite")

    @property
    def T(self) -> int:
        return self.returns.shape[0]

    @property
    def N(self) -> int:
        return self.returns.shape[1]

    @property
    def K(self) -> int:
        return self.factors.shape[1]

    @property
    def nu(self) -> int:
        return self.T - self.K - 1


@dataclass
class AlphaTestReport:
    """One window's Wald test of zero pricing errors."""

    w_d: float
    e_wd: float
    var_wd: float
    rho_bar_sq_hat: float
    j_alpha: float
    p_value: float
    nu: int
    tau_used: float
    n_assets: int
    reject: bool
    alpha_level: float
    window_end: str | int | None = None
    info: dict = field(default_factory=dict)


def ols_factor_fit(panel: FactorPanel) -> tuple[np.ndarray, np.ndarray,
                                                np.ndarray]:
    """Per-asset least squares of returns on an intercept plus the factors.

    Returns (alpha_hat, B_hat, residuals) with residuals of shape T x N.
    """
    if not np.all(np.isfinite(panel.returns)):
        raise ValueError("returns contain missing values; filter the window "
                         "before fitting")
    design = np.column_stack([np.ones(panel.T), panel.factors])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise ValueError("design matrix [1, F] is rank deficient")
    coef, *_ = np.linalg.lstsq(design, panel.returns, rcond=None)
    residuals = panel.returns - design @ coef
    alpha_hat = coef[0]
    b_hat = coef[1:].T
    return alpha_hat, b_hat, residuals


def _ones_mf_ones(factors: np.ndarray) -> float:
    """1' M_F 1 with M_F the projection residual maker of the raw factors."""
    t = factors.shape[0]
    if factors.shape[1] == 0:
        return float(t)
    f1 = factors.sum(axis=0)
    sol = np.linalg.solve(factors.T @ factors, f1)
    return float(t - f1 @ sol)


def wd_statistic(panel: FactorPanel) -> tuple[float, int]:
    """Correlation-ignoring Wald statistic and its degrees of freedom.

    W_d = (1' M_F 1) * sum_i alpha_hat_i^2 / D_ii where D holds the
    unbiased residual variances (divisor nu = T - K - 1) and M_F uses the
    raw factor matrix; the intercept lives in the per-asset regression,
    not in M_F.
    """
    alpha_hat, _, residuals = ols_factor_fit(panel)
    nu = panel.nu
    d_hat = (residuals * residuals).sum(axis=0) / nu
    if np.any(d_hat <= 0):
        raise ValueError("zero residual variance for some asset")
    scale = _ones_mf_ones(panel.factors)
    w_d = scale * float((alpha_hat * alpha_hat / d_hat).sum())
    return w_d, nu


def rho_bar_sq(residuals: np.ndarray,
               spec: ThresholdSpec | None = None) -> float:
    """Thresholded average squared off-diagonal residual correlation.

    rho_hat is the residual correlation matrix; entries with magnitude at
    or below tau are zeroed before averaging 2/(N(N-1)) sum_{i<j} rho^2.
    tau comes from the spec (cross-validated on the correlation target by
    default).
    """
    residuals = np.asarray(residuals, dtype=np.float64)
    t, n_assets = residuals.shape
    if n_assets < 2:
        raise ValueError("need at least two assets")
    scatter = residuals.T @ residuals
    d = np.sqrt(np.diag(scatter))
    if np.any(d <= 0):
        raise ValueError("zero residual variance for some asset")
    corr = scatter / np.outer(d, d)

    if spec is None:
        spec = ThresholdSpec.cross_validated(CvConfig(target=RHO_BAR_SQ))
    sample = SampleMatrix(residuals, KNOWN_ZERO_MEAN)
    tau = resolve_threshold(spec, n_assets, t, sample)

    iu = np.triu_indices(n_assets, k=1)
    vals = corr[iu]
    kept = vals[np.abs(vals) > tau]
    return float(2.0 * (kept * kept).sum() / (n_assets * (n_assets - 1)))


def j_alpha_test(panel: FactorPanel, spec: ThresholdSpec | None = None,
                 alpha_level: float = 0.05) -> AlphaTestReport:
    """Normalized Wald test of H0: all pricing errors are zero.

    E(W_d) = nu N / (nu - 2); var(W_d) uses the printed finite-sample
    formula with the average squared correlation replaced by its
    thresholded estimate and the O(nu^{-1/2}) remainder dropped.  Upper
    tail normal p-value.
    """
    nu = panel.nu
    if nu <= 4:
        raise ValueError("variance formula needs nu = T - K - 1 > 4")
    alpha_hat, _, residuals = ols_factor_fit(panel)
    d_hat = (residuals * residuals).sum(axis=0) / nu
    if np.any(d_hat <= 0):
        raise ValueError("zero residual variance for some asset")
    w_d = _ones_mf_ones(panel.factors) * float(
        (alpha_hat * alpha_hat / d_hat).sum())

    if spec is None:
        spec = ThresholdSpec.cross_validated(CvConfig(target=RHO_BAR_SQ))
    rho2 = rho_bar_sq(residuals, spec)
    tau_used = float(spec.resolved_tau if spec.resolved_tau is not None
                     else 0.0)

    n_assets = panel.N
    e_wd = nu * n_assets / (nu - 2.0)
    var_wd = (2.0 * n_assets * (nu - 1.0) / (nu - 4.0)
              * (nu / (nu - 2.0)) ** 2 * (1.0 + (n_assets - 1.0) * rho2))
    j_alpha = (w_d - e_wd) / np.sqrt(var_wd)
    p_value = float(stats.norm.sf(j_alpha))
    return AlphaTestReport(w_d=w_d, e_wd=e_wd, var_wd=var_wd,
                           rho_bar_sq_hat=rho2, j_alpha=float(j_alpha),
                           p_value=p_value, nu=nu, tau_used=tau_used,
                           n_assets=n_assets, reject=p_value < alpha_level,
                           alpha_level=alpha_level,
                           info={"remainder_dropped": "O(nu^-1/2)"})


def rolling_alpha_tests(panel: FactorPanel, window_t: int = 60,
                        spec: ThresholdSpec | None = None,
                        alpha_level: float = 0.05,
                        min_assets: int = 2) -> list[AlphaTestReport]:
    """One alpha test per terminal date over running windows.

    Each window spans exactly ``window_t`` consecutive observations;
    assets with any missing return inside a window are excluded from that
    window, and windows left with fewer than ``min_assets`` usable assets
    are skipped with a logged gap.  Reports are ordered by terminal date.
    """
    if panel.T < window_t:
        raise ValueError("panel shorter than the window")
    reports: list[AlphaTestReport] = []
    for end in range(window_t, panel.T + 1):
        rows = slice(end - window_t, end)
        returns = panel.returns[rows]
        ok = np.all(np.isfinite(returns), axis=0)
        label = (panel.dates[end - 1] if panel.dates is not None else end - 1)
        if int(ok.sum()) < min_assets:
            log.warning("window ending at %s skipped: only %d usable assets",
                        label, int(ok.sum()))
            continue
        ids = (list(np.asarray(panel.asset_ids)[ok])
               if panel.asset_ids is not None else None)
        sub = FactorPanel(returns[:, ok], panel.factors[rows],
                          asset_ids=ids, dates=None)
        window_spec = spec if spec is not None else ThresholdSpec.cross_validated(
            CvConfig(target=RHO_BAR_SQ, seed=end))
        report = j_alpha_test(sub, window_spec, alpha_level)
        report.window_end = label
        report.info["n_excluded"] = int((~ok).sum())
        reports.append(report)
    return reports
