"""High-dimensional two-sample mean tests.

Sum-of-squares Wald-type statistics whose null variances depend on
quadratic functionals of the covariance: the classic ratio-consistent
plug-in, its thresholded upgrade, trace U-statistic variants, and
coordinatewise multiple-testing baselines.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .cvselect import (CvConfig, Q_FUNCTIONAL, _q_grid_uniform,
                       _validation_folds)
from .estimators import (FunctionalEstimate, ThresholdSpec, _b_squared,
                         d_diag, q_offdiag, resolve_threshold, threshold,
                         trace_cross_ustat, trace_sq_ustat)
from .matgen import KNOWN_ZERO_MEAN, SampleMatrix, as_sample
from .rng import as_seed

__all__ = ["TwoSampleReport", "bs_test", "cq_test", "marginal_tests"]


@dataclass
class TwoSampleReport:
    """Outcome of one two-sample test at level alpha."""

    method: str
    statistic: float
    z: float | None
    p_value: float
    reject: bool
    alpha: float
    functional_used: FunctionalEstimate | None = None
    info: dict = field(default_factory=dict)


def _check_pair(x1: SampleMatrix, x2: SampleMatrix) -> None:
    if x1.p != x2.p:
        raise ValueError("samples must have the same dimension")


def _scaled_residuals(x: SampleMatrix, extra_dof_loss: int = 1) -> np.ndarray:
    """Column-centered rows rescaled so the zero-mean covariance formula
    reproduces the (n - dof_loss)-divisor estimate."""
    c = x.centered()
    return c * np.sqrt(x.n / (x.n - extra_dof_loss))


def pooled_residual_sample(x1: SampleMatrix, x2: SampleMatrix) -> SampleMatrix:
    """Per-sample centered rows of both samples, stacked and rescaled.

    The result is tagged KnownZeroMean and its zero-mean empirical
    covariance equals the classical pooled covariance with divisor
    n1 + n2 - 2, so downstream functionals target the common Sigma.
    """
    _check_pair(x1, x2)
    n = x1.n + x2.n
    z = np.vstack([x1.centered(), x2.centered()]) * np.sqrt(n / (n - 2))
    return SampleMatrix(z, KNOWN_ZERO_MEAN)


def sample_residuals(x: SampleMatrix) -> SampleMatrix:
    """One sample's centered rows rescaled to the (n-1)-divisor scale."""
    if x.centering == KNOWN_ZERO_MEAN:
        return x
    return SampleMatrix(_scaled_residuals(x), KNOWN_ZERO_MEAN)


def _default_spec(seed: int = 0) -> ThresholdSpec:
    return ThresholdSpec.cross_validated(CvConfig(target=Q_FUNCTIONAL,
                                                  seed=seed))


def _pooled_cv_tau(x1: SampleMatrix, x2: SampleMatrix,
                   cfg: CvConfig) -> float:
    """Threshold CV for the pooled covariance of two group-centered samples.

    Splits are stratified by group and the validation reference is the
    between-group trace U-statistic minus the diagonal cross term: both
    use within-group differences only, so the group-mean noise that
    contaminates a mixed-row reference (it dwarfs the actual mean shift)
    cancels exactly.
    """
    n1, n2 = x1.n, x2.n
    n, p = n1 + n2, x1.p
    scale = math.sqrt(n / (n - 2))
    z1 = x1.centered() * scale
    z2 = x2.centered() * scale

    n_val = int(round(n / math.log(n)))
    v1 = max(2, int(round(n_val * n1 / n)))
    v2 = max(2, n_val - v1)
    t1, t2 = n1 - v1, n2 - v2
    if min(t1, t2) < 1:
        raise ValueError("degenerate stratified split")
    n_train = t1 + t2

    pooled = np.vstack([z1, z2])
    full_scatter = pooled.T @ pooled
    m_hat = float(np.diag(full_scatter).max()) / n
    j_grid = cfg.grid_size
    grid = m_hat * np.arange(1, j_grid + 1) / j_grid

    gen = as_seed(cfg.seed).generator()
    folds1 = _validation_folds(gen, n1, v1, cfg.m)
    folds2 = _validation_folds(gen, n2, v2, cfg.m)
    losses = np.zeros(j_grid)
    curve_sum = np.zeros(j_grid)
    ref_sum = 0.0
    buf = np.empty((p, p))
    for f1, f2 in zip(folds1, folds2):
        val1, val2 = z1[f1], z2[f2]
        val = np.vstack([val1, val2])
        np.dot(val.T, val, out=buf)
        np.subtract(full_scatter, buf, out=buf)
        np.abs(buf, out=buf)
        buf.flat[::p + 1] = 0.0
        curve = _q_grid_uniform(buf.ravel(), m_hat * n_train,
                                j_grid) / (n_train * n_train)
        cross = trace_cross_ustat(SampleMatrix(val1, KNOWN_ZERO_MEAN),
                                  SampleMatrix(val2, KNOWN_ZERO_MEAN)).value
        d1 = (val1 * val1).mean(axis=0)
        d2 = (val2 * val2).mean(axis=0)
        ref = cross - float(d1 @ d2)
        losses += np.abs(curve - ref)
        curve_sum += curve
        ref_sum += ref
    losses /= cfg.m
    if cfg.loss == "abs_mean":
        losses = np.abs(curve_sum - ref_sum) / cfg.m
    j_star = int(np.argmin(losses)) + 1
    delta = m_hat / (j_grid * math.sqrt(math.log(p) / n_train))
    return float(j_star * delta * math.sqrt(math.log(p) / n))


def _thresholded_frob_sq(z: SampleMatrix, spec: ThresholdSpec,
                         tau: float | None = None) -> FunctionalEstimate:
    """Thresholded ||Sigma||_F^2 from a zero-mean residual sample."""
    if tau is None:
        tau = resolve_threshold(spec, z.p, z.n, z)
    cov = z.data.T @ z.data / z.n
    est = threshold(cov, tau)
    q = q_offdiag(est).value
    d = d_diag(z).value
    return FunctionalEstimate(q + d, "frobenius_sq_thresholded",
                              {"tau": tau, "q": q, "d": d, "n": z.n,
                               "p": z.p})


def _p_value(z: float, two_sided: bool) -> float:
    if two_sided:
        return float(2.0 * stats.norm.sf(abs(z)))
    return float(stats.norm.sf(z))


def bs_test(x1: "SampleMatrix | np.ndarray", x2: "SampleMatrix | np.ndarray",
            alpha: float = 0.05, use_threshold: bool = False,
            spec: ThresholdSpec | None = None,
            two_sided: bool = False) -> TwoSampleReport:
    """Mean-difference test with the trace-corrected squared-norm statistic.

    M = ||xbar1 - xbar2||^2 - (n/(n1 n2)) tr(S) with n = n1 + n2 and S
    the pooled within-group scatter divided by n, standardized by
    var(M) = 2 n(n-1)/(n1 n2)^2 * F where F estimates ||Sigma||_F^2: the
    ratio-consistent plug-in B^2 on the same S (the classical convention)
    by default, or the thresholded estimate when ``use_threshold`` is set
    (the M statistic is identical either way).  Upper-tail rejection by
    default (the alternative only inflates M); ``two_sided`` rejects on
    |z|.  Equal covariances across groups are assumed.
    """
    x1, x2 = as_sample(x1), as_sample(x2)
    _check_pair(x1, x2)
    n1, n2 = x1.n, x2.n
    n = n1 + n2
    scatter = np.vstack([x1.centered(), x2.centered()])
    gram = scatter.T @ scatter

    # M uses the unbiased pooled covariance so it is exactly centered
    # under the null; B^2 follows the classical divisor-n convention.
    diff = x1.data.mean(axis=0) - x2.data.mean(axis=0)
    m_stat = (float(diff @ diff)
              - n / (n1 * n2) * float(np.trace(gram)) / (n - 2))

    if use_threshold:
        spec = spec if spec is not None else _default_spec()
        cv_cfg = spec.cv if (spec.mode == "cv" and spec.cv is not None) \
            else None
        if spec.mode == "cv":
            tau = _pooled_cv_tau(x1, x2, cv_cfg if cv_cfg else CvConfig())
            spec.resolved_tau = tau
        else:
            tau = resolve_threshold(spec, x1.p, n)
        frob = _thresholded_frob_sq(pooled_residual_sample(x1, x2), spec,
                                    tau=tau)
        method = "newBS"
    else:
        frob = FunctionalEstimate(_b_squared(gram / n, n), "bs_b2",
                                  {"n": n, "p": x1.p})
        method = "BS"

    var_m = 2.0 * n * (n - 1) / (n1 * n2) ** 2 * max(frob.value, 0.0)
    if var_m <= 0:
        raise ValueError("variance estimate is not positive")
    z = m_stat / np.sqrt(var_m)
    p_value = _p_value(z, two_sided)
    return TwoSampleReport(method=method, statistic=m_stat, z=float(z),
                           p_value=p_value, reject=p_value < alpha,
                           alpha=alpha, functional_used=frob,
                           info={"n1": n1, "n2": n2, "p": x1.p,
                                 "two_sided": two_sided})


def _mean_cross_terms(x: np.ndarray) -> float:
    """(1/(n(n-1))) sum_{i != j} x_i . x_j."""
    n = len(x)
    total = x.sum(axis=0)
    return (float(total @ total) - float((x * x).sum())) / (n * (n - 1))


def _thresholded_traces(x1: SampleMatrix, x2: SampleMatrix,
                        spec1: ThresholdSpec, spec2: ThresholdSpec,
                        ) -> tuple[FunctionalEstimate, FunctionalEstimate,
                                   FunctionalEstimate]:
    """Thresholded counterparts of (tr S1^2, tr S2^2, tr S1 S2).

    Per-sample trace: off-diagonal plug-in plus the diagonal U-statistic.
    Cross trace: product of surviving off-diagonal entries plus the
    product of the per-sample diagonals (unbiased by independence).
    """
    out = []
    covs = []
    taus = []
    for x, spec in ((x1, spec1), (x2, spec2)):
        z = sample_residuals(x)
        tau = resolve_threshold(spec, z.p, z.n, z)
        cov = z.data.T @ z.data / z.n
        est = threshold(cov, tau)
        q = q_offdiag(est).value
        d = d_diag(z).value
        out.append(FunctionalEstimate(q + d, "trace_sq_thresholded",
                                      {"tau": tau, "n": z.n, "p": z.p}))
        covs.append(est.entries)
        taus.append(tau)
    c1, c2 = covs
    off = c1 * c2
    np.fill_diagonal(off, 0.0)
    cross_val = float(off.sum()) + float(np.diag(c1) @ np.diag(c2))
    out.append(FunctionalEstimate(cross_val, "trace_cross_thresholded",
                                  {"tau1": taus[0], "tau2": taus[1]}))
    return tuple(out)


def cq_test(x1: "SampleMatrix | np.ndarray", x2: "SampleMatrix | np.ndarray",
            alpha: float = 0.05, use_threshold: bool = False,
            spec: ThresholdSpec | None = None,
            spec2: ThresholdSpec | None = None,
            two_sided: bool = False) -> TwoSampleReport:
    """Mean-difference test from the location-invariant U-statistic.

    The statistic is the unbiased estimate of ||mu1 - mu2||^2 built from
    within- and between-sample inner products; the null variance combines
    tr(Sigma_1^2), tr(Sigma_2^2) and tr(Sigma_1 Sigma_2), estimated either
    by the raw U-statistics or by their thresholded counterparts.
    Upper-tail rejection by default; covariances may differ across groups.
    """
    x1, x2 = as_sample(x1), as_sample(x2)
    _check_pair(x1, x2)
    n1, n2 = x1.n, x2.n
    if n1 < 4 or n2 < 4:
        raise ValueError("cq_test needs n1, n2 >= 4")

    cross = float(x1.data.sum(axis=0) @ x2.data.sum(axis=0)) / (n1 * n2)
    t_stat = (_mean_cross_terms(x1.data) + _mean_cross_terms(x2.data)
              - 2.0 * cross)

    if use_threshold:
        spec = spec if spec is not None else _default_spec()
        spec2 = spec2 if spec2 is not None else _default_spec(1)
        tr1, tr2, tr12 = _thresholded_traces(x1, x2, spec, spec2)
        method = "newCQ"
    else:
        tr1 = trace_sq_ustat(x1)
        tr2 = trace_sq_ustat(x2)
        tr12 = trace_cross_ustat(x1, x2)
        method = "CQ"

    var_t = (2.0 / (n1 * (n1 - 1)) * max(tr1.value, 0.0)
             + 2.0 / (n2 * (n2 - 1)) * max(tr2.value, 0.0)
             + 4.0 / (n1 * n2) * max(tr12.value, 0.0))
    if var_t <= 0:
        raise ValueError("variance estimate is not positive")
    z = t_stat / np.sqrt(var_t)
    p_value = _p_value(z, two_sided)
    return TwoSampleReport(method=method, statistic=t_stat, z=float(z),
                           p_value=p_value, reject=p_value < alpha,
                           alpha=alpha, functional_used=tr1,
                           info={"n1": n1, "n2": n2, "p": x1.p,
                                 "tr1": tr1.value, "tr2": tr2.value,
                                 "tr12": tr12.value,
                                 "two_sided": two_sided})


def _t_test_pvalues(x1: np.ndarray, x2: np.ndarray,
                    equal_var: bool = True) -> np.ndarray:
    """Two-sided per-coordinate two-sample t-test p-values."""
    n1, n2 = len(x1), len(x2)
    m1, m2 = x1.mean(axis=0), x2.mean(axis=0)
    v1 = x1.var(axis=0, ddof=1)
    v2 = x2.var(axis=0, ddof=1)
    if equal_var:
        sp2 = ((n1 - 1) * v1 + (n2 - 1) * v2) / (n1 + n2 - 2)
        se2 = sp2 * (1.0 / n1 + 1.0 / n2)
        df = np.full_like(se2, float(n1 + n2 - 2))
    else:
        se2 = v1 / n1 + v2 / n2
        with np.errstate(divide="ignore", invalid="ignore"):
            df = se2**2 / ((v1 / n1) ** 2 / (n1 - 1)
                           + (v2 / n2) ** 2 / (n2 - 1))
    bad = se2 <= 0
    if np.any(bad):
        warnings.warn(f"{int(bad.sum())} zero-variance coordinate(s); "
                      "their p-values are set to 1", UserWarning,
                      stacklevel=3)
    se2 = np.where(bad, 1.0, se2)
    t = (m1 - m2) / np.sqrt(se2)
    p = 2.0 * stats.t.sf(np.abs(t), df)
    return np.where(bad, 1.0, p)


def marginal_tests(x1: "SampleMatrix | np.ndarray",
                   x2: "SampleMatrix | np.ndarray", alpha: float = 0.05,
                   correction: str = "bonferroni",
                   equal_var: bool = True) -> TwoSampleReport:
    """Coordinatewise t-tests combined by Bonferroni or Benjamini-Hochberg.

    Bonferroni rejects globally when the smallest p-value beats alpha / p;
    BH applies the step-up rule at FDR alpha and rejects globally on any
    discovery.  Pooled-variance t by default; ``equal_var=False`` switches
    to Welch degrees of freedom.
    """
    x1, x2 = as_sample(x1), as_sample(x2)
    _check_pair(x1, x2)
    correction = correction.lower()
    if correction not in ("bonferroni", "bh"):
        raise ValueError("correction must be 'bonferroni' or 'bh'")
    pvals = _t_test_pvalues(x1.data, x2.data, equal_var)
    p = x1.p
    if correction == "bonferroni":
        min_p = float(pvals.min())
        global_p = min(1.0, p * min_p)
        reject = min_p < alpha / p
        return TwoSampleReport(method="Bonferroni", statistic=min_p,
                               z=None, p_value=global_p, reject=reject,
                               alpha=alpha,
                               info={"n_coords": p})
    order = np.sort(pvals)
    ranks = np.arange(1, p + 1)
    reject = bool(np.any(order <= ranks * alpha / p))
    adjusted = float(np.minimum.accumulate((order * p / ranks)[::-1])[-1])
    return TwoSampleReport(method="BH", statistic=float(order[0]), z=None,
                           p_value=min(1.0, adjusted), reject=reject,
                           alpha=alpha, info={"n_coords": p})
