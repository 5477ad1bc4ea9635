"""Structured covariance models and seeded Gaussian sampling.

Builders for the correlation-matrix families used throughout the package
(AR(1), banded, corner block, identity, 2x2 block diagonal, planted block,
planted row) plus the two-sample mean-shift design.  All built-ins are
correlation matrices: unit diagonal, exactly symmetric, PSD-checked at
construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .rng import RngSeed, as_seed

__all__ = [
    "CovarianceModel",
    "SampleMatrix",
    "make_model",
    "sample_gaussian",
    "two_sample_design",
    "KNOWN_ZERO_MEAN",
    "CENTER_BY_COLUMN_MEAN",
]

KNOWN_ZERO_MEAN = "known_zero_mean"
CENTER_BY_COLUMN_MEAN = "center_by_column_mean"

# Diagonal slack in the construction-time PSD check: smallest eigenvalue
# must be >= -PSD_TOL_PER_DIM * p.
PSD_TOL_PER_DIM = 1e-10


@dataclass(eq=False)
class CovarianceModel:
    """A p x p symmetric PSD matrix with a provenance tag.

    ``kind`` names the generator ("ar1", "identity", ..., "custom") or marks
    an estimated matrix ("estimated"); ``params`` carries the generator's
    parameters.  Built-in kinds are correlation matrices (unit diagonal).
    """

    dim: int
    entries: np.ndarray
    kind: str
    params: dict = field(default_factory=dict)
    _chol: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.entries = np.asarray(self.entries, dtype=np.float64)
        if self.entries.shape != (self.dim, self.dim):
            raise ValueError(f"entries must be {self.dim}x{self.dim}")
        if not np.array_equal(self.entries, self.entries.T):
            raise ValueError("entries must be exactly symmetric")

    @property
    def p(self) -> int:
        return self.dim

    def frobenius_sq(self) -> float:
        """Exact sum of squared entries Q + D of this matrix."""
        return float((self.entries * self.entries).sum())

    def q_offdiag(self) -> float:
        """Exact off-diagonal sum of squares."""
        d = np.diag(self.entries)
        return self.frobenius_sq() - float((d * d).sum())

    def cholesky(self, jitter: float = 1e-10) -> np.ndarray:
        """Lower Cholesky factor, retried once with diagonal jitter.

        The jitter keeps numerically singular but valid correlation
        matrices sampleable; it never exceeds ``jitter`` on the diagonal.
        """
        if self._chol is None:
            try:
                self._chol = np.linalg.cholesky(self.entries)
            except np.linalg.LinAlgError:
                try:
                    self._chol = np.linalg.cholesky(
                        self.entries + jitter * np.eye(self.dim))
                except np.linalg.LinAlgError:
                    raise np.linalg.LinAlgError(
                        "covariance factorization failed: matrix is "
                        "indefinite beyond jitter tolerance")
        return self._chol


@dataclass(eq=False)
class SampleMatrix:
    """An n x p matrix of observations (rows = samples).

    ``centering`` records whether downstream estimators may assume the
    population mean is zero or must center by column means.
    """

    data: np.ndarray
    centering: str = CENTER_BY_COLUMN_MEAN

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError("data must be a 2-d array")
        n, p = self.data.shape
        if n < 2 or p < 1:
            raise ValueError("need n >= 2 samples and p >= 1 coordinates")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("all entries must be finite")
        if self.centering not in (KNOWN_ZERO_MEAN, CENTER_BY_COLUMN_MEAN):
            raise ValueError(f"unknown centering policy {self.centering!r}")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]

    def centered(self) -> np.ndarray:
        """Rows minus column means (regardless of policy)."""
        return self.data - self.data.mean(axis=0)

    def residuals(self) -> np.ndarray:
        """Data as-is under KnownZeroMean, column-centered otherwise."""
        if self.centering == KNOWN_ZERO_MEAN:
            return self.data
        return self.centered()


def as_sample(x: "SampleMatrix | np.ndarray",
              centering: str = CENTER_BY_COLUMN_MEAN) -> SampleMatrix:
    """Coerce a raw array into a SampleMatrix (centering by default)."""
    if isinstance(x, SampleMatrix):
        return x
    return SampleMatrix(np.asarray(x, dtype=np.float64), centering)


def _check_psd(entries: np.ndarray, what: str) -> None:
    p = entries.shape[0]
    shifted = entries + (PSD_TOL_PER_DIM * p) * np.eye(p)
    try:
        np.linalg.cholesky(shifted)
    except np.linalg.LinAlgError:
        raise ValueError(f"{what} is not positive semi-definite")


def _symmetrize_exact(upper: np.ndarray) -> np.ndarray:
    """Mirror the strict upper triangle into the lower: storage-equal halves."""
    out = np.triu(upper)
    out = out + np.triu(out, 1).T
    return out


def _check_rho(rho: float) -> float:
    rho = float(rho)
    if not -1.0 < rho < 1.0:
        raise ValueError("rho must lie in (-1, 1)")
    return rho


def make_model(kind: str, p: int, *, rho: float | None = None,
               block_frac: float | None = None, n_blocks: int | None = None,
               support_size: int | None = None, a: float | None = None,
               support: Sequence[int] | None = None,
               entries: np.ndarray | None = None,
               seed: "int | RngSeed | None" = None) -> CovarianceModel:
    """Construct a named covariance (correlation) model of dimension p.

    Kinds and their parameters:

    * ``"ar1"`` -- sigma_ij = rho^|i-j|; alias ``"m1"`` (rho = 0.25).
    * ``"banded1"`` -- rho on the first off-diagonal; alias ``"m2"``
      (rho = 0.3).
    * ``"block_corner"`` -- leading block of ``floor(p * block_frac)``
      coordinates with constant correlation rho; alias ``"m3"``
      (rho = 0.3, block_frac = 1/20, block size rounded down).
    * ``"identity"`` -- I_p; alias ``"m4"``.
    * ``"two_by_two_blocks"`` -- min(n_blocks, p // 2) diagonal 2x2 blocks
      with off-diagonal rho; remaining coordinates uncorrelated.
    * ``"planted_block"`` -- rho between all pairs in a uniformly drawn
      support of ``support_size`` coordinates (needs ``seed``); the support
      is drawn from {1, ..., p}.
    * ``"planted_row"`` -- value ``a`` between coordinate 1 and a support
      S inside {2, ..., p} (drawn of size ``support_size`` when ``support``
      is not given), identity elsewhere.  Requires len(S) * a**2 < 1.
    * ``"custom"`` -- explicit ``entries`` (symmetrized and PSD-checked).

    Block sizes that do not divide p are clipped to fit.
    """
    kind = kind.lower()
    aliases = {"m1": ("ar1", {"rho": 0.25}),
               "m2": ("banded1", {"rho": 0.3}),
               "m3": ("block_corner", {"rho": 0.3, "block_frac": 1.0 / 20.0}),
               "m4": ("identity", {})}
    if kind in aliases:
        kind, defaults = aliases[kind]
        rho = defaults.get("rho", rho)
        block_frac = defaults.get("block_frac", block_frac)

    p = int(p)
    if p < 2:
        raise ValueError("p must be >= 2")

    if kind == "identity":
        return CovarianceModel(p, np.eye(p), "identity")

    if kind == "ar1":
        rho = _check_rho(0.25 if rho is None else rho)
        idx = np.arange(p)
        ent = rho ** np.abs(idx[:, None] - idx[None, :]).astype(np.float64)
        ent = _symmetrize_exact(ent)
        _check_psd(ent, "ar1 model")
        return CovarianceModel(p, ent, "ar1", {"rho": rho})

    if kind == "banded1":
        rho = _check_rho(0.3 if rho is None else rho)
        ent = np.eye(p)
        off = np.arange(p - 1)
        ent[off, off + 1] = rho
        ent[off + 1, off] = rho
        _check_psd(ent, "banded1 model")
        return CovarianceModel(p, ent, "banded1", {"rho": rho})

    if kind == "block_corner":
        rho = _check_rho(0.3 if rho is None else rho)
        frac = 1.0 / 20.0 if block_frac is None else float(block_frac)
        if not 0.0 < frac <= 1.0:
            raise ValueError("block_frac must lie in (0, 1]")
        b = min(int(np.floor(p * frac)), p)
        ent = np.eye(p)
        if b >= 2:
            ent[:b, :b] = rho
            np.fill_diagonal(ent[:b, :b], 1.0)
        _check_psd(ent, "block_corner model")
        return CovarianceModel(p, ent, "block_corner",
                               {"rho": rho, "block_size": b})

    if kind == "two_by_two_blocks":
        rho = _check_rho(0.3 if rho is None else rho)
        nb = p // 2 if n_blocks is None else min(int(n_blocks), p // 2)
        ent = np.eye(p)
        lead = 2 * np.arange(nb)
        ent[lead, lead + 1] = rho
        ent[lead + 1, lead] = rho
        # each 2x2 block has eigenvalues 1 +/- rho > 0 for |rho| < 1
        return CovarianceModel(p, ent, "two_by_two_blocks",
                               {"rho": rho, "n_blocks": nb})

    if kind == "planted_block":
        rho = _check_rho(0.8 if rho is None else rho)
        if support_size is None:
            support_size = p // 20
        k = int(support_size)
        if not 2 <= k <= p:
            raise ValueError("support_size must lie in [2, p]")
        if seed is None:
            raise ValueError("planted_block requires a seed for the support")
        # block spectrum is {1 + (k-1) rho, 1 - rho}; analytic PSD check
        if rho < -1.0 / (k - 1):
            raise ValueError("planted_block needs rho >= -1/(k-1) for "
                             "positive semi-definiteness")
        gen = as_seed(seed).generator()
        s = np.sort(gen.choice(p, size=k, replace=False))
        ent = np.eye(p)
        ent[np.ix_(s, s)] = rho
        np.fill_diagonal(ent, 1.0)
        return CovarianceModel(p, ent, "planted_block",
                               {"rho": rho, "support": s.tolist()})

    if kind == "planted_row":
        if a is None:
            raise ValueError("planted_row requires the row value a")
        a = float(a)
        if support is None:
            if support_size is None:
                raise ValueError("planted_row needs support or support_size")
            if seed is None:
                raise ValueError("planted_row requires a seed to draw S")
            gen = as_seed(seed).generator()
            support = 1 + gen.choice(p - 1, size=int(support_size),
                                     replace=False)
        s = np.sort(np.asarray(list(support), dtype=int))
        if s.size == 0 or s.min() < 1 or s.max() >= p:
            raise ValueError("support must be a nonempty subset of {2..p} "
                             "(zero-based indices 1..p-1)")
        k = s.size
        if k * a * a >= 1.0:
            raise ValueError("planted_row needs |S| * a^2 < 1 for positive "
                             "definiteness")
        ent = np.eye(p)
        ent[0, s] = a
        ent[s, 0] = a
        return CovarianceModel(p, ent, "planted_row",
                               {"a": a, "support": s.tolist()})

    if kind == "custom":
        if entries is None:
            raise ValueError("custom model requires entries")
        ent = np.asarray(entries, dtype=np.float64)
        if ent.ndim != 2 or ent.shape[0] != ent.shape[1]:
            raise ValueError("entries must be square")
        ent = _symmetrize_exact(ent)
        _check_psd(ent, "custom model")
        return CovarianceModel(ent.shape[0], ent, "custom")

    raise ValueError(f"unknown model kind {kind!r}")


def sample_gaussian(model: CovarianceModel, n: int,
                    mean: "np.ndarray | float | None" = None,
                    seed: "int | RngSeed" = 0) -> SampleMatrix:
    """Draw n i.i.d. rows from N(mean, model.entries), deterministically.

    Sampling goes through a cached Cholesky factor (with diagonal jitter
    <= 1e-10 if the matrix is numerically singular).  The same
    (seed, stream) always produces the same matrix.  Samples with an
    exactly zero mean are tagged KnownZeroMean; all others are tagged for
    column-mean centering.
    """
    n = int(n)
    if n < 2:
        raise ValueError("n must be >= 2")
    p = model.dim
    if mean is None:
        mu = np.zeros(p)
    else:
        mu = np.broadcast_to(np.asarray(mean, dtype=np.float64), (p,)).copy()
    chol = model.cholesky()
    gen = as_seed(seed).generator()
    z = gen.standard_normal(size=(n, p))
    data = mu[None, :] + z @ chol.T
    centering = KNOWN_ZERO_MEAN if not mu.any() else CENTER_BY_COLUMN_MEAN
    return SampleMatrix(data, centering)


def two_sample_design(p: int, n1: int, n2: int, prop_equal: float,
                      eta: float, sigma: CovarianceModel,
                      seed: "int | RngSeed") -> tuple[SampleMatrix, SampleMatrix]:
    """Two Gaussian samples with a calibrated mean shift.

    mu1 = 0; mu2 is constant on the trailing ``round((1 - prop_equal) * p)``
    coordinates and scaled so that ||mu1 - mu2|| / sqrt(tr Sigma^2) equals
    ``eta`` exactly.  Both samples are tagged for column-mean centering:
    test procedures must not assume the means are known.
    """
    if not 0.0 <= prop_equal <= 1.0:
        raise ValueError("prop_equal must lie in [0, 1]")
    eta = float(eta)
    if eta < 0:
        raise ValueError("eta must be >= 0")
    p = int(p)
    if sigma.dim != p:
        raise ValueError("sigma dimension does not match p")
    k = int(round((1.0 - prop_equal) * p))
    if k == 0 and eta > 0:
        raise ValueError("prop_equal = 1 with eta > 0 is contradictory")

    mu2 = np.zeros(p)
    if k > 0 and eta > 0:
        tr_sq = sigma.frobenius_sq()
        mu2[p - k:] = eta * np.sqrt(tr_sq / k)

    gen_seed = as_seed(seed)
    x1 = sample_gaussian(sigma, n1, None, gen_seed)
    x2 = sample_gaussian(sigma, n2, mu2, gen_seed.child(1_000_000_007))
    x1 = SampleMatrix(x1.data, CENTER_BY_COLUMN_MEAN)
    return x1, x2
