"""Divergence estimates and scaling fits from ensemble traces.

Gaussian targets get a moment-matched plug-in KL: the exact law of both
chains on a Gaussian target is Gaussian, so fitting mean and covariance is
statistically efficient and adds no model bias.  Non-Gaussian 1D targets get
a histogram KL against a quadrature-normalized density.  Scaling exponents
come from least squares on log-log pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .targets import GaussianTarget, Potential


@dataclass
class EmpiricalMoments:
    """Cross-chain sample moments with Gaussian-theory standard errors."""

    count: int
    mean: np.ndarray
    covariance: np.ndarray
    mean_se: np.ndarray
    cov_se: np.ndarray


def moments(samples) -> EmpiricalMoments:
    """Unbiased mean and covariance across chains (rows are samples).

    Covariance eigenvalues in [-1e-10 * scale, 0) are clipped to zero;
    anything more negative is rejected as non-PSD input.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    m, n = x.shape
    if m < 2:
        raise ValueError("moments need at least 2 cross-chain samples")
    mean = x.mean(axis=0)
    d = x - mean
    cov = (d.T @ d) / (m - 1)
    cov = 0.5 * (cov + cov.T)
    evals, evecs = np.linalg.eigh(cov)
    scale = max(float(np.abs(evals).max()), 1.0)
    if evals.min() < -1e-10 * scale:
        raise ValueError("sample covariance is not PSD within tolerance")
    if evals.min() < 0:
        cov = (evecs * np.clip(evals, 0.0, None)) @ evecs.T
    var = np.diag(cov)
    mean_se = np.sqrt(var / m)
    cov_se = np.sqrt((np.outer(var, var) + cov**2) / (m - 1))
    return EmpiricalMoments(count=m, mean=mean, covariance=cov,
                            mean_se=mean_se, cov_se=cov_se)


def gaussian_fit_kl(em: EmpiricalMoments, target: GaussianTarget) -> float:
    """Plug-in KL of a Gaussian target against moment-fitted moments.

    Full-matrix version of the spectral bias convention: with fitted
    (mean m, covariance C) and target (mu, Sigma),
    (1/2) [tr(C^{-1} Sigma) + (m - mu)^T C^{-1} (m - mu) - n
           + log det C - log det Sigma].
    Zero exactly at moment match; raises on a singular fitted covariance.
    """
    C = em.covariance
    n = C.shape[0]
    if n != target.dim:
        raise ValueError("dimension mismatch between moments and target")
    try:
        chol = np.linalg.cholesky(C)
    except np.linalg.LinAlgError as exc:
        raise ValueError("fitted covariance is singular") from exc
    sigma = target.covariance
    half = np.linalg.solve(chol, sigma)
    tr = float(np.trace(np.linalg.solve(chol.T, half)))
    d = np.linalg.solve(chol, em.mean - target.mean)
    quad = float(d @ d)
    logdet_c = 2.0 * float(np.sum(np.log(np.diag(chol))))
    logdet_sigma = float(np.sum(np.log(target.eigenvalues)))
    return max(0.5 * (tr + quad - n + logdet_c - logdet_sigma), 0.0)


@dataclass
class KlEstimate:
    """Histogram KL estimate together with its binning floor.

    floor = (n_bins - 1) / (2 * n_used) is the first-order plug-in bias when
    the sample law matches the target, so acceptance thresholds can subtract
    it.  smoothed marks bins whose quadrature mass underflowed and received
    the additive 1e-12 correction.
    """

    value: float
    floor: float
    n_bins: int
    smoothed: bool
    n_used: int

    def __float__(self) -> float:
        return self.value


def kl_vs_quadrature_1d(samples, p: Potential, grid) -> KlEstimate:
    """Discrete KL of 1D samples against the density e^{-f} on a grid.

    The target density is normalized by trapezoidal quadrature on the grid,
    which must span at least 8 target standard deviations.  Samples are
    binned with Freedman-Diaconis widths over the grid's range; the returned
    value is sum p_hat log(p_hat / q) over occupied bins.
    """
    if p.dim != 1:
        raise ValueError("quadrature KL supports one-dimensional targets only")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 16 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be an increasing 1-d array (>= 16 points)")
    logw = -np.asarray(p.value(grid[:, None]), dtype=float)
    w = np.exp(logw - logw.max())
    seg = 0.5 * (w[1:] + w[:-1]) * np.diff(grid)
    cdf = np.concatenate([[0.0], np.cumsum(seg)])
    z = cdf[-1]
    t_mean = float(np.trapezoid(grid * w, grid) / z)
    t_var = float(np.trapezoid(grid**2 * w, grid) / z - t_mean**2)
    if grid[-1] - grid[0] < 8.0 * np.sqrt(t_var):
        raise ValueError("grid must cover at least 8 target standard deviations")

    x = np.asarray(samples, dtype=float).reshape(-1)
    inside = (x >= grid[0]) & (x <= grid[-1])
    x = x[inside]
    if x.size < 2:
        raise ValueError("no samples inside the grid range")
    edges = np.histogram_bin_edges(x, bins="fd", range=(grid[0], grid[-1]))
    counts, _ = np.histogram(x, bins=edges)
    phat = counts / x.size
    q = np.diff(np.interp(edges, grid, cdf)) / z
    smoothed = False
    if np.any(q <= 0):
        q = np.where(q <= 0, 1e-12, q)
        q = q / q.sum()
        smoothed = True
    occupied = phat > 0
    value = float(np.sum(phat[occupied] * np.log(phat[occupied] / q[occupied])))
    floor = (q.size - 1) / (2.0 * x.size)
    return KlEstimate(value=value, floor=floor, n_bins=int(q.size),
                      smoothed=smoothed, n_used=int(x.size))


@dataclass(frozen=True)
class ScalingFit:
    """Power-law fit of bias against step size on log-log axes.

    reliable is cleared when r_squared drops below 0.95.
    """

    slope: float
    intercept: float
    r_squared: float
    reliable: bool


def bias_scaling_fit(eps_grid, bias_values) -> ScalingFit:
    """Least-squares slope of log(bias) against log(eps)."""
    eps = np.asarray(eps_grid, dtype=float)
    bias = np.asarray(bias_values, dtype=float)
    if eps.shape != bias.shape or eps.size < 4:
        raise ValueError("scaling fit needs at least 4 matching grid points")
    if np.any(eps <= 0) or np.any(bias <= 0) or not np.all(np.isfinite(bias)):
        raise ValueError("scaling fit needs positive finite eps and bias values")
    lx = np.log(eps)
    ly = np.log(bias)
    design = np.column_stack([lx, np.ones_like(lx)])
    (slope, intercept), *_ = np.linalg.lstsq(design, ly, rcond=None)
    resid = ly - design @ np.array([slope, intercept])
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 and ss_res == 0 else 1.0 - ss_res / max(ss_tot, 1e-300)
    return ScalingFit(slope=float(slope), intercept=float(intercept),
                      r_squared=r2, reliable=r2 >= 0.95)
