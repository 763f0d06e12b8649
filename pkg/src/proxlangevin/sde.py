"""Continuous-time representation of one implicit step, and its bounds.

One implicit step from x0 is the time-eps value of the interpolation process
X_t = x0 - t * grad f(X_t) + sqrt(2) W_t.  That process solves an SDE
dX = mu dt + sqrt(2 G) dW with

    G(x, t)  = (I + t hess f(x))^{-2}
    mu(x, t) = -(I + t hess f(x))^{-1} (grad f(x) + t Tr(grad3 f(x) G))

where Tr(grad3 f G) is the vector whose i-th entry is the trace of the i-th
third-derivative slice times G.  The deviation of mu from the drift that
would keep nu stationary (div G - G grad f) is the shifted drift
mu_tilde = mu - div G + G grad f; its size controls the per-step
discretization error, and for t <= min(1/(8L), 1/M) the spectrum of G stays
in (3/4, 4/3) while |mu_tilde| <= (4/3) t L |grad f| + 6 t n^{3/2} M.

The representation is verified pathwise: the same Brownian path drives both
the one-shot implicit solve and an Euler-Maruyama integration of the SDE, so
agreement is deterministic per path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError
from .prox import ProxConfig, prox_step
from .samplers import chain_stream
from .targets import Potential

_FD_STEP = 1e-5


@dataclass
class InterpolationQuantities:
    """Drift and covariance of the interpolation SDE at one (x, t).

    sqrt_g is (I + t hess f)^{-1}, the symmetric square root of G; div_g is
    the row-divergence vector of G, computed analytically from third
    derivatives unless div_g_approximate is set (central differences).
    """

    t: float
    G: np.ndarray
    sqrt_g: np.ndarray
    mu: np.ndarray
    mu_tilde: np.ndarray
    div_g: np.ndarray
    div_g_approximate: bool = False


def _basis_matrix(p: Potential, x, t: float) -> np.ndarray:
    H = np.asarray(p.hessian(x), dtype=float)
    B = np.eye(p.dim) + t * H
    w = np.linalg.eigvalsh(0.5 * (B + B.T))
    if np.abs(w).min() <= 1e-12 * max(1.0, np.abs(w).max()):
        raise np.linalg.LinAlgError("I + t hess f(x) is numerically singular")
    return B


def _g_matrices(p: Potential, x, t: float):
    B = _basis_matrix(p, x, t)
    sqrt_g = np.linalg.solve(B, np.eye(p.dim))
    sqrt_g = 0.5 * (sqrt_g + sqrt_g.T)
    G = sqrt_g @ sqrt_g
    return 0.5 * (G + G.T), sqrt_g


def divergence_of_g_fd(p: Potential, x, t: float, step: float = _FD_STEP) -> np.ndarray:
    """Row divergence of G by central differences of the map x -> G(x, t)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = p.dim
    div = np.zeros(n)
    for j in range(n):
        e = np.zeros(n)
        e[j] = step
        g_plus, _ = _g_matrices(p, x + e, t)
        g_minus, _ = _g_matrices(p, x - e, t)
        dgj = (g_plus - g_minus) / (2.0 * step)
        div += dgj[:, j]
    return div


def interpolation_quantities(
    p: Potential, x, t: float, div_mode: str = "analytic"
) -> InterpolationQuantities:
    """Evaluate G, mu, and the shifted drift mu_tilde at one point and time.

    Requires analytic third derivatives (for the trace term of mu and, in
    "analytic" mode, for div G); targets without them are rejected rather
    than silently finite-differenced.  div_mode "fd" computes div G by
    central differences instead and flags the result approximate; it exists
    as a cross-check of the analytic path.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    if div_mode not in ("analytic", "fd"):
        raise ValueError("div_mode must be 'analytic' or 'fd'")
    if not p.has_third_derivatives:
        raise CapabilityError(
            f"{type(p).__name__} lacks analytic third derivatives"
        )
    x = np.atleast_1d(np.asarray(x, dtype=float))
    n = p.dim
    grad = np.asarray(p.gradient(x), dtype=float)
    G, sqrt_g = _g_matrices(p, x, t)
    slices = [np.asarray(p.third_directional(x, i), dtype=float) for i in range(n)]
    trace3 = np.array([np.trace(T @ G) for T in slices])
    mu = -sqrt_g @ (grad + t * trace3)
    if div_mode == "analytic":
        div_g = np.zeros(n)
        for j in range(n):
            dB = t * slices[j]
            dGj = -(sqrt_g @ dB @ G + G @ dB @ sqrt_g)
            div_g += dGj[:, j]
        approximate = False
    else:
        div_g = divergence_of_g_fd(p, x, t)
        approximate = True
    mu_tilde = mu - div_g + G @ grad
    return InterpolationQuantities(
        t=t, G=G, sqrt_g=sqrt_g, mu=mu, mu_tilde=mu_tilde,
        div_g=div_g, div_g_approximate=approximate,
    )


def _time_cap(p: Potential) -> float:
    if p.L is None:
        raise ValueError("target must declare L")
    cap = 1.0 / (8.0 * p.L)
    if p.M:
        cap = min(cap, 1.0 / p.M)
    return cap


@dataclass(frozen=True)
class Lemma4Report:
    """Slack of the smoothness envelope at one (x, t).

    g_lower_slack = min eig(G) - 3/4, g_upper_slack = 4/3 - max eig(G),
    mu_tilde_slack = (4/3) t L |grad f| + 6 t n^{3/2} M - |mu_tilde|.
    ok requires strictly positive spectral slacks and nonnegative drift slack.
    """

    g_lower_slack: float
    g_upper_slack: float
    mu_tilde_slack: float
    ok: bool


def check_lemma4(p: Potential, x, t: float) -> Lemma4Report:
    """Check the spectral envelope of G and the shifted-drift bound."""
    cap = _time_cap(p)
    if not 0 <= t <= cap * (1 + 1e-12):
        raise ValueError(f"t={t:g} outside the envelope's range [0, {cap:g}]")
    q = interpolation_quantities(p, x, t)
    eigs = np.linalg.eigvalsh(q.G)
    grad_norm = float(np.linalg.norm(p.gradient(np.atleast_1d(np.asarray(x, float)))))
    bound = (4.0 / 3.0) * t * p.L * grad_norm + 6.0 * t * p.dim**1.5 * (p.M or 0.0)
    lower = float(eigs.min() - 0.75)
    upper = float(4.0 / 3.0 - eigs.max())
    slack = float(bound - np.linalg.norm(q.mu_tilde))
    return Lemma4Report(
        g_lower_slack=lower,
        g_upper_slack=upper,
        mu_tilde_slack=slack,
        ok=bool(lower > 0 and upper > 0 and slack >= 0),
    )


_EXACT_CFG = ProxConfig(tol=1e-13, max_iter=100)


def verify_sde_representation(
    p: Potential,
    x0,
    t_end: float,
    n_substeps: int,
    seed: int = 0,
    increments: np.ndarray | None = None,
) -> float:
    """Max pathwise gap between the exact interpolation and its SDE integration.

    One Brownian path is laid on a uniform grid.  The exact value at each
    grid time solves X + t grad f(X) = x0 + sqrt(2) W_t (a one-shot implicit
    solve from x0); the SDE dX = mu dt + sqrt(2) sqrt_g dW is integrated by
    Euler-Maruyama on the same increments.  The gap shrinks as the grid is
    refined; pass increments (shape (n_substeps, dim), e.g. zeros for the
    noise-free case) to control the path explicitly.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    if t_end == 0:
        return 0.0
    cap = _time_cap(p)
    if t_end > cap * (1 + 1e-12):
        raise ValueError(f"t_end={t_end:g} exceeds the admissible horizon {cap:g}")
    if n_substeps < 1:
        raise ValueError("n_substeps must be at least 1")
    n = p.dim
    h = t_end / n_substeps
    if increments is None:
        increments = chain_stream(seed, 0).standard_normal((n_substeps, n)) * np.sqrt(h)
    else:
        increments = np.asarray(increments, dtype=float)
        if increments.shape != (n_substeps, n):
            raise ValueError("increments must have shape (n_substeps, dim)")
    w = np.cumsum(increments, axis=0)
    x_em = x0.copy()
    max_err = 0.0
    sqrt2 = np.sqrt(2.0)
    for j in range(n_substeps):
        t_j = j * h
        q = interpolation_quantities(p, x_em, t_j)
        x_em = x_em + q.mu * h + sqrt2 * (q.sqrt_g @ increments[j])
        x_exact = prox_step(p, x0 + sqrt2 * w[j], (j + 1) * h, _EXACT_CFG).x
        max_err = max(max_err, float(np.linalg.norm(x_exact - x_em)))
    return max_err


@dataclass
class ConvergenceStudy:
    """Pathwise errors of the SDE integration across grid refinements.

    errors has shape (n_paths, n_levels) with levels ordered by substeps
    ascending; every level of a path shares the same Brownian path (coarse
    increments are sums of the finest ones).
    """

    substeps: np.ndarray
    errors: np.ndarray

    def ratios(self) -> np.ndarray:
        """Error ratios between consecutive refinements, per path."""
        return self.errors[:, :-1] / self.errors[:, 1:]


def sde_convergence_study(
    p: Potential,
    x0,
    t_end: float,
    substeps,
    n_paths: int,
    seed: int = 0,
) -> ConvergenceStudy:
    """Run the pathwise check on a ladder of grids over shared Brownian paths.

    Every entry of substeps must divide the largest one so that coarser grids
    see the same path.  Each path draws its increments from an independent
    stream keyed by (seed, path).
    """
    levels = np.array(sorted(int(s) for s in substeps))
    if levels.size < 1 or levels[0] < 1:
        raise ValueError("substeps must be positive integers")
    finest = int(levels[-1])
    if any(finest % int(s) for s in levels):
        raise ValueError("every substep count must divide the largest one")
    if n_paths < 1:
        raise ValueError("n_paths must be at least 1")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    n = p.dim
    h_fine = t_end / finest
    errors = np.empty((n_paths, levels.size))
    for i in range(n_paths):
        fine = chain_stream(seed, i).standard_normal((finest, n)) * np.sqrt(h_fine)
        for li, s in enumerate(levels):
            factor = finest // int(s)
            dw = fine.reshape(int(s), factor, n).sum(axis=1)
            errors[i, li] = verify_sde_representation(
                p, x0, t_end, int(s), increments=dw
            )
    return ConvergenceStudy(substeps=levels, errors=errors)
