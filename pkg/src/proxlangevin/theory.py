"""Closed-form limits, biases, and convergence-bound calculators.

Everything here is analytic: stationary spectra of the implicit (PLA) and
explicit (ULA) chains on Gaussian targets, their KL and Renyi biases, the
main KL convergence bound and its step-size/iteration budget, and the Renyi
bounds under log-Sobolev or Poincare isoperimetry of the biased limit.
These functions are the oracles against which the samplers are tested.

Conventions.  Gaussian spectra are eigenvalue vectors of commuting
covariances.  KL-type quantities follow the bias convention used throughout:
``gaussian_kl(lam_rho, lam_nu)`` is the relative entropy of the target
(spectrum lam_nu) measured against the approximating law (spectrum lam_rho),
(1/2) sum(lam_nu/lam_rho - 1 - log(lam_nu/lam_rho)), which is what the
chain-bias formulas evaluate.  Renyi divergences are the standard
R_q(rho || nu).  The explicit chain has no stationary law for
eps >= 2 min(lam); its bias values are then the tagged infinity math.inf so
sweeps can plot the blow-up boundary, and its limit spectrum is None.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BoundParams",
    "RenyiBoundParams",
    "BiasReport",
    "Budget",
    "ExpansionFit",
    "PoincareBound",
    "pla_limit_gaussian",
    "ula_limit_gaussian",
    "kl_bias_pla",
    "kl_bias_ula",
    "kl_bias_expansion_check",
    "kl_bound_thm1",
    "budget_cor2",
    "renyi_bias_pla",
    "renyi_bias_ula",
    "renyi_bound_lsi",
    "renyi_bound_poincare",
    "gaussian_kl",
    "gaussian_renyi",
    "gaussian_w2",
    "gaussian_cov_recursion",
    "h_q_isotropic",
    "bias_report",
    "step_size_ceiling",
]

_Q_KL_BRANCH = 1e-6


def _spectrum(lam) -> np.ndarray:
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if np.any(lam <= 0):
        raise ValueError("eigenvalues must be positive")
    return lam


# ---------------------------------------------------------------------------
# Stationary spectra of the discretized chains on a Gaussian target


def pla_limit_gaussian(eigenvalues, eps: float) -> np.ndarray:
    """Stationary covariance spectrum of the implicit chain: lam/(1 + eps/(2 lam)).

    Defined for every eps > 0; the implicit chain always has a stationary law.
    """
    lam = _spectrum(eigenvalues)
    if eps <= 0:
        raise ValueError("eps must be positive")
    return lam / (1.0 + eps / (2.0 * lam))


def ula_limit_gaussian(eigenvalues, eps: float) -> np.ndarray | None:
    """Stationary covariance spectrum of the explicit chain, or None.

    The explicit chain converges only for eps < 2 min(lam); outside that
    regime there is no stationary law and None is returned rather than a
    clamped spectrum.
    """
    lam = _spectrum(eigenvalues)
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if eps >= 2.0 * lam.min():
        return None
    return lam / (1.0 - eps / (2.0 * lam))


# ---------------------------------------------------------------------------
# KL biases and their small-step expansions


def kl_bias_pla(eigenvalues, eps: float) -> float:
    """KL bias of the implicit chain's limit: (1/2) sum(c - log(1+c)), c = eps/(2 lam)."""
    lam = _spectrum(eigenvalues)
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    c = eps / (2.0 * lam)
    return float(0.5 * np.sum(c - np.log1p(c)))


def kl_bias_ula(eigenvalues, eps: float) -> float:
    """KL bias of the explicit chain's limit: (1/2) sum(-c - log(1-c)).

    Returns math.inf once eps >= 2 min(lam) (no stationary law).
    """
    lam = _spectrum(eigenvalues)
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if eps >= 2.0 * lam.min():
        return math.inf
    c = eps / (2.0 * lam)
    return float(0.5 * np.sum(-c - np.log1p(-c)))


@dataclass(frozen=True)
class ExpansionFit:
    """Leading coefficients of the small-step bias expansions.

    Both biases expand as c2 eps^2 + c3 eps^3 + O(eps^4) with
    c2 = (1/16) sum 1/lam^2 for both chains and c3 = -+(1/48) sum 1/lam^3
    (negative for the implicit chain, positive for the explicit one).
    """

    c2_pla: float
    c3_pla: float
    c2_ula: float
    c3_ula: float
    c2_expected: float
    c3_expected_pla: float
    c3_expected_ula: float


def kl_bias_expansion_check(eigenvalues, eps_grid, rel_tol: float = 0.05) -> ExpansionFit:
    """Fit c2 eps^2 + c3 eps^3 to both biases and check the expansion coefficients.

    The grid must lie in (0, 0.1 * min(lam)] so the quartic term stays
    negligible.  Raises ValueError if the grid is degenerate or a fitted
    coefficient is off by more than rel_tol.
    """
    lam = _spectrum(eigenvalues)
    eps = np.atleast_1d(np.asarray(eps_grid, dtype=float))
    if eps.size < 2 or np.unique(eps).size < 2:
        raise ValueError("expansion fit needs at least two distinct grid points")
    if np.any(eps <= 0) or np.any(eps > 0.1 * lam.min() * (1 + 1e-12)):
        raise ValueError("eps_grid must lie in (0, 0.1*min(lam)]")
    # dividing by eps^2 turns the fit into a well-conditioned linear one
    design = np.column_stack([np.ones_like(eps), eps])

    def fit(bias_fn):
        vals = np.array([bias_fn(lam, e) for e in eps]) / eps**2
        coef, *_ = np.linalg.lstsq(design, vals, rcond=None)
        return float(coef[0]), float(coef[1])

    c2p, c3p = fit(kl_bias_pla)
    c2u, c3u = fit(kl_bias_ula)
    c2_true = float(np.sum(1.0 / lam**2) / 16.0)
    c3_true = float(np.sum(1.0 / lam**3) / 48.0)
    checks = [
        ("c2 (implicit)", c2p, c2_true),
        ("c2 (explicit)", c2u, c2_true),
        ("c3 (implicit)", c3p, -c3_true),
        ("c3 (explicit)", c3u, c3_true),
    ]
    for name, got, want in checks:
        if abs(got - want) > rel_tol * abs(want):
            raise ValueError(
                f"expansion coefficient {name} = {got:.6g} deviates from"
                f" {want:.6g} by more than {rel_tol:.0%}"
            )
    return ExpansionFit(c2p, c3p, c2u, c3u, c2_true, -c3_true, c3_true)


# ---------------------------------------------------------------------------
# Main KL bound and its budget


def step_size_ceiling(alpha: float, L: float, M: float) -> float:
    """Largest step size admitted by the main KL bound's hypothesis."""
    ceiling = min(1.0 / (8.0 * L), 3.0 * alpha / (32.0 * L * L))
    if M > 0:
        ceiling = min(ceiling, 1.0 / M)
    return ceiling


@dataclass
class BoundParams:
    """Inputs of the main KL convergence bound.

    alpha is the log-Sobolev constant of the target, (L, M) its smoothness
    constants, n the dimension, and H0 the initial KL divergence.  The
    hypothesis eps <= min(1/(8L), 1/M, 3 alpha/(32 L^2)) is enforced here.
    """

    alpha: float
    L: float
    M: float
    n: int
    eps: float
    k: int
    H0: float

    def validate(self) -> None:
        if self.alpha <= 0 or self.L <= 0:
            raise ValueError("alpha and L must be positive")
        if self.M < 0:
            raise ValueError("M must be nonnegative")
        if self.n < 1:
            raise ValueError("n must be a positive integer")
        if self.k < 0:
            raise ValueError("k must be nonnegative")
        if self.H0 < 0:
            raise ValueError("H0 must be nonnegative")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        ceiling = step_size_ceiling(self.alpha, self.L, self.M)
        if self.eps > ceiling * (1 + 1e-12):
            raise ValueError(
                f"eps={self.eps:g} violates the hypothesis eps <= {ceiling:g}"
            )


def kl_bound_thm1(bp: BoundParams) -> float:
    """Main KL bound: exp(-alpha eps k) H0 + 34 eps^2 n (L^3 + 9 n^2 M^2) / alpha."""
    bp.validate()
    decay = math.exp(-bp.alpha * bp.eps * bp.k) * bp.H0
    bias = 34.0 * bp.eps**2 * bp.n * (bp.L**3 + 9.0 * bp.n**2 * bp.M**2) / bp.alpha
    return decay + bias


@dataclass(frozen=True)
class Budget:
    """Step size and iteration count certified to reach a target KL level.

    capped means the variance-derived step exceeded the bound's hypothesis
    ceiling and was clamped to it (with k recomputed accordingly).
    """

    eps: float
    k: int
    capped: bool


def budget_cor2(alpha: float, L: float, M: float, n: int, delta: float, H0: float) -> Budget:
    """Choose (eps, k) so the main KL bound is at most delta.

    eps = sqrt(alpha delta / (68 n (L^3 + 9 n^2 M^2))) makes the bias term
    delta/2, and k = ceil(log(2 H0/delta) / (alpha eps)) makes the decay term
    at most delta/2.  The returned pair always satisfies
    kl_bound_thm1(...) <= delta.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if alpha <= 0 or L <= 0 or M < 0 or n < 1 or H0 < 0:
        raise ValueError("invalid bound parameters")
    eps = math.sqrt(alpha * delta / (68.0 * n * (L**3 + 9.0 * n**2 * M**2)))
    ceiling = step_size_ceiling(alpha, L, M)
    capped = eps > ceiling
    if capped:
        eps = ceiling
    if H0 == 0:
        k = 0
    else:
        k = max(0, math.ceil(math.log(2.0 * H0 / delta) / (alpha * eps)))
    return Budget(eps=eps, k=k, capped=capped)


# ---------------------------------------------------------------------------
# Renyi biases for the isotropic Gaussian target N(0, I/alpha)


def _renyi_of_ratio(q: float, r: float) -> float:
    """Renyi divergence per eigenvalue for variance ratio r = lam_nu/lam_rho.

    Finite iff q r + 1 - q > 0.  Within 1e-6 of q = 1 an explicit KL branch
    avoids catastrophic cancellation.
    """
    if r <= 0:
        raise ValueError("variance ratio must be positive")
    if abs(q - 1.0) < _Q_KL_BRANCH:
        return 0.5 * (math.log(r) + 1.0 / r - 1.0)
    t = q * r + 1.0 - q
    if t <= 0:
        return math.inf
    return (q * math.log(r) - math.log(t)) / (2.0 * (q - 1.0))


def _check_renyi_args(n, alpha, eps, q):
    if n < 1:
        raise ValueError("n must be a positive integer")
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if q < 1.0 - _Q_KL_BRANCH:
        raise ValueError("q must be greater than 1 (or within the KL branch of 1)")


def renyi_bias_pla(n: int, alpha: float, eps: float, q: float) -> float:
    """Renyi bias of the implicit chain on N(0, I/alpha); finite for all q > 1.

    (n/(2(q-1))) (q log(1 + eps alpha/2) - log(1 + q eps alpha/2)).
    """
    _check_renyi_args(n, alpha, eps, q)
    return n * _renyi_of_ratio(q, 1.0 + eps * alpha / 2.0)


def renyi_bias_ula(n: int, alpha: float, eps: float, q: float) -> float:
    """Renyi bias of the explicit chain on N(0, I/alpha).

    Finite only for q < 2/(eps alpha); returns math.inf at and beyond that
    order, and for eps >= 2/alpha where no stationary law exists.
    """
    _check_renyi_args(n, alpha, eps, q)
    c = eps * alpha / 2.0
    if c >= 1.0:
        return math.inf
    return n * _renyi_of_ratio(q, 1.0 - c)


# ---------------------------------------------------------------------------
# Renyi convergence bounds given isoperimetry of the biased limit


@dataclass
class RenyiBoundParams:
    """Inputs of the Renyi convergence bounds.

    beta is the isoperimetry constant (log-Sobolev or Poincare) of the biased
    limit, q > 1 the divergence order, R0 the initial order-2q divergence to
    the biased limit, and bias the order-(2q-1) divergence of the biased
    limit from the target.  L (optional) enables the eps < 1/L hypothesis
    check; beta alone enforces eps < 1/(2 beta).
    """

    beta: float
    q: float
    eps: float
    k: int
    R0: float
    bias: float
    L: float | None = None

    def validate(self) -> None:
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.q <= 1:
            raise ValueError("q must exceed 1")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if not self.eps < 1.0 / (2.0 * self.beta):
            raise ValueError("hypothesis requires eps < 1/(2 beta)")
        if self.L is not None and not self.eps < 1.0 / self.L:
            raise ValueError("hypothesis requires eps < 1/L")
        if self.k < 0:
            raise ValueError("k must be nonnegative")
        if self.R0 < 0 or self.bias < 0:
            raise ValueError("R0 and bias must be nonnegative")


def renyi_bound_lsi(rp: RenyiBoundParams) -> float:
    """Renyi bound under log-Sobolev isoperimetry of the biased limit.

    ((q - 1/2)/(q - 1)) R0 exp(-beta eps k / (2q)) + bias.
    """
    rp.validate()
    factor = (rp.q - 0.5) / (rp.q - 1.0)
    return factor * rp.R0 * math.exp(-rp.beta * rp.eps * rp.k / (2.0 * rp.q)) + rp.bias


@dataclass(frozen=True)
class PoincareBound:
    """Renyi bound under Poincare isoperimetry.

    Before k0 = (2q/(beta eps)) (R0 - 1) the decay is linear and the value
    bounds the order-2q divergence to the biased limit (phase "linear");
    from k0 on the value bounds the order-q divergence to the target
    (phase "exponential").
    """

    value: float
    phase: str
    k0: float


def renyi_bound_poincare(rp: RenyiBoundParams) -> PoincareBound:
    """Renyi bound under Poincare isoperimetry of the biased limit.

    For k >= k0: ((q - 1/2)/(q - 1)) exp(-beta eps (k - k0)/(2q)) + bias.
    For k < k0 the linear-phase bound R0 - beta eps k/(2q) is returned with
    a "linear" phase marker.
    """
    rp.validate()
    k0 = max(0.0, (2.0 * rp.q / (rp.beta * rp.eps)) * (rp.R0 - 1.0))
    if rp.k < k0:
        return PoincareBound(
            value=rp.R0 - rp.beta * rp.eps * rp.k / (2.0 * rp.q),
            phase="linear",
            k0=k0,
        )
    factor = (rp.q - 0.5) / (rp.q - 1.0)
    value = factor * math.exp(-rp.beta * rp.eps * (rp.k - k0) / (2.0 * rp.q)) + rp.bias
    return PoincareBound(value=value, phase="exponential", k0=k0)


# ---------------------------------------------------------------------------
# Commuting-Gaussian divergences


def gaussian_kl(lam_rho, lam_nu, mean_rho=None, mean_nu=None) -> float:
    """Relative entropy of the target from an approximating Gaussian law.

    Both covariances are given spectrally in a shared eigenbasis.  Returns
    (1/2) sum(lam_nu/lam_rho - 1 - log(lam_nu/lam_rho))
    + (1/2) (mean_rho - mean_nu)^T diag(1/lam_rho) (mean_rho - mean_nu),
    the direction in which the chain-limit biases are measured, so that
    gaussian_kl(pla_limit_gaussian(lam, eps), lam) == kl_bias_pla(lam, eps).
    """
    a = _spectrum(lam_rho)
    b = _spectrum(lam_nu)
    if a.shape != b.shape:
        raise ValueError("spectra must have equal length")
    r = b / a
    out = 0.5 * np.sum(r - 1.0 - np.log(r))
    if mean_rho is not None or mean_nu is not None:
        mr = np.zeros_like(a) if mean_rho is None else np.atleast_1d(np.asarray(mean_rho, float))
        mn = np.zeros_like(a) if mean_nu is None else np.atleast_1d(np.asarray(mean_nu, float))
        if mr.shape != a.shape or mn.shape != a.shape:
            raise ValueError("means must match the spectra in length")
        d = mr - mn
        out += 0.5 * np.sum(d * d / a)
    return float(max(out, 0.0))


def gaussian_renyi(q: float, lam_rho, lam_nu) -> float:
    """Renyi divergence R_q(rho || nu) between centered commuting Gaussians.

    Returns math.inf when the defining integral diverges, i.e. when any
    eigenvalue ratio r = lam_nu/lam_rho has q r + 1 - q <= 0.
    """
    if q <= 0:
        raise ValueError("q must be positive")
    a = _spectrum(lam_rho)
    b = _spectrum(lam_nu)
    if a.shape != b.shape:
        raise ValueError("spectra must have equal length")
    total = 0.0
    for r in b / a:
        term = _renyi_of_ratio(q, float(r))
        if math.isinf(term):
            return math.inf
        total += term
    return total


def gaussian_w2(mean_rho, lam_rho, mean_nu, lam_nu) -> float:
    """Wasserstein-2 distance between commuting Gaussians.

    sqrt(|mean_rho - mean_nu|^2 + sum (sqrt(lam_rho) - sqrt(lam_nu))^2).
    """
    a = _spectrum(lam_rho)
    b = _spectrum(lam_nu)
    mr = np.atleast_1d(np.asarray(mean_rho, dtype=float))
    mn = np.atleast_1d(np.asarray(mean_nu, dtype=float))
    if a.shape != b.shape or mr.shape != a.shape or mn.shape != b.shape:
        raise ValueError("means and spectra must have equal length")
    d2 = np.sum((mr - mn) ** 2) + np.sum((np.sqrt(a) - np.sqrt(b)) ** 2)
    return float(np.sqrt(d2))


def gaussian_cov_recursion(eigenvalues, eps: float, k: int, init=None) -> np.ndarray:
    """Exact covariance spectrum of the implicit chain after k steps.

    Per eigenvalue, with contraction a = 1/(1 + eps/lam), the spectrum obeys
    s <- a^2 (s + 2 eps) starting from init (zeros for a point mass, or a
    Gaussian initial spectrum in the same basis).  Converges to
    pla_limit_gaussian(lam, eps) as k grows.
    """
    lam = _spectrum(eigenvalues)
    if eps <= 0:
        raise ValueError("eps must be positive")
    if k < 0:
        raise ValueError("k must be nonnegative")
    s = np.zeros_like(lam) if init is None else np.atleast_1d(np.asarray(init, float)).copy()
    if s.shape != lam.shape or np.any(s < 0):
        raise ValueError("init spectrum must be nonnegative and match lam")
    a2 = (1.0 / (1.0 + eps / lam)) ** 2
    for _ in range(k):
        s = a2 * (s + 2.0 * eps)
    return s


def h_q_isotropic(n: int, alpha: float, q: float, delta: float,
                  iters: int = 200) -> float:
    """Largest step size keeping the implicit chain's order-(2q-1) bias <= delta.

    Only the isotropic Gaussian N(0, I/alpha) admits this computation in
    closed form; the bias is strictly increasing in eps, so bisection applies.
    """
    if q <= 1:
        raise ValueError("q must exceed 1")
    if delta <= 0:
        raise ValueError("delta must be positive")
    order = 2.0 * q - 1.0
    hi = 1.0 / alpha
    while renyi_bias_pla(n, alpha, hi, order) <= delta:
        hi *= 2.0
        if hi > 1e300:
            raise ValueError("bias never exceeds delta; step size is unbounded")
    lo = 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if renyi_bias_pla(n, alpha, mid, order) <= delta:
            lo = mid
        else:
            hi = mid
    return lo


# ---------------------------------------------------------------------------
# Side-by-side bias table rows


@dataclass
class BiasReport:
    """KL and Renyi biases of both chains at one step size.

    renyi maps each requested order q to the pair (implicit, explicit);
    explicit entries are math.inf in the divergence regime.  Whenever the
    explicit KL bias is finite it strictly exceeds the implicit one.
    """

    eps: float
    kl_pla: float
    kl_ula: float
    renyi: dict = field(default_factory=dict)


def bias_report(eigenvalues, eps: float, qs=()) -> BiasReport:
    """Evaluate both chains' biases at one step size.

    Renyi orders are only supported for isotropic spectra (the closed forms
    require N(0, I/alpha)); a non-isotropic spectrum with qs raises.
    """
    lam = _spectrum(eigenvalues)
    report = BiasReport(
        eps=eps,
        kl_pla=kl_bias_pla(lam, eps),
        kl_ula=kl_bias_ula(lam, eps),
    )
    if len(tuple(qs)) > 0:
        if not np.allclose(lam, lam[0], rtol=1e-12, atol=0.0):
            raise ValueError("Renyi biases require an isotropic spectrum")
        alpha = 1.0 / float(lam[0])
        n = lam.size
        for q in qs:
            report.renyi[float(q)] = (
                renyi_bias_pla(n, alpha, eps, q),
                renyi_bias_ula(n, alpha, eps, q),
            )
    return report
