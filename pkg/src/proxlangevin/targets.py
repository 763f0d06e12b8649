"""Target distributions nu = e^{-f} with analytically known constants.

A target is described by its potential f together with whatever smoothness
and isoperimetry constants are known in closed form: the Hessian operator-norm
bound L, the Hessian Lipschitz constant M, and the log-Sobolev constant of nu.
Only targets whose constants have an analytic justification are provided;
there is no machinery for estimating isoperimetry of arbitrary densities.
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .errors import CapabilityError, NonConvergenceError


class Potential(ABC):
    """Potential f of a target distribution nu = e^{-f} on R^n.

    Derivative methods are vectorized over leading axes: for x of shape
    (..., dim), ``value`` returns shape (...,), ``gradient`` shape (..., dim)
    and ``hessian`` shape (..., dim, dim).  ``third_directional`` is
    pointwise only and is guarded by ``has_third_derivatives``; callers that
    need third derivatives must check the flag and reject targets without
    them rather than fall back to finite differences silently.

    Instances are immutable after construction and safe for concurrent reads.

    Attributes
    ----------
    dim : int
        Dimension n.
    L : float or None
        Bound on the Hessian operator norm (None if unknown).
    M : float or None
        Lipschitz constant of the Hessian in operator norm (None if unknown).
    lsi_alpha : float or None
        Log-Sobolev constant of nu (None if unknown).
    convex : bool
        Whether f is convex; lifts the step-size restriction of the
        implicit solve.
    """

    dim: int
    L: float | None = None
    M: float | None = None
    lsi_alpha: float | None = None
    convex: bool = False

    @abstractmethod
    def value(self, x: np.ndarray) -> np.ndarray:
        """Potential value f(x), up to an additive normalizing constant."""

    @abstractmethod
    def gradient(self, x: np.ndarray) -> np.ndarray:
        """Gradient of f at x."""

    @abstractmethod
    def hessian(self, x: np.ndarray) -> np.ndarray:
        """Hessian of f at x."""

    @property
    def has_third_derivatives(self) -> bool:
        return False

    def third_directional(self, x: np.ndarray, i: int) -> np.ndarray:
        """Matrix of third derivatives d/dx_i of the Hessian at a point x."""
        raise CapabilityError(
            f"{type(self).__name__} does not provide analytic third derivatives"
        )


class GaussianTarget(Potential):
    """Gaussian target N(mean, Sigma) stored spectrally.

    The covariance is kept as eigenvalues plus an orthonormal eigenbasis so
    that every closed-form quantity of the chains (stationary spectra, bias
    values, step matrices) evaluates per eigenvalue without matrix inversion
    error.  The potential is f(x) = (1/2)(x-mean)^T Sigma^{-1} (x-mean).
    """

    convex = True

    def __init__(self, mean, eigenvalues, basis=None):
        mean = np.atleast_1d(np.asarray(mean, dtype=float))
        eigs = np.atleast_1d(np.asarray(eigenvalues, dtype=float))
        n = mean.shape[0]
        if mean.ndim != 1 or eigs.shape != (n,):
            raise ValueError("mean and eigenvalues must be 1-d of equal length")
        if np.any(eigs <= 0):
            raise ValueError("covariance eigenvalues must be positive")
        if basis is None:
            basis = np.eye(n)
        basis = np.asarray(basis, dtype=float)
        if basis.shape != (n, n):
            raise ValueError("basis must be an n-by-n matrix")
        if not np.allclose(basis.T @ basis, np.eye(n), atol=1e-12):
            raise ValueError("basis must be orthonormal (Q^T Q = I to 1e-12)")
        self.mean = mean
        self.eigenvalues = eigs
        self.basis = basis
        self.dim = n
        self.L = float(1.0 / eigs.min())
        self.M = 0.0
        self.lsi_alpha = float(1.0 / eigs.max())

    def _coords(self, x):
        # coordinates of x - mean in the eigenbasis
        return (np.asarray(x, dtype=float) - self.mean) @ self.basis

    def value(self, x):
        c = self._coords(x)
        return 0.5 * np.sum(c * c / self.eigenvalues, axis=-1)

    def gradient(self, x):
        c = self._coords(x)
        return (c / self.eigenvalues) @ self.basis.T

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.precision, x.shape[:-1] + (self.dim, self.dim))

    @property
    def has_third_derivatives(self) -> bool:
        return True

    def third_directional(self, x, i):
        return np.zeros((self.dim, self.dim))

    @property
    def covariance(self) -> np.ndarray:
        return (self.basis * self.eigenvalues) @ self.basis.T

    @property
    def precision(self) -> np.ndarray:
        return (self.basis / self.eigenvalues) @ self.basis.T

    def prox_closed_form(self, y, eps: float) -> np.ndarray:
        """Exact solution of x + eps*grad f(x) = y.

        Per eigenvalue the solve is scalar: the step contracts eigencoordinate
        i by 1/(1 + eps/lambda_i) toward the mean.
        """
        c = self._coords(y)
        return self.mean + (c / (1.0 + eps / self.eigenvalues)) @ self.basis.T


class PerturbedQuadratic1D(Potential):
    """One-dimensional non-Gaussian target f(x) = x^2/2 + a*cos(x), |a| < 1.

    A bounded perturbation of the standard Gaussian potential: the curvature
    f''(x) = 1 - a*cos(x) stays in [1-|a|, 1+|a|], so L = 1+|a|, M = |a|,
    and the log-Sobolev constant survives the perturbation with the
    Holley-Stroock factor e^{-osc(2 a cos)} = e^{-4|a|}.
    """

    convex = True  # f'' >= 1 - |a| > 0

    def __init__(self, amplitude: float):
        a = float(amplitude)
        if not abs(a) < 1:
            raise ValueError("amplitude must satisfy |a| < 1")
        self.amplitude = a
        self.dim = 1
        self.L = 1.0 + abs(a)
        self.M = abs(a)
        self.lsi_alpha = float(np.exp(-4.0 * abs(a)))

    def value(self, x):
        t = np.asarray(x, dtype=float)[..., 0]
        return 0.5 * t * t + self.amplitude * np.cos(t)

    def gradient(self, x):
        t = np.asarray(x, dtype=float)[..., 0]
        return (t - self.amplitude * np.sin(t))[..., None]

    def hessian(self, x):
        t = np.asarray(x, dtype=float)[..., 0]
        return (1.0 - self.amplitude * np.cos(t))[..., None, None]

    @property
    def has_third_derivatives(self) -> bool:
        return True

    def third_directional(self, x, i):
        t = np.asarray(x, dtype=float)[..., 0]
        return np.array([[self.amplitude * np.sin(t)]], dtype=float).reshape(1, 1)


_JSON_KINDS = {
    "gaussian": {"kind", "mean", "eigs", "basis"},
    "perturbed_quadratic": {"kind", "a"},
}


def target_from_json(spec) -> Potential:
    """Construct a target from a JSON description (dict, JSON string, or path).

    Accepted forms::

        {"kind": "gaussian", "mean": [...], "eigs": [...], "basis": [[...]]}
        {"kind": "perturbed_quadratic", "a": 0.5}

    The basis is optional and defaults to the identity.  Unknown kinds and
    unknown keys are rejected.
    """
    if isinstance(spec, str):
        s = spec.strip()
        if s.startswith("{"):
            spec = json.loads(s)
        else:
            with open(spec, "r", encoding="utf-8") as fh:
                spec = json.load(fh)
    if not isinstance(spec, dict):
        raise ValueError("target description must be a JSON object")
    kind = spec.get("kind")
    if kind not in _JSON_KINDS:
        raise ValueError(f"unknown target kind: {kind!r}")
    unknown = set(spec) - _JSON_KINDS[kind]
    if unknown:
        raise ValueError(f"unknown keys in target description: {sorted(unknown)}")
    if kind == "gaussian":
        if "mean" not in spec or "eigs" not in spec:
            raise ValueError("gaussian target needs 'mean' and 'eigs'")
        return GaussianTarget(spec["mean"], spec["eigs"], spec.get("basis"))
    if "a" not in spec:
        raise ValueError("perturbed_quadratic target needs 'a'")
    return PerturbedQuadratic1D(spec["a"])


def find_stationary_point(
    p: Potential,
    x_init,
    tol: float = 1e-10,
    max_iter: int = 200_000,
) -> np.ndarray:
    """Find a stationary point of f by gradient descent.

    Uses a fixed step 1/L when L is known, otherwise a backtracking step.
    Deterministic given x_init.  Raises NonConvergenceError carrying the best
    iterate if the gradient norm does not reach tol within max_iter steps.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x = np.atleast_1d(np.asarray(x_init, dtype=float)).copy()
    g = p.gradient(x)
    gn = float(np.linalg.norm(g))
    best_x, best_gn = x.copy(), gn
    step = 1.0 / p.L if p.L else 1.0
    for _ in range(max_iter):
        if gn <= tol:
            return x
        if p.L:
            x = x - step * g
        else:
            # backtracking on the Armijo condition
            s, fx = step, float(p.value(x))
            while float(p.value(x - s * g)) > fx - 0.5 * s * gn * gn and s > 1e-16:
                s *= 0.5
            x = x - s * g
        g = p.gradient(x)
        gn = float(np.linalg.norm(g))
        if gn < best_gn:
            best_x, best_gn = x.copy(), gn
    if gn <= tol:
        return x
    raise NonConvergenceError(
        f"gradient descent did not reach |grad| <= {tol:g} in {max_iter} steps"
        f" (best {best_gn:.3e})",
        best_x=best_x,
        residual=best_gn,
    )


@dataclass(frozen=True)
class SmoothnessScan:
    """Sampled estimates of the smoothness constants.

    empty is set when the scan had no points, in which case both estimates
    are zero and meaningless.
    """

    L_hat: float
    M_hat: float
    empty: bool = False


def verify_smoothness(
    p: Potential, sample_count: int, radius: float, seed: int = 0
) -> SmoothnessScan:
    """Scan random points in a ball to estimate L and M from the Hessian.

    L_hat is the largest sampled Hessian operator norm; M_hat the largest
    sampled ratio |H(x)-H(y)|_op / |x-y| over all pairs.  Both are lower
    bounds of the true constants, so for targets with exact declared
    constants L_hat <= L and M_hat <= M.
    """
    if sample_count <= 0:
        return SmoothnessScan(0.0, 0.0, empty=True)
    rng = np.random.default_rng(seed)
    n = p.dim
    dirs = rng.standard_normal((sample_count, n))
    dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-300)
    radii = radius * rng.random(sample_count) ** (1.0 / n)
    pts = dirs * radii[:, None]
    hess = [np.asarray(p.hessian(pts[i]), dtype=float) for i in range(sample_count)]
    L_hat = max(
        float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (h + h.T))))) for h in hess
    )
    M_hat = 0.0
    for i in range(sample_count):
        for j in range(i + 1, sample_count):
            dx = float(np.linalg.norm(pts[i] - pts[j]))
            if dx < 1e-12:
                continue
            d = hess[i] - hess[j]
            ratio = float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (d + d.T))))) / dx
            M_hat = max(M_hat, ratio)
    return SmoothnessScan(L_hat, M_hat)
