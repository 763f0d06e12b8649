"""Implicit-step solver: find x with x + eps * grad f(x) = y.

The solve is the first-order condition of the strongly convex subproblem
argmin_x { f(x) + |x - y|^2 / (2 eps) }, which is well posed for any eps > 0
when f is convex and for eps <= 1/L otherwise.  The default solver is Newton
on the residual map x -> x + eps * grad f(x) - y, whose Jacobian
I + eps * hess f(x) is positive definite under those preconditions; rows whose
Newton system is ill-conditioned fall back to gradient descent on the
subproblem objective.

All operations are pure and safe to call concurrently.  The batch entry point
updates each row only until that row's own residual threshold is met, so a
row's solution never depends on what else is in the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonConvergenceError
from .targets import Potential

_SOLVERS = ("newton", "gradient_descent")
_ILL_CONDITIONED = 1e12


@dataclass
class ProxConfig:
    """Solver settings for the implicit step.

    tol is a relative residual: the convergence threshold for input y is
    tol * (1 + |y|), so traces are insensitive to scale.
    """

    tol: float = 1e-10
    max_iter: int = 200
    solver: str = "newton"

    def validate(self) -> None:
        if self.tol <= 0:
            raise ValueError("prox tol must be positive")
        if self.max_iter < 1:
            raise ValueError("prox max_iter must be at least 1")
        if self.solver not in _SOLVERS:
            raise ValueError(f"prox solver must be one of {_SOLVERS}")


@dataclass
class ProxOutcome:
    """Result of one implicit-step solve.

    residual is |x + eps * grad f(x) - y|; converged means it is at or below
    threshold (the absolute tolerance tol * (1 + |y|) used for this call).
    """

    x: np.ndarray
    residual: float
    iterations: int
    converged: bool
    threshold: float


@dataclass
class BatchProxOutcome:
    """Row-wise implicit-step solves for a batch of right-hand sides."""

    x: np.ndarray
    residual: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    threshold: np.ndarray


def check_step_size(p: Potential, eps: float) -> None:
    """Reject step sizes for which the subproblem may lose strong convexity."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if not p.convex:
        if p.L is None:
            raise ValueError(
                "nonconvex target with unknown L: cannot certify the implicit step"
            )
        if eps > 1.0 / p.L:
            raise ValueError(
                f"eps={eps:g} exceeds 1/L={1.0 / p.L:g} for a nonconvex target"
            )


def prox_forward(p: Potential, x, eps: float) -> np.ndarray:
    """Forward map T(x) = x + eps * grad f(x), the inverse of the implicit step."""
    x = np.asarray(x, dtype=float)
    return x + eps * p.gradient(x)


def prox_step_batch(p: Potential, y, eps: float, cfg: ProxConfig | None = None) -> BatchProxOutcome:
    """Solve x + eps * grad f(x) = y for every row of y.

    Rows are updated independently: a row stops moving once its residual is
    below its own threshold, so results are bit-identical regardless of how
    rows are grouped into batches.
    """
    cfg = cfg if cfg is not None else ProxConfig()
    cfg.validate()
    check_step_size(p, eps)
    Y = np.atleast_2d(np.asarray(y, dtype=float))
    m, n = Y.shape
    threshold = cfg.tol * (1.0 + np.linalg.norm(Y, axis=1))
    X = Y.copy()  # explicit-step guess; contraction factor eps*L from y
    F = X + eps * p.gradient(X) - Y
    res = np.linalg.norm(F, axis=1)
    iters = np.zeros(m, dtype=np.int64)
    # 0 = newton, 1 = gradient descent on the subproblem objective
    mode = np.full(m, 0 if cfg.solver == "newton" else 1, dtype=np.int8)
    eye = np.eye(n)

    for _ in range(cfg.max_iter):
        active = res > threshold
        if not active.any():
            break
        rows = np.flatnonzero(active)
        nrows = rows[mode[rows] == 0]
        grows = rows[mode[rows] == 1]
        if nrows.size:
            H = np.asarray(p.hessian(X[nrows]), dtype=float)
            J = eye + eps * H
            if n == 1:
                jd = J[:, 0, 0]
                bad = np.abs(jd) <= 1e-12 * np.maximum(1.0, np.abs(jd))
            else:
                w = np.linalg.eigvalsh(J)
                bad = w[:, 0] <= 1e-12 * np.maximum(1.0, np.abs(w).max(axis=1))
                bad |= np.abs(w).max(axis=1) > _ILL_CONDITIONED * np.maximum(
                    w[:, 0], 1e-300
                )
            if bad.any():
                mode[nrows[bad]] = 1
                grows = np.concatenate([grows, nrows[bad]])
                nrows = nrows[~bad]
                J = J[~bad]
            if nrows.size:
                if n == 1:
                    dx = F[nrows] / J[:, 0, 0][:, None]
                else:
                    dx = np.linalg.solve(J, F[nrows])
                X[nrows] -= dx
                iters[nrows] += 1
        if grows.size:
            if p.L is None:
                raise ValueError("gradient-descent prox solve needs a known L")
            eta = 1.0 / (p.L + 1.0 / eps)
            X[grows] -= (eta / eps) * F[grows]
            iters[grows] += 1
        F[rows] = X[rows] + eps * p.gradient(X[rows]) - Y[rows]
        res[rows] = np.linalg.norm(F[rows], axis=1)

    return BatchProxOutcome(
        x=X,
        residual=res,
        iterations=iters,
        converged=res <= threshold,
        threshold=threshold,
    )


def prox_step(p: Potential, y, eps: float, cfg: ProxConfig | None = None) -> ProxOutcome:
    """Solve the implicit step for a single point y.

    Raises NonConvergenceError (carrying the best iterate) if the residual
    does not reach tol * (1 + |y|) within max_iter iterations.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    out = prox_step_batch(p, y[None, :], eps, cfg)
    outcome = ProxOutcome(
        x=out.x[0],
        residual=float(out.residual[0]),
        iterations=int(out.iterations[0]),
        converged=bool(out.converged[0]),
        threshold=float(out.threshold[0]),
    )
    if not outcome.converged:
        raise NonConvergenceError(
            f"implicit step did not converge in {out.iterations[0]} iterations"
            f" (residual {outcome.residual:.3e} > {outcome.threshold:.3e})",
            best_x=outcome.x,
            residual=outcome.residual,
        )
    return outcome
