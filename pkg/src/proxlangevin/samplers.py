"""Implicit (PLA) and explicit (ULA) Langevin chains and ensembles.

One PLA step adds Gaussian noise and then solves the implicit equation:
x_{k+1} + eps * grad f(x_{k+1}) = x_k + sqrt(2 eps) z_k.  One ULA step is the
explicit counterpart x_{k+1} = x_k - eps * grad f(x_k) + sqrt(2 eps) z_k.
Both consume exactly dim normal draws per step from the caller's generator,
so chains driven by the same stream see identical noise sequences.

Ensembles give every chain its own counter-based stream keyed by
(seed, chain_index), which makes traces reproducible bit-for-bit and
independent of execution order.  Chains are processed in fixed-size blocks;
the worker count (PLA_THREADS or the n_workers argument) only distributes
whole blocks over threads and never changes the arithmetic.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import NonConvergenceError
from .prox import ProxConfig, check_step_size, prox_step, prox_step_batch
from .targets import Potential, find_stationary_point

_BLOCK = 4096
_MASK64 = (1 << 64) - 1

_INIT_KINDS = ("point_mass", "gaussian_at_stationary", "prox_pushforward")


def chain_stream(seed: int, chain_index: int) -> np.random.Generator:
    """Counter-based generator for one chain, keyed by (seed, chain_index)."""
    key = np.array([seed & _MASK64, chain_index & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass
class InitSpec:
    """Initial distribution of a chain.

    point_mass starts every chain at x0.  gaussian_at_stationary draws from
    N(x*, (1/L) I) around a stationary point x* of f.  prox_pushforward draws
    xt ~ N(x*, 2 eps I) and starts at the solution of x + eps grad f(x) = xt,
    i.e. the image of a Gaussian under the inverse forward map.
    """

    kind: str
    x0: np.ndarray | None = None

    @classmethod
    def point_mass(cls, x0) -> "InitSpec":
        return cls("point_mass", np.atleast_1d(np.asarray(x0, dtype=float)))

    @classmethod
    def gaussian_at_stationary(cls) -> "InitSpec":
        return cls("gaussian_at_stationary")

    @classmethod
    def prox_pushforward(cls) -> "InitSpec":
        return cls("prox_pushforward")

    def validate(self, p: Potential, eps: float) -> None:
        if self.kind not in _INIT_KINDS:
            raise ValueError(f"init kind must be one of {_INIT_KINDS}")
        if self.kind == "point_mass":
            if self.x0 is None or self.x0.shape != (p.dim,):
                raise ValueError("point_mass init needs x0 of the target dimension")
        if self.kind == "gaussian_at_stationary" and not p.L:
            raise ValueError("gaussian_at_stationary init requires a known L")
        if self.kind == "prox_pushforward":
            if not p.L:
                raise ValueError("prox_pushforward init requires a known L")
            if not eps < 1.0 / p.L:
                raise ValueError("prox_pushforward init requires eps < 1/L")


@dataclass
class ChainConfig:
    """Step size, horizon, ensemble size, seeding and initialization."""

    eps: float
    steps: int
    n_chains: int = 1
    seed: int = 0
    init: InitSpec = field(default_factory=InitSpec.gaussian_at_stationary)
    thinning: int = 1
    prox: ProxConfig = field(default_factory=ProxConfig)

    def validate(self, p: Potential) -> None:
        check_step_size(p, self.eps)
        if self.steps < 0:
            raise ValueError("steps must be nonnegative")
        if self.n_chains < 1:
            raise ValueError("n_chains must be at least 1")
        if self.thinning < 1:
            raise ValueError("thinning must be at least 1")
        self.prox.validate()
        self.init.validate(p, self.eps)


@dataclass
class Trace:
    """Recorded ensemble iterates.

    iterates has shape (n_chains, n_stored, dim), with stored_steps giving
    the chain step index of each stored slice (step 0 is the initial sample;
    the final step is always stored).  stream_keys holds each chain's
    (seed, chain_index) generator key, so the trace is replayable bit-exactly
    from its config snapshot.
    """

    iterates: np.ndarray
    stored_steps: np.ndarray
    stream_keys: np.ndarray
    config: ChainConfig
    algorithm: str

    def final_iterates(self) -> np.ndarray:
        return self.iterates[:, -1, :]


def pla_step(p: Potential, x, eps: float, rng: np.random.Generator,
             prox_cfg: ProxConfig | None = None) -> np.ndarray:
    """One implicit step: noise first, then the implicit solve."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z = rng.standard_normal(p.dim)
    y = x + np.sqrt(2.0 * eps) * z
    return prox_step(p, y, eps, prox_cfg).x


def ula_step(p: Potential, x, eps: float, rng: np.random.Generator) -> np.ndarray:
    """One explicit step; consumes the same dim draws as the implicit step."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z = rng.standard_normal(p.dim)
    return x - eps * p.gradient(x) + np.sqrt(2.0 * eps) * z


def _stored_steps(steps: int, thinning: int) -> np.ndarray:
    ks = np.arange(0, steps + 1, thinning)
    if ks[-1] != steps:
        ks = np.append(ks, steps)
    return ks


def _init_positions(p: Potential, cfg: ChainConfig, x_star, init_z) -> np.ndarray:
    kind = cfg.init.kind
    if kind == "point_mass":
        return np.tile(cfg.init.x0, (init_z.shape[0], 1))
    if kind == "gaussian_at_stationary":
        return x_star + init_z / np.sqrt(p.L)
    y = x_star + np.sqrt(2.0 * cfg.eps) * init_z
    out = prox_step_batch(p, y, cfg.eps, cfg.prox)
    if not out.converged.all():
        bad = int(np.flatnonzero(~out.converged)[0])
        raise NonConvergenceError(
            f"prox_pushforward init failed to converge (local chain {bad})",
            best_x=out.x[bad],
            residual=float(out.residual[bad]),
        )
    return out.x


def _run_block(p, cfg, algorithm, lo, hi, x_star, stored, pos, out):
    B = hi - lo
    n = p.dim
    init_z = np.empty((B, n))
    Z = np.empty((B, cfg.steps, n)) if cfg.steps else None
    needs_init_draw = cfg.init.kind != "point_mass"
    for b, i in enumerate(range(lo, hi)):
        g = chain_stream(cfg.seed, i)
        if needs_init_draw:
            init_z[b] = g.standard_normal(n)
        if cfg.steps:
            Z[b] = g.standard_normal((cfg.steps, n))
    x = _init_positions(p, cfg, x_star, init_z)
    if 0 in pos:
        out[lo:hi, pos[0]] = x
    scale = np.sqrt(2.0 * cfg.eps)
    for k in range(1, cfg.steps + 1):
        z = Z[:, k - 1, :]
        if algorithm == "pla":
            step = prox_step_batch(p, x + scale * z, cfg.eps, cfg.prox)
            if not step.converged.all():
                bad = int(np.flatnonzero(~step.converged)[0])
                raise NonConvergenceError(
                    f"implicit step failed at step {k} of chain {lo + bad}",
                    best_x=step.x[bad],
                    residual=float(step.residual[bad]),
                )
            x = step.x
        else:
            x = x - cfg.eps * p.gradient(x) + scale * z
        if k in pos:
            out[lo:hi, pos[k]] = x


def run_ensemble(p: Potential, cfg: ChainConfig, algorithm: str,
                 n_workers: int | None = None) -> Trace:
    """Run n_chains independent chains and record thinned iterates.

    A pure function of (target, config, algorithm): chain i draws from the
    stream keyed by (seed, i), blocks are fixed-size, and workers only farm
    out whole blocks, so serial and parallel runs are bit-identical.
    """
    if algorithm not in ("pla", "ula"):
        raise ValueError("algorithm must be 'pla' or 'ula'")
    if algorithm == "pla":
        cfg.validate(p)
    else:
        # explicit steps have no step-size precondition
        if cfg.eps <= 0:
            raise ValueError("eps must be positive")
        if cfg.steps < 0 or cfg.n_chains < 1 or cfg.thinning < 1:
            raise ValueError("invalid chain config")
        cfg.init.validate(p, cfg.eps)

    x_star = None
    if cfg.init.kind in ("gaussian_at_stationary", "prox_pushforward"):
        x_star = find_stationary_point(p, np.zeros(p.dim), tol=1e-10)

    stored = _stored_steps(cfg.steps, cfg.thinning)
    pos = {int(k): j for j, k in enumerate(stored)}
    out = np.empty((cfg.n_chains, stored.size, p.dim))
    blocks = [(lo, min(lo + _BLOCK, cfg.n_chains)) for lo in range(0, cfg.n_chains, _BLOCK)]

    if n_workers is None:
        n_workers = int(os.environ.get("PLA_THREADS", "1"))
    n_workers = max(1, n_workers)

    if n_workers == 1 or len(blocks) == 1:
        for lo, hi in blocks:
            _run_block(p, cfg, algorithm, lo, hi, x_star, stored, pos, out)
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            futures = [
                pool.submit(_run_block, p, cfg, algorithm, lo, hi, x_star, stored, pos, out)
                for lo, hi in blocks
            ]
            for f in futures:
                f.result()

    keys = np.empty((cfg.n_chains, 2), dtype=np.uint64)
    keys[:, 0] = np.uint64(cfg.seed & _MASK64)
    keys[:, 1] = np.arange(cfg.n_chains, dtype=np.uint64)
    return Trace(
        iterates=out,
        stored_steps=stored,
        stream_keys=keys,
        config=cfg,
        algorithm=algorithm,
    )
