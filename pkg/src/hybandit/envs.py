"""Synthetic hybrid-reward environments and hybrid least-squares fitting.

An environment is a pure function of its seed: the reward parameters and the
whole context sequence are regenerated on demand from addressable random
streams, so trials of the same environment share contexts exactly while
drawing independent reward noise, and nothing needs to be stored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .linalg import BlockDesign, SparseHybridVector
from .model import ContextRound, HybridParams
from .rng import stream


def sample_unit_ball(rng: np.random.Generator, dim: int, n: int | None = None) -> np.ndarray:
    """Uniform draw(s) from the closed unit ball in ``dim`` dimensions.

    Gaussian direction scaled by a U^(1/dim) radius.  Returns shape (dim,)
    when ``n`` is None, else (n, dim).
    """
    if dim < 1:
        raise ValueError(f"dimension must be positive, got {dim}")
    count = 1 if n is None else int(n)
    g = rng.standard_normal((count, dim))
    norms = np.linalg.norm(g, axis=1, keepdims=True)
    np.maximum(norms, np.finfo(float).tiny, out=norms)
    radii = rng.random((count, 1)) ** (1.0 / dim)
    out = g / norms * radii
    return out[0] if n is None else out


@dataclass(frozen=True)
class SyntheticEnvConfig:
    """Shape, noise and seed of one synthetic environment."""

    d1: int
    d2: int
    n_arms: int
    T: int
    noise_std: float = 0.1
    S: float = 1.0
    env_seed: int = 0
    n_trials: int = 1

    def __post_init__(self):
        if min(self.d1, self.d2, self.n_arms, self.T, self.n_trials) < 1:
            raise ValueError("d1, d2, n_arms, T and n_trials must be positive")
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be nonnegative, got {self.noise_std}")
        if self.S <= 0:
            raise ValueError(f"S must be positive, got {self.S}")


class SyntheticContextStream:
    """Lazy context sequence: round t is regenerated from (env_seed, t)."""

    def __init__(self, cfg: SyntheticEnvConfig):
        self.cfg = cfg

    @property
    def T(self) -> int:
        return self.cfg.T

    def round(self, t: int) -> ContextRound:
        if not 0 <= t < self.cfg.T:
            raise IndexError(f"round {t} outside horizon {self.cfg.T}")
        rng = stream(self.cfg.env_seed, 0, t, "context")
        xs = sample_unit_ball(rng, self.cfg.d1, self.cfg.n_arms)
        zs = sample_unit_ball(rng, self.cfg.d2, self.cfg.n_arms)
        return ContextRound(xs, zs)

    def __iter__(self):
        return (self.round(t) for t in range(self.cfg.T))


def generate_environment(cfg: SyntheticEnvConfig) -> tuple[HybridParams, SyntheticContextStream]:
    """Draw reward parameters and expose the context stream of one environment.

    The shared parameter and the K arm parameters are uniform in balls of
    radius S; arm features come from unit balls round by round.  Everything
    is a deterministic function of ``cfg.env_seed``.
    """
    rng = stream(cfg.env_seed, 0, 0, "params")
    theta = cfg.S * sample_unit_ball(rng, cfg.d1)
    betas = cfg.S * sample_unit_ball(rng, cfg.d2, cfg.n_arms)
    return HybridParams(theta, betas, S=cfg.S), SyntheticContextStream(cfg)


def draw_reward(
    params: HybridParams,
    arm: int,
    x: np.ndarray,
    z: np.ndarray,
    noise_std: float,
    rng: np.random.Generator,
) -> float:
    """Mean reward of (arm, x, z) plus centered Gaussian noise."""
    if noise_std < 0:
        raise ValueError(f"noise_std must be nonnegative, got {noise_std}")
    mean = float(np.dot(params.theta, x) + np.dot(params.betas[arm], z))
    if noise_std == 0:
        return mean
    return mean + noise_std * float(rng.standard_normal())


def dump_environment(cfg: SyntheticEnvConfig, path) -> None:
    """Write the environment's parameters and shape to a JSON audit file."""
    params, _ = generate_environment(cfg)
    doc = {
        "d1": cfg.d1,
        "d2": cfg.d2,
        "K": cfg.n_arms,
        "T": cfg.T,
        "S": cfg.S,
        "noise_std": cfg.noise_std,
        "env_seed": cfg.env_seed,
        "theta": params.theta.tolist(),
        "betas": [b.tolist() for b in params.betas],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class LearnedModel:
    """Hybrid least-squares fit: recovered parameters plus the fit residual."""

    params: HybridParams
    fit_residual: float
    singular: bool = False


def hybrid_least_squares(
    data,
    *,
    n_arms: int | None = None,
    ridge: float = 1e-6,
    allow_unregularized: bool = False,
) -> LearnedModel:
    """Penalized least-squares fit of the hybrid reward model.

    ``data`` is a sequence of ``(arm, x, z, y)`` observations.  The normal
    equations are solved in the same block form the policies use, with
    ``ridge * I`` added so arms that were never (or rarely) shown still get a
    unique, zero-shrunk solution.  ``ridge=0`` needs ``allow_unregularized``
    and falls back to a dense minimum-norm solve; rank deficiency is then
    reported through ``singular``.
    """
    data = list(data)
    if not data:
        raise ValueError("data must be nonempty")
    if ridge < 0:
        raise ValueError(f"ridge must be nonnegative, got {ridge}")
    d1 = len(np.asarray(data[0][1], dtype=float))
    d2 = len(np.asarray(data[0][2], dtype=float))
    max_arm = max(int(item[0]) for item in data)
    k = max_arm + 1 if n_arms is None else int(n_arms)
    if max_arm >= k:
        raise ValueError(f"arm index {max_arm} out of range for {k} arms")

    if ridge == 0.0:
        if not allow_unregularized:
            raise ValueError("ridge=0 requires allow_unregularized=True")
        rows = np.stack(
            [SparseHybridVector(int(i), x, z).dense(k) for i, x, z, _ in data]
        )
        ys = np.array([float(y) for *_, y in data])
        phi, _, rank, _ = np.linalg.lstsq(rows, ys, rcond=None)
        theta, betas = phi[:d1], phi[d1:].reshape(k, d2)
        rss = float(np.sum((rows @ phi - ys) ** 2))
        singular = rank < d1 + d2 * k
    else:
        design = BlockDesign(d1, d2, k, ridge)
        u_shared = np.zeros(d1)
        u_arms = np.zeros((k, d2))
        for i, x, z, y in data:
            u = SparseHybridVector(int(i), x, z)
            design.block_update(u)
            u_shared += float(y) * u.x
            u_arms[u.arm] += float(y) * u.z
        theta, betas = design.solve_blocks(u_shared, u_arms)
        rss = 0.0
        for i, x, z, y in data:
            pred = float(np.dot(theta, np.asarray(x, dtype=float))) + float(
                np.dot(betas[int(i)], np.asarray(z, dtype=float))
            )
            rss += (pred - float(y)) ** 2
        singular = False

    bound = max(
        1e-12,
        float(np.linalg.norm(theta)),
        float(np.max(np.linalg.norm(betas, axis=1))) if k else 0.0,
    )
    params = HybridParams(theta, betas, S=bound)
    return LearnedModel(params, rss, singular)
