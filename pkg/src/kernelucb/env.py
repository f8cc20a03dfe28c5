"""Synthetic contextual bandit environments with known expected rewards.

Raw reward functions (linear or a finite kernel expansion) are mapped into
``[0, 1]`` by an affine map fixed at construction from 10^4 sampled
contexts, so the reward function never changes during a run.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .kernels import KernelSpec, as_contexts, pairwise

CALIBRATION_SAMPLES = 10_000
NOISE_KINDS = ("bernoulli", "gaussian", "none")


class Round(NamedTuple):
    contexts: np.ndarray
    expected: np.ndarray
    best: int


@dataclass(frozen=True)
class NoiseModel:
    """``bernoulli``: reward in {0, 1} with the expected reward as mean;
    ``gaussian``: mean plus N(0, sd^2), clipped to [0, 1]; ``none``: the mean itself."""

    kind: str = "bernoulli"
    sd: float = 0.1

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"noise must be one of {NOISE_KINDS}, got {self.kind!r}")
        if self.sd < 0:
            raise ValueError("noise sd must be >= 0")

    def sample(self, rng: np.random.Generator, mean: float) -> float:
        if self.kind == "bernoulli":
            return float(rng.random() < mean)
        if self.kind == "gaussian":
            return float(np.clip(mean + self.sd * rng.standard_normal(), 0.0, 1.0))
        return float(mean)


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def unit_sphere(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    z = rng.standard_normal((n, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def unit_ball_box(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    """Uniform on ``[-1, 1]^d`` shrunk by ``sqrt(d)`` so every point lies in the unit ball."""
    return rng.uniform(-1.0, 1.0, (n, d)) / math.sqrt(d)


class Environment:
    """Base class. Subclasses provide ``sample_contexts`` and ``raw_reward``."""

    noise: NoiseModel
    scale = 1.0
    offset = 0.0

    def _calibrate(self, rng) -> None:
        raw = self.raw_reward(self.sample_contexts(rng, CALIBRATION_SAMPLES))
        lo, hi = float(raw.min()), float(raw.max())
        if hi - lo <= 1e-12:
            self.scale, self.offset = 0.0, 0.5
        else:
            self.scale, self.offset = 1.0 / (hi - lo), -lo / (hi - lo)

    def expected_reward(self, contexts) -> np.ndarray:
        return np.clip(self.scale * self.raw_reward(contexts) + self.offset, 0.0, 1.0)

    def draw_round(self, rng, n_arms: int, t: Optional[int] = None) -> Round:
        if n_arms < 2:
            raise ValueError(f"need at least 2 arms, got {n_arms}")
        X = self.sample_contexts(_rng(rng), n_arms)
        mu = self.expected_reward(X)
        return Round(X, mu, int(np.argmax(mu)))

    def sample_reward(self, rng, arm: int, rnd: Round) -> float:
        if not 0 <= arm < len(rnd.expected):
            raise IndexError(f"arm {arm} out of range")
        return self.noise.sample(_rng(rng), float(rnd.expected[arm]))


class LinearEnv(Environment):
    """Expected reward affine in ``x . theta``; contexts uniform on the unit sphere."""

    def __init__(self, theta_star, noise: NoiseModel = NoiseModel(), rng=None):
        self.theta_star = np.asarray(theta_star, dtype=float)
        if self.theta_star.ndim != 1:
            raise ValueError("theta_star must be a vector")
        self.dim = self.theta_star.shape[0]
        self.noise = noise
        self._calibrate(_rng(rng))

    @classmethod
    def random(cls, dim: int, theta_norm: float = 1.0, noise: NoiseModel = NoiseModel(), rng=None):
        rng = _rng(rng)
        theta = theta_norm * unit_sphere(rng, 1, dim)[0]
        return cls(theta, noise, rng)

    def sample_contexts(self, rng, n):
        return unit_sphere(rng, n, self.dim)

    def raw_reward(self, contexts):
        return np.asarray(contexts, dtype=float) @ self.theta_star

    @property
    def theta_norm(self) -> float:
        """Norm of the calibrated linear part."""
        return float(self.scale * np.linalg.norm(self.theta_star))


class RkhsEnv(Environment):
    """Expected reward affine in ``f(x) = sum_i alpha_i k(x, anchor_i)``."""

    def __init__(self, anchors, alphas, kernel: KernelSpec, noise: NoiseModel = NoiseModel(),
                 rng=None, dim: Optional[int] = None):
        self.kernel = kernel
        self.anchors = as_contexts(kernel, anchors)
        self.alphas = np.asarray(alphas, dtype=float)
        if len(self.alphas) != len(self.anchors):
            raise ValueError("one alpha per anchor")
        self.dim = None if kernel.id_mode else (dim or self.anchors.shape[1])
        self.noise = noise
        self._calibrate(_rng(rng))

    @classmethod
    def random(cls, kernel: KernelSpec, n_anchors: int, dim: int = 2,
               noise: NoiseModel = NoiseModel(), rng=None):
        rng = _rng(rng)
        if kernel.id_mode:
            anchors = rng.integers(0, kernel.n_items, n_anchors)
        else:
            anchors = unit_ball_box(rng, n_anchors, dim)
        alphas = rng.standard_normal(n_anchors)
        return cls(anchors, alphas, kernel, noise, rng, dim)

    def sample_contexts(self, rng, n):
        if self.kernel.id_mode:
            return rng.integers(0, self.kernel.n_items, n)
        return unit_ball_box(rng, n, self.dim)

    def raw_reward(self, contexts):
        X = as_contexts(self.kernel, contexts)
        return pairwise(self.kernel, X, self.anchors) @ self.alphas

    @property
    def raw_norm(self) -> float:
        """``sqrt(alpha^T K_anchor alpha)`` of the raw expansion."""
        K = pairwise(self.kernel, self.anchors, self.anchors)
        return float(np.sqrt(max(0.0, self.alphas @ K @ self.alphas)))

    @property
    def theta_norm(self) -> float:
        """RKHS norm of the calibrated expansion (the constant offset excluded)."""
        return self.scale * self.raw_norm


class ScriptedEnv(Environment):
    """Replays a fixed table: round ``t`` uses row ``(t - 1) mod rows``."""

    def __init__(self, contexts, expected, noise: NoiseModel = NoiseModel("none")):
        self.contexts = np.asarray(contexts)
        self.expected = np.asarray(expected, dtype=float)
        if self.expected.ndim != 2 or self.contexts.shape[:2] != self.expected.shape:
            raise ValueError("contexts must be (rounds, arms, ...) matching expected (rounds, arms)")
        if np.any(self.expected < 0) or np.any(self.expected > 1):
            raise ValueError("scripted expected rewards must lie in [0, 1]")
        self.noise = noise

    def draw_round(self, rng, n_arms: int, t: Optional[int] = None) -> Round:
        row = 0 if t is None else (t - 1) % len(self.expected)
        mu = self.expected[row]
        if n_arms != len(mu):
            raise ValueError(f"script has {len(mu)} arms, asked for {n_arms}")
        return Round(self.contexts[row], mu.copy(), int(np.argmax(mu)))

    @classmethod
    def from_csv(cls, path, noise: NoiseModel = NoiseModel("none")) -> "ScriptedEnv":
        """First line ``N,d``; each further row holds N context blocks of d values then N expected rewards.

        ``d = 0`` means each context is a single integer id.
        """
        with open(path, encoding="utf-8") as fh:
            n_arms, d = (int(v) for v in fh.readline().strip().split(","))
            table = np.loadtxt(fh, delimiter=",", ndmin=2)
        width = n_arms * max(d, 1)
        if table.shape[1] != width + n_arms:
            raise ValueError(f"{path}: expected {width + n_arms} columns, got {table.shape[1]}")
        if d == 0:
            ctx = table[:, :n_arms].astype(np.intp)
        else:
            ctx = table[:, :width].reshape(len(table), n_arms, d)
        return cls(ctx, table[:, width:], noise)

    def to_csv(self, path) -> None:
        rows, n_arms = self.expected.shape
        d = 0 if self.contexts.ndim == 2 else self.contexts.shape[2]
        flat = self.contexts.reshape(rows, -1).astype(float)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"{n_arms},{d}\n")
            for c, e in zip(flat, self.expected):
                cells = [str(int(v)) for v in c] if d == 0 else [repr(float(v)) for v in c]
                fh.write(",".join(cells + [repr(float(v)) for v in e]) + "\n")
