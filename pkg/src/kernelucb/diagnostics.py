"""Gram-spectrum diagnostics and the primal LinUCB reference computation."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import List, Optional

import numpy as np

from .kernels import KernelSpec, gram_matrix
from .policy import select

PSD_TOL = 1e-8


def gram_spectrum(K: np.ndarray) -> np.ndarray:
    """Eigenvalues of a symmetric PSD matrix in decreasing order, round-off clamped at zero."""
    K = np.asarray(K, dtype=float)
    if K.size == 0:
        return np.zeros(0)
    lam = np.linalg.eigvalsh(0.5 * (K + K.T))[::-1]
    floor = -PSD_TOL * max(np.abs(K).sum(axis=1).max(), 1.0)
    if lam[-1] < floor:
        raise ValueError(f"matrix is not PSD: smallest eigenvalue {lam[-1]:.3e}")
    return np.maximum(lam, 0.0)


def tail_sums(eigs) -> np.ndarray:
    """``Lambda_j = sum_{i > j} lambda_i`` for ``j = 0 .. n``."""
    eigs = np.asarray(eigs, dtype=float)
    out = np.zeros(len(eigs) + 1)
    out[:-1] = np.cumsum(eigs[::-1])[::-1]
    return out


def effective_dimension(eigs, gamma: float, T: float):
    """Smallest ``j >= 1`` with ``j * gamma * ln T >= Lambda_j``; returns ``(d, tail_sums)``.

    ``eigs`` are Gram-matrix eigenvalues in decreasing order.
    """
    if T < 2:
        raise ValueError(f"horizon must be >= 2, got {T}")
    if not gamma > 0:
        raise ValueError(f"gamma must be > 0, got {gamma}")
    eigs = np.maximum(np.asarray(eigs, dtype=float), 0.0)
    if np.any(np.diff(eigs) > 0):
        raise ValueError("eigenvalues must be sorted in decreasing order")
    lam_tail = tail_sums(eigs)
    j = np.arange(1, len(lam_tail))
    ok = j * gamma * math.log(T) >= lam_tail[1:]
    d = int(j[np.argmax(ok)]) if ok.any() else 1
    return d, lam_tail


def information_gain(K, sigma2: float) -> float:
    """``ln det(I + K / sigma2)`` via the eigenvalues of ``K``."""
    if not sigma2 > 0:
        raise ValueError(f"sigma2 must be > 0, got {sigma2}")
    lam = gram_spectrum(K)
    return float(np.sum(np.log1p(lam / sigma2)))


def _log_term(T, N, delta):
    return math.log(2.0 * T * N * (1.0 + math.log(T)) / delta)


def theorem1_bound(d_eff: float, T: float, N: int, gamma: float, delta: float, theta_norm: float) -> float:
    """High-probability regret bound of SupKernelUCB evaluated numerically."""
    if T < 2:
        raise ValueError(f"horizon must be >= 2, got {T}")
    if not (gamma > 0 and 0 < delta < 1 and N >= 1 and d_eff >= 1 and theta_norm >= 0):
        raise ValueError("parameters out of range")
    L = _log_term(T, N, delta)
    l_T = max(math.log(T / (d_eff * gamma) + 1.0), math.log(T))
    first = 2.0 + 2.0 * (1.0 + math.sqrt(gamma / (2.0 * L))) * theta_norm
    second = 8.0 * math.sqrt((12.0 + 15.0 / gamma) * l_T**3) * math.sqrt(2.0 * L)
    return (first + second) * math.sqrt(d_eff * T)


def linucb_oracle(X, y, gamma: float, query, eta: float):
    """Primal ridge UCB: ``(mu, sigma, ucb)`` with ``C = X^T X + gamma I``.

    Returns ``sigma = sqrt(x^T C^-1 x)``, which coincides with the dual width.
    """
    query = np.asarray(query, dtype=float)
    d = query.shape[0]
    X = np.asarray(X, dtype=float).reshape(-1, d)
    y = np.asarray(y, dtype=float)
    C = X.T @ X + gamma * np.eye(d)
    theta = np.linalg.solve(C, X.T @ y)
    mu = float(query @ theta)
    sigma = math.sqrt(max(0.0, float(query @ np.linalg.solve(C, query))))
    return mu, sigma, mu + eta * sigma


class PrimalLinUCB:
    """LinUCB in the primal, kept as an independent reference for the linear kernel."""

    def __init__(self, gamma=1.0, eta=1.0):
        self.gamma = gamma
        self.eta = eta
        self.reset()

    def reset(self):
        self.X_ = []
        self.y_ = []
        return self

    def score(self, contexts):
        return [linucb_oracle(self.X_, self.y_, self.gamma, x, self.eta) for x in np.asarray(contexts, float)]

    def select_arm(self, contexts, t=None) -> int:
        self.last_scores_ = self.score(contexts)
        return select([s[2] for s in self.last_scores_], "lowest")

    def update(self, context, reward):
        self.X_.append(np.asarray(context, float))
        self.y_.append(float(reward))
        return self


@dataclass
class SpectrumReport:
    eigenvalues: List[float]
    gamma: float
    T: int
    tail_sums: List[float]
    effective_dim: int
    info_gain: float
    sigma2: float
    theorem1_bound: Optional[float] = None

    def to_json(self, path=None, **kw) -> str:
        text = json.dumps(asdict(self), **kw)
        if path is not None:
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_json(cls, text: str) -> "SpectrumReport":
        return cls(**json.loads(text))


def spectrum_report(K, gamma: float, T: Optional[int] = None, sigma2: Optional[float] = None,
                    n_arms: Optional[int] = None, delta: float = 0.05,
                    theta_norm: Optional[float] = None) -> SpectrumReport:
    """Bundle the spectrum, effective dimension, information gain and (optionally) the bound."""
    K = np.asarray(K, dtype=float)
    T = K.shape[0] if T is None else T
    sigma2 = gamma if sigma2 is None else sigma2
    lam = gram_spectrum(K)
    d, lam_tail = effective_dimension(lam, gamma, T)
    bound = None
    if n_arms is not None and theta_norm is not None:
        bound = theorem1_bound(d, T, n_arms, gamma, delta, theta_norm)
    return SpectrumReport(
        eigenvalues=lam.tolist(), gamma=float(gamma), T=int(T), tail_sums=lam_tail.tolist(),
        effective_dim=d, info_gain=float(np.sum(np.log1p(lam / sigma2))), sigma2=float(sigma2),
        theorem1_bound=bound,
    )


def report_from_contexts(kernel: KernelSpec, contexts, gamma: float, **kw) -> SpectrumReport:
    return spectrum_report(gram_matrix(kernel, contexts), gamma, **kw)
