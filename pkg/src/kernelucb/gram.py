"""Online inverse of the regularised kernel matrix and the dual ridge estimators.

The inverse ``(K_t + gamma I)^-1`` is kept in BLAS upper-packed column-major
storage. Appending an observation adds one column, which lands at the end of
the packed buffer, so the live matrix is always a contiguous prefix and the
symmetric BLAS routines (``dspmv``, ``dspr``) run on it in place.
"""
from __future__ import annotations

import json

import numpy as np
from scipy.linalg.blas import dspmv, dspr
from scipy.linalg.lapack import dpotrf, dpotri

from .kernels import KernelError, KernelSpec, as_context, as_contexts, diagonal, pairwise

DEFAULT_RECOMPUTE_EVERY = 512
PIVOT_TOL = 1e-12


class NumericalBreakdown(ArithmeticError):
    """Schur pivot collapsed and a dense rebuild could not recover."""

    def __init__(self, message, round_index=None):
        super().__init__(message)
        self.round_index = round_index


def _packed_len(n: int) -> int:
    return n * (n + 1) // 2


def pack_upper(M: np.ndarray) -> np.ndarray:
    """Symmetric ``M`` -> upper-packed column-major vector."""
    # row-major lower == column-major upper for a symmetric matrix
    return M[np.tril_indices(M.shape[0])]


def unpack_upper(ap: np.ndarray, n: int) -> np.ndarray:
    M = np.zeros((n, n))
    M[np.tril_indices(n)] = ap[: _packed_len(n)]
    return M + np.tril(M, -1).T


class GramState:
    """Observed contexts, their rewards and ``(K_t + gamma I)^-1``.

    Mutated in place by :meth:`push`; one owner should write to it at a time.
    Dual coefficients ``alpha = inv @ y`` are recomputed on demand.
    """

    def __init__(self, gamma: float, kernel: KernelSpec | None = None,
                 recompute_every: int = DEFAULT_RECOMPUTE_EVERY):
        gamma = float(gamma)
        if not np.isfinite(gamma) or gamma <= 0:
            raise ValueError(f"gamma must be finite and > 0, got {gamma}")
        if int(recompute_every) < 1:
            raise ValueError("recompute_every must be a positive integer")
        self.gamma = gamma
        self.kernel = kernel if kernel is not None else KernelSpec()
        self.recompute_every = int(recompute_every)
        self.steps_since_recompute = 0
        self._n = 0
        self._hist = None
        self._y = np.zeros(0)
        self._ap = np.zeros(0)

    def __len__(self):
        return self._n

    @property
    def history(self) -> np.ndarray:
        if self._hist is None:
            return np.zeros(0, dtype=np.intp) if self.kernel.id_mode else np.zeros((0, 0))
        return self._hist[: self._n]

    @property
    def rewards(self) -> np.ndarray:
        return self._y[: self._n]

    @property
    def inv(self) -> np.ndarray:
        """Dense copy of ``(K_t + gamma I)^-1``."""
        return unpack_upper(self._ap, self._n)

    def alpha(self) -> np.ndarray:
        """Dual coefficients ``(K_t + gamma I)^-1 y_t``."""
        return self._matvec(self.rewards)

    def _matvec(self, v: np.ndarray) -> np.ndarray:
        n = self._n
        if n == 0:
            return np.zeros(0)
        return dspmv(n, 1.0, self._ap[: _packed_len(n)], v)

    def _reserve(self, size: int, dim: int) -> None:
        """Grow the buffers (doubling) so they hold at least ``size`` observations."""
        cap = self._y.shape[0]
        if size <= cap and self._hist is not None:
            return
        new_cap = max(16, size, 2 * cap)
        n = self._n
        y = np.zeros(new_cap)
        y[:n] = self._y[:n]
        if self.kernel.id_mode:
            hist = np.zeros(new_cap, dtype=np.intp)
        else:
            hist = np.zeros((new_cap, dim))
        if n:
            hist[:n] = self._hist[:n]
        ap = np.zeros(_packed_len(new_cap))
        ap[: _packed_len(n)] = self._ap[: _packed_len(n)]
        self._y, self._hist, self._ap = y, hist, ap

    def kernel_vectors(self, X) -> np.ndarray:
        """Rows are ``k_{x,t}`` for each validated context in ``X``; shape ``(m, n)``."""
        if self._n == 0:
            return np.zeros((len(X), 0))
        if not self.kernel.id_mode and X.shape[1] != self._hist.shape[1]:
            raise KernelError(f"dimension mismatch: {X.shape[1]} vs {self._hist.shape[1]}")
        return pairwise(self.kernel, X, self.history)

    def estimates(self, X):
        """Batch dual estimates for a set of contexts.

        Returns ``(mu, sigma, kvecs, inv_kvecs)`` where ``sigma`` already
        carries the ``gamma^-1/2`` factor.
        """
        X = as_contexts(self.kernel, X)
        kxx = diagonal(self.kernel, X)
        kv = self.kernel_vectors(X)
        if self._n == 0:
            mu = np.zeros(len(X))
            quad = np.zeros(len(X))
            inv_kv = kv
        else:
            alpha = self.alpha()
            inv_kv = np.stack([self._matvec(k) for k in kv])
            mu = kv @ alpha
            quad = np.einsum("ij,ij->i", kv, inv_kv)
        sigma = np.sqrt(np.maximum(0.0, kxx - quad) / self.gamma)
        return mu, sigma, kv, inv_kv

    def predict_mean(self, x) -> float:
        x = as_context(self.kernel, x)
        return float(self.estimates(np.array([x]))[0][0])

    def width(self, x) -> float:
        x = as_context(self.kernel, x)
        return float(self.estimates(np.array([x]))[1][0])

    def push(self, x, r, *, kvec=None, inv_kvec=None) -> "GramState":
        """Append ``(x, r)`` and extend the inverse by the Schur-complement block formula.

        ``kvec``/``inv_kvec`` may pass ``k_{x,t}`` and ``inv @ k_{x,t}`` when the
        caller already computed them against this exact state.
        """
        r = float(r)
        if not np.isfinite(r):
            raise ValueError(f"reward must be finite, got {r}")
        x = as_context(self.kernel, x)
        n = self._n
        if n and not self.kernel.id_mode and x.shape[0] != self._hist.shape[1]:
            raise KernelError(f"dimension mismatch: {x.shape[0]} vs {self._hist.shape[1]}")
        X1 = np.array([x])
        c = float(diagonal(self.kernel, X1)[0]) + self.gamma
        if kvec is None or inv_kvec is None:
            b = self.kernel_vectors(X1)[0]
            v = self._matvec(b)
        else:
            b, v = np.asarray(kvec, dtype=float), np.asarray(inv_kvec, dtype=float)
        d = c - float(b @ v) if n else c

        self._reserve(n + 1, 0 if self.kernel.id_mode else x.shape[0])
        self._hist[n] = x
        self._y[n] = r
        self._n = n + 1
        self.steps_since_recompute += 1

        if d <= PIVOT_TOL * self.gamma:
            self.dense_rebuild()
            return self
        if n:
            # top-left block: inv + v v^T / d, in place on the packed prefix
            dspr(n, 1.0 / d, v, self._ap[: _packed_len(n)], overwrite_ap=1)
        start = _packed_len(n)
        self._ap[start:start + n] = -v / d
        self._ap[start + n] = 1.0 / d
        if self.steps_since_recompute >= self.recompute_every:
            self.dense_rebuild()
        return self

    def dense_rebuild(self) -> "GramState":
        """Replace the inverse with a dense Cholesky solve of ``K_t + gamma I``."""
        n = self._n
        self.steps_since_recompute = 0
        if n == 0:
            return self
        H = self.history
        K = pairwise(self.kernel, H, H)
        K = np.triu(K) + np.triu(K, 1).T
        K[np.diag_indices(n)] += self.gamma
        chol, info = dpotrf(K, lower=0, clean=0)
        if info == 0:
            inv, info = dpotri(chol, lower=0)
        if info != 0:
            raise NumericalBreakdown(f"dense factorisation of K + gamma I failed at size {n} (info={info})")
        # dpotri fills the upper triangle only; packing reads it through the transpose
        self._ap[: _packed_len(n)] = inv.T[np.tril_indices(n)]
        return self

    @classmethod
    def from_data(cls, gamma, kernel, X, y, recompute_every=DEFAULT_RECOMPUTE_EVERY) -> "GramState":
        """Batch-load observations with a single dense solve."""
        state = cls(gamma, kernel, recompute_every)
        X = as_contexts(kernel, X)
        y = np.asarray(y, dtype=float)
        if len(X) != len(y):
            raise ValueError(f"{len(X)} contexts but {len(y)} rewards")
        if not np.all(np.isfinite(y)):
            raise ValueError("rewards must be finite")
        n = len(X)
        if n == 0:
            return state
        state._reserve(n, 0 if kernel.id_mode else X.shape[1])
        state._hist[:n] = X
        state._y[:n] = y
        state._n = n
        return state.dense_rebuild()

    # checkpointing: the inverse is never serialised, it is rebuilt on load
    def to_dict(self) -> dict:
        return checkpoint_dict(self.gamma, self.kernel, self.history, self.rewards, self.recompute_every)

    @classmethod
    def from_dict(cls, d: dict) -> "GramState":
        kernel = KernelSpec.from_dict(d["kernel"])
        H = d["history"]
        if kernel.id_mode:
            X = np.asarray(H, dtype=np.intp)
        else:
            X = np.asarray(H, dtype=float).reshape(len(H), -1) if len(H) else np.zeros((0, 0))
        return cls.from_data(d["gamma"], kernel, X, d["rewards"], d.get("recompute_every", DEFAULT_RECOMPUTE_EVERY))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path) -> "GramState":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def checkpoint_dict(gamma, kernel: KernelSpec, X, y, recompute_every=DEFAULT_RECOMPUTE_EVERY) -> dict:
    """JSON-ready checkpoint of observations; :meth:`GramState.from_dict` rebuilds the inverse."""
    return {
        "gamma": float(gamma),
        "kernel": kernel.to_dict(),
        "recompute_every": int(recompute_every),
        "history": np.asarray(X).tolist(),
        "rewards": np.asarray(y, dtype=float).tolist(),
    }


def new(gamma: float, kernel: KernelSpec | None = None,
        recompute_every: int = DEFAULT_RECOMPUTE_EVERY) -> GramState:
    return GramState(gamma, kernel, recompute_every)


def predict_mean(state: GramState, x) -> float:
    """``k_{x,t}^T (K_t + gamma I)^-1 y_t``; zero for an empty state."""
    return state.predict_mean(x)


def width(state: GramState, x) -> float:
    """``gamma^-1/2 sqrt(k(x,x) - k_{x,t}^T (K_t + gamma I)^-1 k_{x,t})``, clamped at zero."""
    return state.width(x)


def push(state: GramState, x, r) -> GramState:
    return state.push(x, r)


def dense_rebuild(state: GramState) -> GramState:
    return state.dense_rebuild()
