"""Kernel functions and Gram vectors/matrices.

Contexts come in two flavours. Analytic kernels (linear, RBF, polynomial)
work on real feature vectors; a precomputed kernel works on integer ids that
index a fixed similarity matrix. Batches of contexts are 2-D float arrays of
shape ``(n, d)`` in feature mode and 1-D integer arrays in id mode.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

KINDS = ("linear", "rbf", "polynomial", "precomputed")


class KernelError(ValueError):
    """Context incompatible with a kernel (dimension, id range or mode)."""


@dataclass(frozen=True)
class KernelSpec:
    """Which kernel defines the RKHS.

    ``bandwidth`` is the RBF ``sigma`` in ``exp(-|x - x'|^2 / (2 sigma^2))``.
    The polynomial kernel is ``(x.x' + 1) ** degree``.
    """

    kind: str = "rbf"
    bandwidth: float = 1.0
    degree: int = 2
    similarity: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "rbf" and not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ValueError(f"RBF bandwidth must be > 0, got {self.bandwidth}")
        if self.kind == "polynomial":
            if int(self.degree) != self.degree or self.degree < 1:
                raise ValueError(f"polynomial degree must be a positive integer, got {self.degree}")
        if self.kind == "precomputed":
            if self.similarity is None:
                raise ValueError("precomputed kernel requires a similarity matrix")
            S = np.array(self.similarity, dtype=float)
            validate_similarity(S)
            S.setflags(write=False)
            object.__setattr__(self, "similarity", S)

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls("linear")

    @classmethod
    def rbf(cls, bandwidth: float = 1.0) -> "KernelSpec":
        return cls("rbf", bandwidth=bandwidth)

    @classmethod
    def polynomial(cls, degree: int = 2) -> "KernelSpec":
        return cls("polynomial", degree=degree)

    @classmethod
    def precomputed(cls, similarity) -> "KernelSpec":
        return cls("precomputed", similarity=similarity)

    @property
    def id_mode(self) -> bool:
        return self.kind == "precomputed"

    @property
    def n_items(self) -> Optional[int]:
        return None if self.similarity is None else self.similarity.shape[0]

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.kind == "rbf":
            d["bandwidth"] = float(self.bandwidth)
        elif self.kind == "polynomial":
            d["degree"] = int(self.degree)
        elif self.kind == "precomputed":
            d["similarity"] = self.similarity.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(
            d["kind"],
            bandwidth=d.get("bandwidth", 1.0),
            degree=d.get("degree", 2),
            similarity=None if d.get("similarity") is None else np.asarray(d["similarity"], dtype=float),
        )


def validate_similarity(S: np.ndarray) -> None:
    """Fail fast unless ``S`` is square, finite, symmetric and PSD within tolerance."""
    if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] == 0:
        raise ValueError(f"similarity matrix must be square and non-empty, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise ValueError("similarity matrix has non-finite entries")
    scale = np.abs(S).max()
    if np.abs(S - S.T).max() > 1e-9 * max(scale, np.finfo(float).tiny):
        raise ValueError("similarity matrix is not symmetric")
    norm_inf = np.abs(S).sum(axis=1).max()
    lam_min = np.linalg.eigvalsh(0.5 * (S + S.T))[0]
    if lam_min < -1e-8 * norm_inf:
        raise ValueError(f"similarity matrix is not PSD: smallest eigenvalue {lam_min:.3e}")


def load_similarity_csv(path) -> np.ndarray:
    """Read ``M`` on the first line, then ``M`` rows of ``M`` comma-separated values."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        try:
            m = int(header)
        except ValueError:
            raise ValueError(f"{path}: first line must be the matrix size, got {header!r}") from None
        S = np.loadtxt(fh, delimiter=",", ndmin=2)
    if S.shape != (m, m):
        raise ValueError(f"{path}: expected {m}x{m} values, got shape {S.shape}")
    validate_similarity(S)
    return S


def save_similarity_csv(path, S: np.ndarray) -> None:
    S = np.asarray(S, dtype=float)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{S.shape[0]}\n")
        for row in S:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def as_context(spec: KernelSpec, x):
    """Validate a single context: a 1-D float vector, or an int id for precomputed kernels."""
    if spec.id_mode:
        arr = np.asarray(x)
        if arr.ndim != 0 or not np.issubdtype(arr.dtype, np.integer):
            raise KernelError(f"precomputed kernel expects an integer id, got {x!r}")
        i = int(arr)
        if not 0 <= i < spec.n_items:
            raise KernelError(f"id {i} out of range for a {spec.n_items}x{spec.n_items} similarity")
        return i
    arr = np.asarray(x, dtype=float) if not _is_int_scalar(x) else None
    if arr is None or arr.ndim != 1:
        raise KernelError(f"{spec.kind} kernel expects a 1-D feature vector, got {x!r}")
    if not np.all(np.isfinite(arr)):
        raise KernelError("context has non-finite entries")
    return arr


def as_contexts(spec: KernelSpec, X) -> np.ndarray:
    """Validate a batch: ``(n, d)`` floats in feature mode, ``(n,)`` ints in id mode."""
    if spec.id_mode:
        ids = np.asarray(X)
        if ids.ndim == 2 and ids.shape[1] == 1:
            ids = ids[:, 0]
        if ids.ndim != 1 or (ids.size and not np.issubdtype(ids.dtype, np.integer)):
            raise KernelError("precomputed kernel expects a 1-D array of integer ids")
        ids = ids.astype(np.intp)
        if ids.size and (ids.min() < 0 or ids.max() >= spec.n_items):
            raise KernelError(f"id out of range for a {spec.n_items}x{spec.n_items} similarity")
        return ids
    A = np.asarray(X, dtype=float)
    if A.ndim != 2:
        raise KernelError(f"{spec.kind} kernel expects a 2-D (n, d) array of contexts, got ndim={A.ndim}")
    if not np.all(np.isfinite(A)):
        raise KernelError("contexts have non-finite entries")
    return A


def _is_int_scalar(x) -> bool:
    return isinstance(x, (int, np.integer)) and not isinstance(x, bool)


def _from_dot(spec: KernelSpec, dot):
    if spec.kind == "linear":
        return dot
    return (dot + 1.0) ** int(spec.degree)


def evaluate(spec: KernelSpec, x, x2) -> float:
    """``k(x, x2)``. Symmetric in its arguments by construction."""
    x = as_context(spec, x)
    x2 = as_context(spec, x2)
    if spec.id_mode:
        return float(spec.similarity[x, x2])
    if x.shape != x2.shape:
        raise KernelError(f"dimension mismatch: {x.shape[0]} vs {x2.shape[0]}")
    if spec.kind == "rbf":
        diff = x - x2
        return float(np.exp(-np.dot(diff, diff) / (2.0 * spec.bandwidth**2)))
    return float(_from_dot(spec, np.dot(x, x2)))


def pairwise(spec: KernelSpec, A, B) -> np.ndarray:
    """Kernel matrix between two batches of already-validated contexts."""
    if spec.id_mode:
        return spec.similarity[np.ix_(A, B)]
    if A.shape[1] != B.shape[1]:
        raise KernelError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    if spec.kind == "rbf":
        # cdist sums (a - b)^2 directly, so self-distances are exactly zero
        return np.exp(-cdist(A, B, "sqeuclidean") / (2.0 * spec.bandwidth**2))
    return _from_dot(spec, A @ B.T)


def diagonal(spec: KernelSpec, A) -> np.ndarray:
    """``k(x, x)`` for each row of a validated batch."""
    if spec.id_mode:
        return spec.similarity[A, A].copy()
    if spec.kind == "rbf":
        return np.ones(A.shape[0])
    return _from_dot(spec, np.einsum("ij,ij->i", A, A))


def gram_vector(spec: KernelSpec, x, history) -> np.ndarray:
    """``[k(x, h) for h in history]``; empty history gives an empty vector."""
    x = as_context(spec, x)
    H = as_contexts(spec, history) if len(history) else None
    if H is None:
        return np.zeros(0)
    Xq = np.array([x]) if spec.id_mode else x[None, :]
    return pairwise(spec, Xq, H)[0]


def gram_matrix(spec: KernelSpec, contexts) -> np.ndarray:
    """Exactly symmetric Gram matrix (upper triangle mirrored)."""
    if len(contexts) == 0:
        return np.zeros((0, 0))
    A = as_contexts(spec, contexts)
    K = pairwise(spec, A, A)
    upper = np.triu(K)
    return upper + np.triu(K, 1).T
