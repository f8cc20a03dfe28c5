"""KernelUCB: score every arm by its upper confidence bound, play the argmax."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional, Union

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_gamma, check_reward, check_rewards, make_kernel
from .gram import DEFAULT_RECOMPUTE_EVERY, GramState
from .kernels import KernelSpec, as_context, as_contexts

TIE_TOL = 1e-12


@dataclass(frozen=True)
class ConstantEta:
    value: float = 1.0

    def __post_init__(self):
        if not (np.isfinite(self.value) and self.value > 0):
            raise ValueError(f"constant eta must be > 0, got {self.value}")

    def resolve(self) -> float:
        return float(self.value)


@dataclass(frozen=True)
class TheoryEta:
    """``eta = sqrt(2 ln(2 T N / delta))``, fixed for a known horizon and arm count."""

    delta: float
    horizon: int
    n_arms: int

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.horizon < 1 or self.n_arms < 1:
            raise ValueError("theory eta needs a positive horizon and arm count")

    def resolve(self) -> float:
        return math.sqrt(2.0 * math.log(2.0 * self.horizon * self.n_arms / self.delta))


@dataclass(frozen=True)
class PolicyConfig:
    gamma: float = 1.0
    eta: Union[ConstantEta, TheoryEta] = field(default_factory=ConstantEta)
    kernel: KernelSpec = field(default_factory=KernelSpec)
    recompute_every: int = DEFAULT_RECOMPUTE_EVERY
    tie_break: str = "lowest"
    seed: Optional[int] = None

    def __post_init__(self):
        check_gamma(self.gamma)
        if self.tie_break not in ("lowest", "random"):
            raise ValueError(f"tie_break must be 'lowest' or 'random', got {self.tie_break!r}")
        if int(self.recompute_every) < 1:
            raise ValueError("recompute_every must be a positive integer")

    def new_state(self) -> GramState:
        return GramState(self.gamma, self.kernel, self.recompute_every)


class ArmScore(NamedTuple):
    arm: int
    mu: float
    sigma: float
    ucb: float


def score_arms(state: GramState, config: PolicyConfig, contexts, t: int = 1) -> List[ArmScore]:
    """One :class:`ArmScore` per arm; ``sigma`` includes the ``gamma^-1/2`` factor."""
    scores, _ = _score(state, config, contexts, t)
    return scores


def _score(state, config, contexts, t):
    if t < 1:
        raise ValueError(f"round index must be >= 1, got {t}")
    if len(contexts) == 0:
        raise ValueError("need at least one arm")
    eta = config.eta.resolve()
    mu, sigma, kv, inv_kv = state.estimates(contexts)
    ucb = mu + eta * sigma
    scores = [ArmScore(a, float(mu[a]), float(sigma[a]), float(ucb[a])) for a in range(len(mu))]
    return scores, (kv, inv_kv)


def select(scores, tie_break: str = "lowest", rng: Optional[np.random.Generator] = None) -> int:
    """Argmax of ``ucb``; values within ``1e-12`` of the best count as ties."""
    if len(scores) == 0:
        raise ValueError("cannot select from an empty score list")
    ucb = np.array([s.ucb if isinstance(s, ArmScore) else float(s) for s in scores])
    tied = np.flatnonzero(ucb >= ucb.max() - TIE_TOL)
    if tie_break == "random" and len(tied) > 1:
        if rng is None:
            raise ValueError("random tie-breaking needs a generator")
        return int(tied[rng.integers(len(tied))])
    return int(tied[0])


def update(state: GramState, chosen_context, reward, config: PolicyConfig | None = None) -> GramState:
    return state.push(chosen_context, check_reward(reward))


class KernelUCB(RegressorMixin, BaseEstimator):
    """Kernelised UCB contextual bandit with an online Gram-inverse.

    Parameters
    ----------
    kernel : {'linear', 'rbf', 'polynomial', 'precomputed'}
    bandwidth : float
        RBF sigma.
    degree : int
        Polynomial degree.
    similarity : array of shape (M, M), optional
        Similarity matrix for ``kernel='precomputed'``; contexts are then ids.
    gamma : float
        Ridge regulariser.
    eta : float
        Exploration weight when ``eta_mode='constant'``.
    eta_mode : {'constant', 'theory'}
        ``'theory'`` uses ``sqrt(2 ln(2 T N / delta))`` and needs
        ``horizon`` and ``n_arms``.
    delta, horizon, n_arms :
        Parameters of the theory schedule.
    recompute_every : int
        Pushes between dense rebuilds of the inverse.
    tie_break : {'lowest', 'random'}
    random_state : int or None
        Seed for random tie-breaking.

    Attributes
    ----------
    state_ : GramState
    t_ : int
        Number of rewards observed.
    """

    def __init__(self, kernel="rbf", bandwidth=1.0, degree=2, similarity=None, gamma=1.0,
                 eta=1.0, eta_mode="constant", delta=0.05, horizon=None, n_arms=None,
                 recompute_every=DEFAULT_RECOMPUTE_EVERY, tie_break="lowest", random_state=None):
        self.kernel = kernel
        self.bandwidth = bandwidth
        self.degree = degree
        self.similarity = similarity
        self.gamma = gamma
        self.eta = eta
        self.eta_mode = eta_mode
        self.delta = delta
        self.horizon = horizon
        self.n_arms = n_arms
        self.recompute_every = recompute_every
        self.tie_break = tie_break
        self.random_state = random_state

    def _config(self) -> PolicyConfig:
        if self.eta_mode == "constant":
            eta = ConstantEta(float(self.eta))
        elif self.eta_mode == "theory":
            if self.horizon is None or self.n_arms is None:
                raise ValueError("eta_mode='theory' needs horizon and n_arms")
            eta = TheoryEta(float(self.delta), int(self.horizon), int(self.n_arms))
        else:
            raise ValueError(f"eta_mode must be 'constant' or 'theory', got {self.eta_mode!r}")
        return PolicyConfig(
            gamma=float(self.gamma),
            eta=eta,
            kernel=make_kernel(self.kernel, self.bandwidth, self.degree, self.similarity),
            recompute_every=int(self.recompute_every),
            tie_break=self.tie_break,
            seed=self.random_state,
        )

    def _init(self):
        self.config_ = self._config()
        self.state_ = self.config_.new_state()
        self.t_ = 0
        self._rng = np.random.default_rng(self.random_state)
        self._pending = None

    def reset(self):
        """Forget all observations."""
        self._init()
        return self

    def fit(self, X, y):
        """Load a batch of (context, reward) pairs with one dense solve."""
        self._init()
        X = as_contexts(self.config_.kernel, X)
        y = check_rewards(y, len(X))
        self.state_ = GramState.from_data(self.config_.gamma, self.config_.kernel, X, y,
                                          self.config_.recompute_every)
        self.t_ = len(y)
        return self

    def partial_fit(self, X, y):
        """Push observations one by one through the incremental inverse."""
        if not hasattr(self, "state_"):
            self._init()
        X = as_contexts(self.config_.kernel, X)
        y = check_rewards(y, len(X))
        for x, r in zip(X, y):
            self.update(x, r)
        return self

    def predict(self, X):
        """Posterior mean ``k^T (K + gamma I)^-1 y`` for each context."""
        check_is_fitted(self, "state_")
        return self.state_.estimates(X)[0]

    def predict_width(self, X):
        check_is_fitted(self, "state_")
        return self.state_.estimates(X)[1]

    def score_arms(self, contexts, t=None) -> List[ArmScore]:
        if not hasattr(self, "state_"):
            self._init()
        t = self.t_ + 1 if t is None else t
        return _score(self.state_, self.config_, contexts, t)[0]

    def select_arm(self, contexts, t=None) -> int:
        """Score the arms for this round and return the chosen index."""
        if not hasattr(self, "state_"):
            self._init()
        contexts = as_contexts(self.config_.kernel, contexts)
        t = self.t_ + 1 if t is None else t
        scores, (kv, inv_kv) = _score(self.state_, self.config_, contexts, t)
        arm = select(scores, self.config_.tie_break, self._rng)
        self.last_scores_ = scores
        # lets update() skip recomputing k_{x,t} and inv @ k_{x,t}
        self._pending = (len(self.state_), contexts[arm], kv[arm], inv_kv[arm])
        return arm

    def update(self, context, reward):
        """Observe the reward of the played context."""
        if not hasattr(self, "state_"):
            self._init()
        reward = check_reward(reward)
        x = as_context(self.config_.kernel, context)
        pending, self._pending = self._pending, None
        if pending is not None and pending[0] == len(self.state_) and np.array_equal(pending[1], x):
            self.state_.push(x, reward, kvec=pending[2], inv_kvec=pending[3])
        else:
            self.state_.push(x, reward)
        self.t_ += 1
        return self
