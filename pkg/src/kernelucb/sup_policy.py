"""SupKernelUCB: layered KernelUCB with arm elimination.

Each level keeps its own :class:`GramState` built only from the rounds it
was assigned. A round is assigned to at most one level and the assignment
reads rewards from lower levels only, so every level sees rewards that are
independent given their contexts.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from ._validation import check_reward
from .gram import GramState
from .kernels import as_context, as_contexts
from .policy import KernelUCB, PolicyConfig, select

EXPLORE = "explore"      # a wide arm was played; the round joins that level
EXPLOIT = "exploit"      # every width below 1/sqrt(T); the round joins no level
OVERFLOW = "overflow"    # ran out of levels while eliminating; exploit among survivors


def n_levels(horizon: int) -> int:
    """``S = ceil(ln T)``, at least one level."""
    return max(1, math.ceil(math.log(horizon)))


@dataclass
class LevelSets:
    horizon: int
    config: PolicyConfig
    S: int = 0
    psi: List[List[int]] = field(default_factory=list)
    states: List[GramState] = field(default_factory=list)
    psi0_count: int = 0

    def __post_init__(self):
        if self.horizon < 2:
            raise ValueError(f"horizon must be >= 2, got {self.horizon}")
        if not self.S:
            self.S = n_levels(self.horizon)
        if not self.states:
            self.psi = [[] for _ in range(self.S)]
            self.states = [self.config.new_state() for _ in range(self.S)]

    @property
    def rounds(self) -> int:
        return sum(len(p) for p in self.psi) + self.psi0_count

    def check_partition(self) -> None:
        """Raise ``AssertionError`` unless the level sets are disjoint and aligned with their states."""
        seen = set()
        for s, (idx, st) in enumerate(zip(self.psi, self.states), start=1):
            assert len(idx) == len(st), f"level {s}: {len(idx)} indices but {len(st)} observations"
            dup = seen.intersection(idx)
            assert not dup, f"rounds {sorted(dup)} appear in more than one level"
            seen.update(idx)


@dataclass
class LevelDecision:
    t: int
    arm: int
    branch: str
    level: int
    n_survivors: int
    survivors: List[np.ndarray] = field(default_factory=list, repr=False)
    # played context and its k-vector at the level, reused when the round is committed
    cache: Optional[tuple] = field(default=None, repr=False)


def base_estimates(level_state: GramState, config: PolicyConfig, contexts):
    """``(mu, sigma)`` for every context using only the data of one level."""
    mu, sigma, _, _ = level_state.estimates(contexts)
    return mu, sigma


def step(levels: LevelSets, config: PolicyConfig, contexts, t: int,
         rng: Optional[np.random.Generator] = None) -> Tuple[int, LevelDecision]:
    """Pick the arm for round ``t``; see :func:`commit` for the bookkeeping."""
    if not 1 <= t <= levels.horizon:
        raise ValueError(f"round {t} outside 1..{levels.horizon}")
    X = as_contexts(config.kernel, contexts)
    if len(X) == 0:
        raise ValueError("need at least one arm")
    eta = config.eta.resolve()
    exploit_tol = 1.0 / math.sqrt(levels.horizon)
    survivors = np.arange(len(X))
    visited = []
    s = 1
    while True:
        visited.append(survivors)
        mu, sigma, kv, inv_kv = levels.states[s - 1].estimates(X[survivors])
        w = eta * sigma
        ucb = mu + w
        if np.all(w <= exploit_tol):
            branch = EXPLOIT
        elif np.all(w <= 2.0 ** -s):
            if s < levels.S:
                survivors = survivors[ucb >= ucb.max() - 2.0 ** (1 - s)]
                s += 1
                continue
            branch = OVERFLOW
        else:
            wide = np.flatnonzero(w > 2.0 ** -s)
            pick = wide[np.argmax(sigma[wide])]
            arm = int(survivors[pick])
            return arm, LevelDecision(t, arm, EXPLORE, s, len(survivors), visited,
                                      (X[arm], kv[pick], inv_kv[pick]))
        pick = select(ucb, config.tie_break, rng)
        arm = int(survivors[pick])
        return arm, LevelDecision(t, arm, branch, s, len(survivors), visited)


def commit(levels: LevelSets, decision: LevelDecision, chosen_context, reward) -> LevelSets:
    """Record round ``decision.t``: an explore round joins its level, others join no level."""
    reward = check_reward(reward)
    if decision.branch == EXPLORE:
        s = decision.level
        state = levels.states[s - 1]
        x = as_context(state.kernel, chosen_context)
        if decision.cache is not None and np.array_equal(decision.cache[0], x):
            state.push(x, reward, kvec=decision.cache[1], inv_kvec=decision.cache[2])
        else:
            state.push(x, reward)
        levels.psi[s - 1].append(decision.t)
    else:
        levels.psi0_count += 1
    return levels


class SupKernelUCB(KernelUCB):
    """SupKernelUCB bandit; ``horizon`` is required since it fixes the level count.

    Accepts the same parameters as :class:`KernelUCB`.
    """

    def _init(self):
        if self.horizon is None:
            raise ValueError("SupKernelUCB needs the horizon")
        self.config_ = self._config()
        self.levels_ = LevelSets(int(self.horizon), self.config_)
        self.t_ = 0
        self._rng = np.random.default_rng(self.random_state)
        self._pending = None

    def fit(self, X, y):
        raise NotImplementedError("SupKernelUCB assigns rounds to levels online; use select_arm/update")

    def partial_fit(self, X, y):
        raise NotImplementedError("SupKernelUCB assigns rounds to levels online; use select_arm/update")

    def predict(self, X):
        """Mean estimate from the first level."""
        if not hasattr(self, "levels_"):
            self._init()
        return self.levels_.states[0].estimates(X)[0]

    def select_arm(self, contexts, t=None) -> int:
        if not hasattr(self, "levels_"):
            self._init()
        t = self.t_ + 1 if t is None else t
        arm, self.last_decision_ = step(self.levels_, self.config_, contexts, t, self._rng)
        return arm

    def update(self, context, reward):
        decision = getattr(self, "last_decision_", None)
        if decision is None:
            raise RuntimeError("update() must follow select_arm() for SupKernelUCB")
        commit(self.levels_, decision, context, reward)
        self.last_decision_ = None
        self.t_ += 1
        return self

