"""Centralized reference policies: explore-then-commit, UCB with deferred
acceptance, the stable-matching oracle, and uniform-random play.

These run under full information (a platform sees every match and reward),
so each policy is a single state machine emitting all players' actions.
"""

from __future__ import annotations

import math

import numpy as np

from .env import Action, ConfigError, MatchOutcome
from .market import MarketInstance, gale_shapley, stable_matching_serial
from .mlss import ArmStats, confidence_bounds, update_stats


class CentralizedPolicy:
    """Shared per-player arm statistics updated from every matched reward."""

    def __init__(self, n_players: int, n_arms: int):
        self.n_players = n_players
        self.n_arms = n_arms
        self.stats = [ArmStats.zeros(n_arms) for _ in range(n_players)]

    def ingest(self, outcome: MatchOutcome | None) -> None:
        if outcome is None:
            return
        for player, arm in enumerate(outcome.matched):
            if arm is not None:
                update_stats(self.stats[player], arm, outcome.rewards[player])

    def step(self, outcome: MatchOutcome | None, round_index: int) -> tuple[Action, ...]:
        raise NotImplementedError


class ETCPolicy(CentralizedPolicy):
    """Explore every (player, arm) pair a fixed number of times, then commit.

    Exploration is conflict-free offset cycling: player i proposes arm
    (t + i) mod K, so K rounds cover each pair once and K*h rounds give
    every pair exactly h matched samples. The committed matching is
    deferred acceptance on empirical means and the true arm ranking.
    """

    def __init__(
        self,
        n_players: int,
        n_arms: int,
        arm_ranking: tuple[int, ...],
        explore_rounds_per_pair: int,
    ):
        super().__init__(n_players, n_arms)
        if explore_rounds_per_pair < 1:
            raise ConfigError("ETC needs at least one exploration round per pair")
        self.arm_ranking = arm_ranking
        self.h = explore_rounds_per_pair
        self.commit: tuple[Action, ...] | None = None

    def step(self, outcome: MatchOutcome | None, round_index: int) -> tuple[Action, ...]:
        self.ingest(outcome)
        if round_index < self.n_arms * self.h:
            return tuple((round_index + i) % self.n_arms for i in range(self.n_players))
        if self.commit is None:
            player_prefs = [
                sorted(range(self.n_arms), key=lambda k: (-self.stats[i].means[k], k))
                for i in range(self.n_players)
            ]
            arm_prefs = [list(self.arm_ranking)] * self.n_arms
            matching = gale_shapley(player_prefs, arm_prefs)
            self.commit = matching.assignment
        return self.commit


class CentralizedUCBPolicy(CentralizedPolicy):
    """Deferred acceptance on UCB-ranked preferences, re-run every round."""

    def __init__(
        self,
        n_players: int,
        n_arms: int,
        arm_ranking: tuple[int, ...],
        horizon: int,
    ):
        super().__init__(n_players, n_arms)
        self.arm_ranking = arm_ranking
        self.ln_horizon = math.log(horizon)

    def ucb_values(self, player: int) -> list[float]:
        stats = self.stats[player]
        return [
            confidence_bounds(stats.means[k], stats.counts[k], self.ln_horizon)[0]
            for k in range(self.n_arms)
        ]

    def step(self, outcome: MatchOutcome | None, round_index: int) -> tuple[Action, ...]:
        self.ingest(outcome)
        player_prefs = [
            sorted(range(self.n_arms), key=lambda k: (-ucbs[k], k))
            for ucbs in (self.ucb_values(i) for i in range(self.n_players))
        ]
        arm_prefs = [list(self.arm_ranking)] * self.n_arms
        return gale_shapley(player_prefs, arm_prefs).assignment


class OraclePolicy(CentralizedPolicy):
    """Every player proposes its stable arm; the zero-regret reference."""

    def __init__(self, market: MarketInstance):
        super().__init__(market.n_players, market.n_arms)
        self.actions = stable_matching_serial(market).assignment

    def step(self, outcome: MatchOutcome | None, round_index: int) -> tuple[Action, ...]:
        return self.actions


class RandomPolicy(CentralizedPolicy):
    """Independent uniform proposals each round, from a seeded stream."""

    def __init__(self, n_players: int, n_arms: int, seed: int):
        super().__init__(n_players, n_arms)
        # Key word 2 separates this stream from the per-player reward streams.
        self.rng = np.random.Generator(
            np.random.Philox(key=np.array([seed, 0xA5A5_0001], dtype=np.uint64))
        )

    def step(self, outcome: MatchOutcome | None, round_index: int) -> tuple[Action, ...]:
        return tuple(int(a) for a in self.rng.integers(0, self.n_arms, self.n_players))
