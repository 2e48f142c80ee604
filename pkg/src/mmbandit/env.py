"""One-round market mechanics: proposal resolution, reward sampling, observations.

Actions are arm indices; None means abstain. Reward noise is drawn from
counter-based Philox streams keyed by (seed, player), so a player's noise
sequence is a pure function of (seed, player, round) and independent of
the order in which players are processed.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .market import MarketInstance

Action = int | None
ABSTAIN: Action = None

REWARD_KINDS = ("gaussian", "bernoulli", "deterministic")


class ConfigError(ValueError):
    """Invalid environment or experiment configuration."""


class InfoModel(Enum):
    COLLISION_ONLY = "collision-only"
    FULL = "full"


@dataclass(frozen=True, slots=True)
class MatchOutcome:
    """Resolved matching for one round.

    matched[i] is the arm player i held this round (None if rejected or
    abstaining); rewards[i] is 0.0 for unmatched players. contested[i]
    is True when some other player also proposed the arm player i proposed.
    """

    round: int
    actions: tuple[Action, ...]
    matched: tuple[int | None, ...]
    rewards: tuple[float, ...]
    contested: tuple[bool, ...]


@dataclass(frozen=True, slots=True)
class Observation:
    """What a single player sees after a round.

    Under COLLISION_ONLY this is only the player's own action, match flag,
    reward, round index, and whether its proposed arm was contested. Under
    FULL it additionally carries the entire matching.
    """

    round: int
    own_action: Action
    matched: bool
    reward: float
    contested: bool
    full_matching: tuple[int | None, ...] | None = None


def resolve_round(
    market: MarketInstance, actions: tuple[Action, ...], round_index: int = 0
) -> MatchOutcome:
    """Resolve one round of proposals; rewards are left at zero.

    Per arm, the proposer ranked highest in the shared arm ranking wins;
    all other proposers of that arm and all abstainers are unmatched.
    """
    if len(actions) != market.n_players:
        raise ConfigError("need exactly one action per player")
    rank = market.rank_of
    winner_of: dict[int, int] = {}
    proposer_count: dict[int, int] = {}
    for player, arm in enumerate(actions):
        if arm is None:
            continue
        if not 0 <= arm < market.n_arms:
            raise ConfigError(f"player {player} proposed invalid arm {arm}")
        proposer_count[arm] = proposer_count.get(arm, 0) + 1
        best = winner_of.get(arm)
        if best is None or rank[player] < rank[best]:
            winner_of[arm] = player
    matched = tuple(
        arm if arm is not None and winner_of[arm] == player else None
        for player, arm in enumerate(actions)
    )
    contested = tuple(
        arm is not None and proposer_count[arm] > 1 for arm in actions
    )
    return MatchOutcome(
        round=round_index,
        actions=actions,
        matched=matched,
        rewards=(0.0,) * market.n_players,
        contested=contested,
    )


class RewardSampler:
    """Per-episode reward noise for matched players.

    kind "gaussian" draws N(mu, 1); "bernoulli" draws Bernoulli(mu);
    "deterministic" returns mu exactly. Noise for (player, round) comes
    from a dedicated Philox stream, so episodes are reproducible and
    player processing order is irrelevant.
    """

    def __init__(self, market: MarketInstance, kind: str, seed: int, horizon: int):
        if kind not in REWARD_KINDS:
            raise ConfigError(f"unknown reward kind {kind!r}, expected one of {REWARD_KINDS}")
        self.market = market
        self.kind = kind
        self.horizon = horizon
        if kind == "gaussian":
            self._noise = np.stack(
                [
                    _player_stream(seed, i).standard_normal(horizon)
                    for i in range(market.n_players)
                ]
            )
        elif kind == "bernoulli":
            self._noise = np.stack(
                [
                    _player_stream(seed, i).random(horizon)
                    for i in range(market.n_players)
                ]
            )
        else:
            self._noise = None

    def reward(self, player: int, arm: int, round_index: int) -> float:
        mu = self.market.utilities[player][arm]
        if self.kind == "deterministic":
            return mu
        if self.kind == "gaussian":
            return mu + float(self._noise[player, round_index])
        return 1.0 if self._noise[player, round_index] < mu else 0.0

    def sample(self, outcome: MatchOutcome) -> MatchOutcome:
        """Fill in rewards for all matched players of a resolved round."""
        rewards = tuple(
            self.reward(player, arm, outcome.round) if arm is not None else 0.0
            for player, arm in enumerate(outcome.matched)
        )
        return MatchOutcome(
            round=outcome.round,
            actions=outcome.actions,
            matched=outcome.matched,
            rewards=rewards,
            contested=outcome.contested,
        )


def _player_stream(seed: int, player: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, player], dtype=np.uint64)))


def sample_rewards(
    market: MarketInstance, outcome: MatchOutcome, sampler: RewardSampler
) -> MatchOutcome:
    """Functional wrapper around RewardSampler.sample."""
    if sampler.market is not market:
        raise ConfigError("sampler was built for a different market")
    return sampler.sample(outcome)


def observe(
    outcome: MatchOutcome, player: int, info_model: InfoModel = InfoModel.COLLISION_ONLY
) -> Observation:
    """Project one round's outcome onto what a single player may see."""
    matched_arm = outcome.matched[player]
    return Observation(
        round=outcome.round,
        own_action=outcome.actions[player],
        matched=matched_arm is not None,
        reward=outcome.rewards[player],
        contested=outcome.contested[player],
        full_matching=outcome.matched if info_model is InfoModel.FULL else None,
    )
