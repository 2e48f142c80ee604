from __future__ import annotations

import itertools

import numpy as np
import pytest

from mmbandit.env import (
    ABSTAIN,
    ConfigError,
    InfoModel,
    RewardSampler,
    observe,
    resolve_round,
    sample_rewards,
)
from mmbandit.market import MarketInstance, generate_market


def brute_force_resolve(market, actions):
    """Oracle: per arm, scan all proposers and keep the best-ranked one."""
    rank = market.rank_of
    matched = [None] * market.n_players
    for arm in range(market.n_arms):
        proposers = [i for i, a in enumerate(actions) if a == arm]
        if proposers:
            winner = min(proposers, key=lambda i: rank[i])
            matched[winner] = arm
    return tuple(matched)


@pytest.fixture
def market3():
    return MarketInstance(
        3,
        3,
        ((0.9, 0.5, 0.1), (0.8, 0.2, 0.6), (0.3, 0.7, 0.4)),
        (0, 1, 2),
    )


class TestResolveRound:
    def test_highest_ranked_proposer_wins(self, market3):
        outcome = resolve_round(market3, (1, 1, 0))
        assert outcome.matched == (1, None, 0)
        assert outcome.contested == (True, True, False)

    def test_distinct_proposals_all_match(self, market3):
        outcome = resolve_round(market3, (2, 0, 1))
        assert outcome.matched == (2, 0, 1)
        assert outcome.contested == (False, False, False)

    def test_abstain_never_matches(self, market3):
        outcome = resolve_round(market3, (ABSTAIN, 0, ABSTAIN))
        assert outcome.matched == (None, 0, None)

    def test_permuted_ranking_decides_winner(self):
        market = MarketInstance(2, 2, ((0.9, 0.5), (0.8, 0.2)), (1, 0))
        outcome = resolve_round(market, (0, 0))
        assert outcome.matched == (None, 0)

    def test_matches_brute_force_on_random_rounds(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            n = int(rng.integers(1, 7))
            k = int(rng.integers(n, 7))
            market = generate_market(n, k, 0.0, int(rng.integers(2**31)))
            actions = tuple(
                None if rng.random() < 0.2 else int(rng.integers(k)) for _ in range(n)
            )
            outcome = resolve_round(market, actions)
            assert outcome.matched == brute_force_resolve(market, actions)
            taken = [a for a in outcome.matched if a is not None]
            assert len(taken) == len(set(taken))

    def test_rejects_wrong_arity_and_bad_arm(self, market3):
        with pytest.raises(ConfigError):
            resolve_round(market3, (0, 1))
        with pytest.raises(ConfigError):
            resolve_round(market3, (0, 1, 3))


class TestRewardSampling:
    def test_deterministic_mode_returns_means(self, market3):
        sampler = RewardSampler(market3, "deterministic", seed=0, horizon=10)
        outcome = sampler.sample(resolve_round(market3, (1, 2, ABSTAIN), 0))
        assert outcome.rewards == (0.5, 0.6, 0.0)

    def test_unmatched_player_gets_zero(self, market3):
        sampler = RewardSampler(market3, "gaussian", seed=1, horizon=5)
        outcome = sampler.sample(resolve_round(market3, (0, 0, 0), 2))
        assert outcome.rewards[1] == 0.0 and outcome.rewards[2] == 0.0

    def test_same_seed_reproduces_sequences(self, market3):
        run = []
        for _ in range(2):
            sampler = RewardSampler(market3, "gaussian", seed=9, horizon=50)
            rewards = [
                sampler.sample(resolve_round(market3, (0, 1, 2), t)).rewards
                for t in range(50)
            ]
            run.append(rewards)
        assert run[0] == run[1]

    def test_noise_is_keyed_by_player_and_round_not_processing_order(self, market3):
        # The same (player, round) pair gets the same draw no matter which
        # other players matched that round.
        sampler = RewardSampler(market3, "gaussian", seed=4, horizon=20)
        solo = sampler.sample(resolve_round(market3, (ABSTAIN, 1, ABSTAIN), 7))
        crowded = sampler.sample(resolve_round(market3, (0, 1, 2), 7))
        assert solo.rewards[1] == crowded.rewards[1]

    def test_bernoulli_mode_is_binary_with_matching_mean(self):
        market = MarketInstance(1, 1, ((0.7,),), (0,))
        sampler = RewardSampler(market, "bernoulli", seed=3, horizon=20000)
        draws = [
            sampler.sample(resolve_round(market, (0,), t)).rewards[0]
            for t in range(20000)
        ]
        assert set(draws) <= {0.0, 1.0}
        assert np.mean(draws) == pytest.approx(0.7, abs=0.02)

    def test_unknown_kind_rejected(self, market3):
        with pytest.raises(ConfigError):
            RewardSampler(market3, "cauchy", seed=0, horizon=5)

    def test_functional_wrapper_checks_market(self, market3):
        sampler = RewardSampler(market3, "deterministic", seed=0, horizon=4)
        other = generate_market(2, 2, 0.0, 1)
        with pytest.raises(ConfigError):
            sample_rewards(other, resolve_round(other, (0, 1), 0), sampler)


class TestObserve:
    def test_collision_only_hides_the_matching(self, market3):
        sampler = RewardSampler(market3, "deterministic", seed=0, horizon=4)
        outcome = sampler.sample(resolve_round(market3, (1, 1, 0), 0))
        obs = observe(outcome, 1, InfoModel.COLLISION_ONLY)
        assert obs.own_action == 1
        assert not obs.matched
        assert obs.reward == 0.0
        assert obs.contested
        assert obs.full_matching is None

    def test_full_model_carries_everyone(self, market3):
        outcome = resolve_round(market3, (1, 1, 0), 3)
        obs = observe(outcome, 1, InfoModel.FULL)
        assert obs.full_matching == (1, None, 0)

    def test_abstaining_player_sees_no_match(self, market3):
        outcome = resolve_round(market3, (ABSTAIN, 0, 2), 1)
        obs = observe(outcome, 0)
        assert obs.own_action is None and not obs.matched and obs.reward == 0.0
