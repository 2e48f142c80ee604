"""Ground-truth market model: utilities, shared arm ranking, and stable-matching oracles.

Players and arms are 0-indexed throughout. Under a shared arm ranking
(serial dictatorship) the stable matching is unique and computable by a
greedy pass over players in ranking order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

UNMATCHED = None

_ROW_RETRY_BUDGET = 10_000


class MarketError(ValueError):
    """Invalid market data or infeasible generator parameters."""


@dataclass(frozen=True)
class MarketInstance:
    """A market of n_players players and n_arms arms (n_players <= n_arms).

    utilities[i][k] is the mean reward player i gets from arm k, in (0, 1],
    pairwise distinct within each row. arm_ranking lists player indices in
    the order every arm prefers them, most-preferred first.
    """

    n_players: int
    n_arms: int
    utilities: tuple[tuple[float, ...], ...]
    arm_ranking: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.n_players < 1:
            raise MarketError("need at least one player")
        if self.n_arms < self.n_players:
            raise MarketError(
                f"need n_arms >= n_players, got {self.n_arms} < {self.n_players}"
            )
        if len(self.utilities) != self.n_players:
            raise MarketError("utilities must have one row per player")
        for i, row in enumerate(self.utilities):
            if len(row) != self.n_arms:
                raise MarketError(f"utility row {i} must have one entry per arm")
            for u in row:
                if not 0.0 < u <= 1.0:
                    raise MarketError(f"utility {u} of player {i} outside (0, 1]")
            if len(set(row)) != self.n_arms:
                raise MarketError(f"utility row {i} has duplicate entries")
        if sorted(self.arm_ranking) != list(range(self.n_players)):
            raise MarketError("arm_ranking must be a permutation of all players")

    @property
    def rank_of(self) -> dict[int, int]:
        """Player index -> position in the shared ranking (0 = most preferred)."""
        return {p: pos for pos, p in enumerate(self.arm_ranking)}

    def preference_order(self, player: int) -> list[int]:
        """Arms sorted by this player's utility, best first."""
        row = self.utilities[player]
        return sorted(range(self.n_arms), key=lambda k: -row[k])

    def to_json(self) -> str:
        return json.dumps(
            {
                "n_players": self.n_players,
                "n_arms": self.n_arms,
                "utilities": [u for row in self.utilities for u in row],
                "arm_ranking": list(self.arm_ranking),
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "MarketInstance":
        try:
            raw = json.loads(text)
            n, k = int(raw["n_players"]), int(raw["n_arms"])
            flat = [float(u) for u in raw["utilities"]]
            ranking = tuple(int(p) for p in raw["arm_ranking"])
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise MarketError(f"malformed market JSON: {exc}") from exc
        if len(flat) != n * k:
            raise MarketError("utilities length does not match n_players * n_arms")
        rows = tuple(tuple(flat[i * k : (i + 1) * k]) for i in range(n))
        return cls(n_players=n, n_arms=k, utilities=rows, arm_ranking=ranking)

    @classmethod
    def from_file(cls, path: str | Path) -> "MarketInstance":
        return cls.from_json(Path(path).read_text())


@dataclass(frozen=True)
class Matching:
    """Assignment of players to arms; 0-based indices, None for unmatched."""

    assignment: tuple[int | None, ...]

    def __post_init__(self) -> None:
        taken = [a for a in self.assignment if a is not None]
        if len(taken) != len(set(taken)):
            raise MarketError("two players matched to the same arm")

    def arm_of(self, player: int) -> int | None:
        return self.assignment[player]


def generate_market(
    n_players: int,
    n_arms: int,
    min_gap: float = 0.0,
    rng_seed: int = 0,
) -> MarketInstance:
    """Draw utilities i.i.d. Uniform(0,1], resampling each row until every
    within-row pairwise gap is at least min_gap.

    The arm ranking defaults to the identity (player 0 most preferred).
    Raises MarketError when a row cannot be sampled within the retry budget.
    """
    if not 1 <= n_players <= n_arms:
        raise MarketError(f"need 1 <= n_players <= n_arms, got ({n_players}, {n_arms})")
    if min_gap < 0.0:
        raise MarketError("min_gap must be nonnegative")
    if n_arms > 1 and min_gap >= 1.0 / (n_arms - 1):
        raise MarketError(
            f"min_gap={min_gap} infeasible: {n_arms} arms in (0,1] cannot all be "
            f"{min_gap} apart"
        )
    rng = np.random.default_rng(rng_seed)
    rows: list[tuple[float, ...]] = []
    for i in range(n_players):
        for _ in range(_ROW_RETRY_BUDGET):
            # 1 - U over [0,1) lands in (0,1], honoring strictly positive means.
            row = 1.0 - rng.random(n_arms)
            smallest = np.min(np.diff(np.sort(row))) if n_arms > 1 else np.inf
            if smallest > 0.0 and smallest >= min_gap:
                rows.append(tuple(float(u) for u in row))
                break
        else:
            raise MarketError(
                f"row {i}: no sample with min_gap={min_gap} after "
                f"{_ROW_RETRY_BUDGET} tries"
            )
    return MarketInstance(
        n_players=n_players,
        n_arms=n_arms,
        utilities=tuple(rows),
        arm_ranking=tuple(range(n_players)),
    )


def min_gap(market: MarketInstance) -> float:
    """Smallest |mu[i][k] - mu[i][k']| over all players and arm pairs."""
    if market.n_arms < 2:
        raise MarketError("minimum gap undefined for a single-arm market")
    best = float("inf")
    for row in market.utilities:
        ordered = sorted(row)
        for a, b in zip(ordered, ordered[1:]):
            best = min(best, b - a)
    return best


def stable_matching_serial(market: MarketInstance) -> Matching:
    """The unique stable matching under a shared arm ranking.

    Players claim arms greedily in ranking order, each taking its best
    remaining arm. Every player is matched since n_players <= n_arms.
    """
    assignment: list[int | None] = [None] * market.n_players
    taken: set[int] = set()
    for player in market.arm_ranking:
        row = market.utilities[player]
        best = max(
            (k for k in range(market.n_arms) if k not in taken),
            key=lambda k: row[k],
        )
        assignment[player] = best
        taken.add(best)
    return Matching(tuple(assignment))


def gale_shapley(
    player_prefs: Sequence[Sequence[int]],
    arm_prefs: Sequence[Sequence[int]],
) -> Matching:
    """Player-proposing deferred acceptance over complete strict preferences.

    player_prefs[i] ranks all arms (best first); arm_prefs[k] ranks all
    players. Returns the player-optimal stable matching of the declared
    preferences.
    """
    n_players = len(player_prefs)
    n_arms = len(arm_prefs)
    for i, prefs in enumerate(player_prefs):
        if sorted(prefs) != list(range(n_arms)):
            raise MarketError(f"player {i} preference list is not a permutation of arms")
    for k, prefs in enumerate(arm_prefs):
        if sorted(prefs) != list(range(n_players)):
            raise MarketError(f"arm {k} preference list is not a permutation of players")

    arm_rank = [{p: pos for pos, p in enumerate(prefs)} for prefs in arm_prefs]
    next_choice = [0] * n_players
    holder: list[int | None] = [None] * n_arms
    free = list(range(n_players))
    while free:
        player = free.pop()
        if next_choice[player] >= n_arms:
            continue
        arm = player_prefs[player][next_choice[player]]
        next_choice[player] += 1
        current = holder[arm]
        if current is None:
            holder[arm] = player
        elif arm_rank[arm][player] < arm_rank[arm][current]:
            holder[arm] = player
            free.append(current)
        else:
            free.append(player)

    assignment: list[int | None] = [None] * n_players
    for arm, player in enumerate(holder):
        if player is not None:
            assignment[player] = arm
    return Matching(tuple(assignment))


def blocking_pairs(market: MarketInstance, matching: Matching) -> list[tuple[int, int]]:
    """All (player, arm) pairs that would jointly abandon the given matching.

    A pair blocks when the player strictly prefers the arm to its current
    match (unmatched counts as utility 0) and the arm is unmatched or holds
    a player it ranks below. Exhaustive over all player-arm pairs.
    """
    rank = market.rank_of
    holder_of: dict[int, int] = {}
    for player, arm in enumerate(matching.assignment):
        if arm is not None:
            holder_of[arm] = player
    pairs = []
    for player in range(market.n_players):
        row = market.utilities[player]
        current = matching.arm_of(player)
        current_value = row[current] if current is not None else 0.0
        for arm in range(market.n_arms):
            if row[arm] <= current_value:
                continue
            holder = holder_of.get(arm)
            if holder is None or rank[player] < rank[holder]:
                pairs.append((player, arm))
    return pairs


def induced_preferences(market: MarketInstance) -> tuple[list[list[int]], list[list[int]]]:
    """Preference lists induced by utilities and the shared arm ranking."""
    player_prefs = [market.preference_order(i) for i in range(market.n_players)]
    arm_prefs = [list(market.arm_ranking) for _ in range(market.n_arms)]
    return player_prefs, arm_prefs
