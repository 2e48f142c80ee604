"""Decentralized multi-level successive selection: per-player state machine.

Each player runs the same horizon-aware policy knowing only (N, K, T), its
own observations, and the shared round counter. Rounds 0..N-1 assign ranks
through forced wins on arm 0. Afterwards the timeline alternates between a
communication block and an exploitation phase of max(1, ceil(ln T)) rounds.

A communication block opens with a K-round wake sweep: every player whose
intended arm changed walks all K arms, rank-shifted so concurrent sweepers
never collide with each other (sweeper n proposes arm (x + n) mod K at
sweep round x). Everyone else holds its chosen arm; a hold that collides,
or wins while contested, reveals a sweep, and the hit round identifies the
sweeper's rank. A block with no sweep is just K rounds of holding, which
costs no regret once play has converged.

If anyone swept, a fixed announce grid follows: one window per (sender,
receiver) pair in rank order, each ceil(log2(K+1)) rounds wide on the
receiver's index arm. A sender whose committed arm changed signals its
0-based index MSB-first: propose on 0-bits, abstain on 1-bits; the
receiver proposes the window arm every round and reads collisions as 0s.
An unchanged sender stays silent and keeps holding, so its receivers read
the reserved all-ones word and keep their previous knowledge; receivers
skip windows that no sweep above the sender could have made live. Senders
re-select at their own slot, after decoding every senior announcement of
the same zone, so occupancy knowledge is always current.

Candidate sets are recomputed per block as all arms minus announced senior
arms, minus arms whose upper confidence bound falls below some candidate's
lower bound. Rewards observed during signaling rounds (index assignment,
sweeps, announcements, holds inside blocks) never update arm statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

from .env import ABSTAIN, Action, Observation

ELIMINATION = "elimination"
UCB = "ucb"
SUBROUTINES = (ELIMINATION, UCB)


class ProtocolCorruptionError(RuntimeError):
    """A decoded announcement does not name a valid arm."""


# ---------------------------------------------------------------------------
# Arm statistics and confidence bounds
# ---------------------------------------------------------------------------

@dataclass(slots=True)
class ArmStats:
    """Running mean and pull count per arm; mean is undefined at count 0."""

    counts: list[int]
    means: list[float]

    @classmethod
    def zeros(cls, n_arms: int) -> "ArmStats":
        return cls(counts=[0] * n_arms, means=[0.0] * n_arms)


def update_stats(stats: ArmStats, arm: int, reward: float) -> ArmStats:
    """Fold one observed reward into the named arm's running mean."""
    n = stats.counts[arm]
    stats.means[arm] = (stats.means[arm] * n + reward) / (n + 1)
    stats.counts[arm] = n + 1
    return stats


def confidence_bounds(mean: float, count: int, ln_horizon: float) -> tuple[float, float]:
    """(UCB, LCB) = mean +/- 2*sqrt(2*ln(T)/count); (inf, -inf) when unpulled."""
    if count == 0:
        return math.inf, -math.inf
    radius = 2.0 * math.sqrt(2.0 * ln_horizon / count)
    return mean + radius, mean - radius


def elimination_select(
    candidates: Sequence[int], stats: ArmStats, ln_horizon: float
) -> tuple[int, frozenset[int]]:
    """Drop candidates dominated at confidence level, then pick the least pulled.

    An arm is dominated when some candidate's LCB exceeds its UCB. The
    survivor set is never empty: the arm with the maximal LCB cannot be
    dominated. Ties on pull count break toward the lowest arm index.
    """
    if not candidates:
        raise ValueError("candidate set must be nonempty")
    bounds = {k: confidence_bounds(stats.means[k], stats.counts[k], ln_horizon) for k in candidates}
    max_lcb = max(lcb for _, lcb in bounds.values())
    eliminated = frozenset(k for k in candidates if bounds[k][0] < max_lcb)
    survivors = [k for k in candidates if k not in eliminated]
    assert survivors, "an arm cannot dominate itself"
    choice = min(survivors, key=lambda k: (stats.counts[k], k))
    return choice, eliminated


def ucb_select(candidates: Sequence[int], stats: ArmStats, ln_horizon: float) -> int:
    """Arm with the highest UCB; unpulled arms win; ties break low."""
    if not candidates:
        raise ValueError("candidate set must be nonempty")
    return max(sorted(candidates), key=lambda k: confidence_bounds(stats.means[k], stats.counts[k], ln_horizon)[0])


# ---------------------------------------------------------------------------
# Collision-channel message coding
# ---------------------------------------------------------------------------

def message_length(n_arms: int) -> int:
    """Bits needed to name a 0-based arm index: ceil(log2 K)."""
    if n_arms < 2:
        raise ValueError("messaging needs at least two arms")
    return max(1, (n_arms - 1).bit_length())


def wire_width(n_arms: int) -> int:
    """Announce-window width: ceil(log2(K+1)).

    One codeword wider than strictly needed so the all-ones word (what a
    receiver reads when the sender stays silent) never names a valid arm.
    """
    if n_arms < 2:
        raise ValueError("messaging needs at least two arms")
    return n_arms.bit_length()


def encode_message(
    arm_index: int, n_arms: int, comm_arm: int, width: int | None = None
) -> tuple[Action, ...]:
    """Sender actions for one announcement, MSB first.

    The sender proposes the communication arm on 0-bits and abstains on
    1-bits, so the receiver (who proposes the communication arm every
    round) reads a collision as 0 and a clean match as 1.
    """
    if not 0 <= arm_index < n_arms:
        raise ProtocolCorruptionError(f"arm index {arm_index} out of range for {n_arms} arms")
    if width is None:
        width = message_length(n_arms)
    return tuple(
        comm_arm if (arm_index >> (width - 1 - b)) & 1 == 0 else ABSTAIN
        for b in range(width)
    )


def decode_message(collision_flags: Sequence[bool], n_arms: int) -> int:
    """Rebuild an arm index from per-round collision flags, MSB first."""
    value = 0
    for collided in collision_flags:
        value = (value << 1) | (0 if collided else 1)
    if value >= n_arms:
        raise ProtocolCorruptionError(f"decoded value {value} >= {n_arms}")
    return value


# ---------------------------------------------------------------------------
# Block schedule
# ---------------------------------------------------------------------------

@dataclass(frozen=True, slots=True)
class WakeSweep:
    sweepers: tuple[int, ...]
    rounds: int


@dataclass(frozen=True, slots=True)
class Transmit:
    sender: int
    receiver: int
    rounds: int
    comm_arm: int


@dataclass(frozen=True, slots=True)
class Hold:
    rounds: int


@dataclass(frozen=True, slots=True)
class CommSchedule:
    """Deterministic layout of one communication block."""

    segments: tuple[WakeSweep | Transmit | Hold, ...]

    @property
    def total_rounds(self) -> int:
        return sum(seg.rounds for seg in self.segments)


def window_table(n_players: int) -> list[tuple[int, int]]:
    """(sender, receiver) pairs of the announce zone, in on-air order."""
    return [(n, i) for n in range(n_players) for i in range(n + 1, n_players)]


def announce_zone_length(n_players: int, n_arms: int) -> int:
    if n_players < 2:
        return 0
    return wire_width(n_arms) * (n_players * (n_players - 1)) // 2


def sender_slot_offset(n_players: int, n_arms: int, player: int) -> int:
    """Zone offset at which a sender re-selects its arm and starts its windows."""
    if n_players < 2:
        return 0
    width = wire_width(n_arms)
    return width * sum(n_players - 1 - m for m in range(player))


def comm_schedule(
    n_players: int, n_arms: int, changed_flags: Sequence[bool]
) -> CommSchedule:
    """Block layout given which senders' intended arms changed.

    With no changes the block is a single K-round hold and no arm-set
    updates occur. Otherwise the changed senders sweep all K arms in
    lockstep (rank-shifted) for K rounds, after which a fixed announce
    grid gives every sender one window per junior in rank order; the
    communication arm of a window is the receiver's index arm. Windows of
    senders that end up not changing carry the silence word.
    """
    if len(changed_flags) != n_players:
        raise ValueError("need one changed flag per sender")
    sweepers = tuple(n for n, changed in enumerate(changed_flags) if changed)
    if not sweepers:
        return CommSchedule(segments=(Hold(rounds=n_arms),))
    width = wire_width(n_arms) if n_players > 1 else 0
    transmits = tuple(
        Transmit(sender=n, receiver=i, rounds=width, comm_arm=i)
        for n, i in window_table(n_players)
    )
    return CommSchedule(segments=(WakeSweep(sweepers=sweepers, rounds=n_arms),) + transmits)


# ---------------------------------------------------------------------------
# Player state machine
# ---------------------------------------------------------------------------

_INDEX = "index"
_BLOCK = "block"
_PHASE = "phase"


@dataclass(slots=True)
class BlockRecord:
    """Debug snapshot of one communication block (test builds only)."""

    start_round: int
    swept: bool
    heard_sweep: bool
    intended_arm: int
    committed_arm: int | None
    occupied: dict[int, int]
    survivors: frozenset[int]
    decode_errors: int


def phase_length(horizon: int, override: int | None = None) -> int:
    if override is not None:
        if override < 1:
            raise ValueError("phase length override must be positive")
        return override
    return max(1, math.ceil(math.log(horizon)))


class MLSSPlayer:
    """One player's policy state; touched only through step().

    Inputs are restricted to the player's own observations and the shared
    round counter. The rank (my_index) is learned during the first N
    rounds and doubles as the slot position in every announce zone.
    """

    def __init__(
        self,
        n_players: int,
        n_arms: int,
        horizon: int,
        subroutine: str = ELIMINATION,
        phase_length_override: int | None = None,
        collect_debug: bool = False,
    ):
        if subroutine not in SUBROUTINES:
            raise ValueError(f"unknown subroutine {subroutine!r}, expected one of {SUBROUTINES}")
        if horizon < n_players:
            raise ValueError("horizon must cover at least the rank-assignment rounds")
        self.n_players = n_players
        self.n_arms = n_arms
        self.horizon = horizon
        self.ln_horizon = math.log(horizon)
        self.subroutine = subroutine
        self.phase_len = phase_length(horizon, phase_length_override)
        self.width = wire_width(n_arms) if n_players > 1 else 0
        self.zone_len = announce_zone_length(n_players, n_arms)
        self.windows = window_table(n_players)

        self.my_index: int | None = None
        self.stats = ArmStats.zeros(n_arms)
        self.senior_arms: dict[int, int] = {}
        self.chosen_arm: int | None = None
        self.flag = False
        self.decode_errors = 0
        self.silent_windows = 0

        self._mode = _INDEX
        self._mode_start = 0
        self._swept = False
        self._sweepers_heard: set[int] = set()
        self._intended: int | None = None
        self._pre_block_chosen: int | None = None
        self._announcing = False
        self._committed = False
        self._slot_offset: int | None = None
        self._rx_bits: list[bool] = []
        self._fallbacks = 0
        self.debug_blocks: list[BlockRecord] | None = [] if collect_debug else None

    # -- public surface ----------------------------------------------------

    def step(self, observation: Observation | None, round_index: int) -> Action:
        """Consume last round's observation and emit this round's action."""
        if observation is not None:
            self._ingest(observation)
        self._advance(round_index)
        return self._act(round_index)

    @property
    def occupied(self) -> set[int]:
        """Arms announced by higher-ranked players, per current knowledge."""
        return set(self.senior_arms.values())

    @property
    def eliminated(self) -> frozenset[int]:
        """Arms currently excluded at confidence level, given occupancy."""
        candidates = self._candidates()
        if self.subroutine != ELIMINATION:
            return frozenset()
        _, dominated = elimination_select(candidates, self.stats, self.ln_horizon)
        return dominated

    def candidate_set(self) -> frozenset[int]:
        """Arms still in play: not occupied and not confidence-dominated."""
        candidates = self._candidates()
        if self.subroutine == ELIMINATION:
            _, dominated = elimination_select(candidates, self.stats, self.ln_horizon)
            return frozenset(candidates) - dominated
        return frozenset(candidates)

    # -- observation intake ------------------------------------------------

    def _ingest(self, obs: Observation) -> None:
        if self._mode == _INDEX:
            if obs.matched and obs.own_action == 0 and self.my_index is None:
                self.my_index = obs.round
            return
        if self._mode == _PHASE:
            if obs.matched:
                update_stats(self.stats, obs.own_action, obs.reward)
            return
        pos = obs.round - self._mode_start
        if pos < self.n_arms:
            # Wake sweep: a hold that collides, or wins contested, means a
            # sweeper's ladder crossed our arm this round; the ladder is
            # rank-shifted, so the hit round names the sweeper.
            if not self._swept and obs.own_action is not None:
                if not obs.matched or obs.contested:
                    self.flag = True
                    rank = (obs.own_action - pos) % self.n_arms
                    if rank < self.n_players:
                        self._sweepers_heard.add(rank)
            return
        window, bit = divmod(pos - self.n_arms, self.width)
        sender, receiver = self.windows[window]
        if receiver == self.my_index and self._listening(sender):
            if bit == 0:
                self._rx_bits = []
            self._rx_bits.append(not obs.matched)
            if bit == self.width - 1:
                self._finish_decode(sender)

    def _listening(self, sender: int) -> bool:
        """A window can be live only if some sweep at or above the sender
        happened; sweepers cannot hear each other, so they always listen."""
        return self._swept or any(s <= sender for s in self._sweepers_heard)

    def _finish_decode(self, sender: int) -> None:
        value = 0
        for collided in self._rx_bits:
            value = (value << 1) | (0 if collided else 1)
        self._rx_bits = []
        if value == (1 << self.width) - 1:
            self.silent_windows += 1  # silence word: sender did not change
        elif value >= self.n_arms:
            self.decode_errors += 1  # garbage: keep the previous announcement
        else:
            self.senior_arms[sender] = value

    # -- schedule transitions ----------------------------------------------

    def _advance(self, t: int) -> None:
        while True:
            if self._mode == _INDEX:
                if t - self._mode_start < self.n_players:
                    return
                self._enter_block(self._mode_start + self.n_players)
                continue
            if self._mode == _BLOCK:
                if self.flag and not self._committed:
                    if t - self._mode_start >= self.n_arms + self._slot_offset:
                        self._commit_choice(t)
                block_len = self.n_arms + (self.zone_len if self.flag else 0)
                if t - self._mode_start < block_len:
                    return
                self._mode = _PHASE
                self._mode_start = self._mode_start + block_len
                continue
            if t - self._mode_start < self.phase_len:
                return
            self._enter_block(self._mode_start + self.phase_len)

    def _enter_block(self, start: int) -> None:
        assert self.my_index is not None, "rank must be assigned before the first block"
        if self._slot_offset is None:
            self._slot_offset = sender_slot_offset(self.n_players, self.n_arms, self.my_index)
        self._mode = _BLOCK
        self._mode_start = start
        self._committed = False
        self._announcing = False
        self._rx_bits = []
        self._sweepers_heard = set()
        self._pre_block_chosen = self.chosen_arm
        intended = self._select()[0]
        self._intended = intended
        self._swept = intended != self.chosen_arm
        self.flag = self._swept
        if self.debug_blocks is not None:
            self.debug_blocks.append(
                BlockRecord(
                    start_round=start,
                    swept=self._swept,
                    heard_sweep=False,
                    intended_arm=intended,
                    committed_arm=None,
                    occupied=dict(self.senior_arms),
                    survivors=frozenset(),
                    decode_errors=self.decode_errors,
                )
            )

    def _commit_choice(self, t: int) -> None:
        arm, survivors = self._select()
        self.chosen_arm = arm
        self._committed = True
        self._announcing = arm != self._pre_block_chosen
        if self.debug_blocks is not None:
            record = self.debug_blocks[-1]
            record.heard_sweep = self.flag and not self._swept
            record.committed_arm = arm
            record.occupied = dict(self.senior_arms)
            record.survivors = survivors
            record.decode_errors = self.decode_errors

    def _candidates(self) -> list[int]:
        occupied = self.occupied
        candidates = [k for k in range(self.n_arms) if k not in occupied]
        if not candidates:
            # Stale occupancy can only come from decode corruption; degrade
            # by ignoring it rather than deadlocking.
            self._fallbacks += 1
            candidates = list(range(self.n_arms))
        return candidates

    def _select(self) -> tuple[int, frozenset[int]]:
        candidates = self._candidates()
        if self.subroutine == ELIMINATION:
            arm, dominated = elimination_select(candidates, self.stats, self.ln_horizon)
            return arm, frozenset(candidates) - dominated
        return ucb_select(candidates, self.stats, self.ln_horizon), frozenset(candidates)

    # -- actions -------------------------------------------------------------

    def _act(self, t: int) -> Action:
        if self._mode == _INDEX:
            return 0 if self.my_index is None else 1
        if self._mode == _PHASE:
            return self.chosen_arm
        pos = t - self._mode_start
        if pos < self.n_arms:
            if self._swept:
                return (pos + self.my_index) % self.n_arms
            return self.chosen_arm
        window, bit = divmod(pos - self.n_arms, self.width)
        sender, receiver = self.windows[window]
        if sender == self.my_index:
            if self._announcing:
                if (self.chosen_arm >> (self.width - 1 - bit)) & 1 == 0:
                    return receiver
                return ABSTAIN
            # Silent: receivers read the all-ones word. Keep holding unless
            # that would collide with the window's own channel arm.
            if self.chosen_arm == receiver:
                return ABSTAIN
            return self.chosen_arm
        if receiver == self.my_index and self._listening(sender):
            return self.my_index
        # Third parties (and receivers of certainly-dead windows) keep
        # holding; only a player ranked above the receiver proposing the
        # window's channel arm could flip a 1-bit into a collision.
        if self.my_index < receiver and self.chosen_arm == receiver:
            return ABSTAIN
        return self.chosen_arm
