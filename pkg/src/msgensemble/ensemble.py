"""Ablation-ensemble decision layer.

A base policy maps (interaction history, one k-subset of the received
messages) to an action. The ensemble evaluates the base policy on many
k-subsets and aggregates: majority vote for discrete actions,
coordinate-wise median for continuous ones. Partial variants aggregate
over D randomly drawn subsets instead of all C(N-1, k).
"""

from __future__ import annotations

import itertools
import random
from collections import Counter
from dataclasses import dataclass, field
from typing import Dict, Hashable, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from .certmath import binomial
from .errors import DimensionMismatchError, InvalidRangeError

# Payloads must be hashable so they can live in vote tables and alphabets;
# vector-valued messages are tuples of floats.
Payload = Hashable
DiscreteAction = Hashable
ContinuousAction = np.ndarray
Action = Union[DiscreteAction, ContinuousAction]


@dataclass(frozen=True)
class Message:
    """One received message: a payload tagged with its channel index."""

    payload: Payload
    channel_id: int


@dataclass(frozen=True)
class MessageSet:
    """The N-1 messages a victim receives at one step.

    ``tamper_mask`` is harness ground truth (which channels an attacker
    rewrote); policies never see it.
    """

    messages: Tuple[Message, ...]
    tamper_mask: Tuple[bool, ...]

    def __post_init__(self) -> None:
        if len(self.messages) != len(self.tamper_mask):
            raise DimensionMismatchError(
                f"{len(self.messages)} messages vs {len(self.tamper_mask)} mask bits"
            )
        for i, msg in enumerate(self.messages):
            if msg.channel_id != i:
                raise InvalidRangeError(
                    f"message {i} carries channel_id {msg.channel_id}"
                )

    @classmethod
    def from_payloads(
        cls,
        payloads: Sequence[Payload],
        tampered: Sequence[int] = (),
    ) -> "MessageSet":
        mask = [False] * len(payloads)
        for ch in tampered:
            mask[ch] = True
        return cls(
            messages=tuple(Message(p, i) for i, p in enumerate(payloads)),
            tamper_mask=tuple(mask),
        )

    def __len__(self) -> int:
        return len(self.messages)

    @property
    def payloads(self) -> Tuple[Payload, ...]:
        return tuple(m.payload for m in self.messages)

    @property
    def tampered_channels(self) -> Tuple[int, ...]:
        return tuple(i for i, bit in enumerate(self.tamper_mask) if bit)

    def tainted(self, indices: Sequence[int]) -> bool:
        """Harness-side check: does this subset touch a tampered channel?"""
        return any(self.tamper_mask[i] for i in indices)

    def replace_payloads(self, overrides: Dict[int, Payload]) -> "MessageSet":
        """New set with the given channels rewritten and marked tampered.

        A channel whose override equals its benign payload is still marked:
        the mask records the attacker's reach, not the damage done.
        """
        msgs = list(self.messages)
        mask = list(self.tamper_mask)
        for ch, payload in overrides.items():
            msgs[ch] = Message(payload, ch)
            mask[ch] = True
        return MessageSet(messages=tuple(msgs), tamper_mask=tuple(mask))

    def permuted(self, order: Sequence[int]) -> "MessageSet":
        """Reindex channels by ``order`` (mask permuted consistently)."""
        return MessageSet(
            messages=tuple(
                Message(self.messages[src].payload, dst)
                for dst, src in enumerate(order)
            ),
            tamper_mask=tuple(self.tamper_mask[src] for src in order),
        )


@dataclass(frozen=True)
class KSample:
    """A k-subset of the received messages, kept in channel order."""

    indices: Tuple[int, ...]
    payloads: Tuple[Payload, ...]

    def __post_init__(self) -> None:
        if len(self.indices) != len(self.payloads):
            raise DimensionMismatchError("indices and payloads differ in length")
        if any(a >= b for a, b in zip(self.indices, self.indices[1:])):
            raise InvalidRangeError(f"indices not strictly increasing: {self.indices}")

    @classmethod
    def from_message_set(cls, msgs: MessageSet, indices: Sequence[int]) -> "KSample":
        idx = tuple(indices)
        return cls(indices=idx, payloads=tuple(msgs.messages[i].payload for i in idx))

    def __len__(self) -> int:
        return len(self.indices)


class AblationPolicy(Protocol):
    """Deterministic base policy over one k-subset of messages.

    Implementations must be symmetric: the action may depend only on the
    history and the *multiset* of payloads, never on payload order or on
    which channel a payload came from. Violations are a caller bug and are
    caught opportunistically in debug runs.
    """

    def act(self, history, sample: KSample) -> Action:
        ...


def _actions_equal(a: Action, b: Action) -> bool:
    if isinstance(a, np.ndarray) or isinstance(b, np.ndarray):
        return bool(np.array_equal(np.asarray(a), np.asarray(b)))
    return a == b


def _check_symmetry(policy: AblationPolicy, history, sample: KSample) -> None:
    # One permuted re-evaluation per ensemble call keeps the cost trivial.
    if len(sample) < 2:
        return
    flipped = KSample(sample.indices, tuple(reversed(sample.payloads)))
    if not _actions_equal(policy.act(history, sample), policy.act(history, flipped)):
        raise AssertionError(
            "base policy is not symmetric in its messages: "
            f"payload order changed the action for indices {sample.indices}"
        )


def enumerate_k_samples(msgs: MessageSet, k: int) -> List[KSample]:
    """All C(N-1, k) subsets, in lexicographic index order."""
    n = len(msgs)
    if not 1 <= k <= n:
        raise InvalidRangeError(f"k must be in [1, {n}], got {k}")
    return [
        KSample.from_message_set(msgs, combo)
        for combo in itertools.combinations(range(n), k)
    ]


def _as_rng(seed: Union[int, random.Random, None]) -> random.Random:
    if isinstance(seed, random.Random):
        return seed
    return random.Random(seed)


def _unrank_combination(rank: int, n: int, k: int) -> Tuple[int, ...]:
    """Combination with the given lexicographic rank among C(n, k)."""
    out = []
    x = 0
    remaining = k
    r = rank
    while remaining > 0:
        cnt = binomial(n - x - 1, remaining - 1)
        if r < cnt:
            out.append(x)
            remaining -= 1
        else:
            r -= cnt
        x += 1
    return tuple(out)


def sample_k_samples(
    msgs: MessageSet,
    k: int,
    sample_size: int,
    seed: Union[int, random.Random, None],
) -> List[KSample]:
    """D distinct k-subsets, uniform over all C(n1, D) possible draws.

    Subsets are ranked lexicographically and D distinct ranks are drawn
    without replacement, so uniformity is exact; the draw is reproducible
    from the seed.
    """
    n = len(msgs)
    if not 1 <= k <= n:
        raise InvalidRangeError(f"k must be in [1, {n}], got {k}")
    n1 = binomial(n, k)
    if not 1 <= sample_size <= n1:
        raise InvalidRangeError(f"sample_size must be in [1, {n1}], got {sample_size}")
    rng = _as_rng(seed)
    ranks = rng.sample(range(n1), sample_size)
    return [
        KSample.from_message_set(msgs, _unrank_combination(r, n, k)) for r in ranks
    ]


def _tally(
    policy: AblationPolicy, history, samples: Sequence[KSample]
) -> Counter:
    votes: Counter = Counter()
    if __debug__ and samples:
        _check_symmetry(policy, history, samples[0])
    for sample in samples:
        votes[policy.act(history, sample)] += 1
    return votes


def vote_winner(votes: Counter) -> DiscreteAction:
    """Plurality action; ties go to the lowest action identifier."""
    top = max(votes.values())
    return min(a for a, c in votes.items() if c == top)


def ensemble_act_discrete(
    policy: AblationPolicy, history, msgs: MessageSet, k: int
) -> Tuple[DiscreteAction, Dict[DiscreteAction, int]]:
    """Majority vote over every k-subset; returns winner and vote table."""
    votes = _tally(policy, history, enumerate_k_samples(msgs, k))
    return vote_winner(votes), dict(votes)


def _stack_actions(actions: Sequence[Action]) -> np.ndarray:
    vectors = [np.atleast_1d(np.asarray(a, dtype=float)) for a in actions]
    dim = vectors[0].shape
    for v in vectors:
        if v.shape != dim:
            raise DimensionMismatchError(
                f"base actions disagree on dimension: {v.shape} vs {dim}"
            )
    return np.stack(vectors)


def ensemble_act_continuous(
    policy: AblationPolicy, history, msgs: MessageSet, k: int
) -> ContinuousAction:
    """Coordinate-wise median of the base actions over every k-subset.

    Even counts take the mean of the two middle order statistics, which
    stays inside the spanned interval per coordinate.
    """
    samples = enumerate_k_samples(msgs, k)
    if __debug__:
        _check_symmetry(policy, history, samples[0])
    actions = [policy.act(history, s) for s in samples]
    return np.median(_stack_actions(actions), axis=0)


def ensemble_act_partial_discrete(
    policy: AblationPolicy,
    history,
    msgs: MessageSet,
    k: int,
    sample_size: int,
    seed: Union[int, random.Random, None],
) -> Tuple[DiscreteAction, Dict[DiscreteAction, int]]:
    """Majority vote over D randomly drawn k-subsets."""
    votes = _tally(policy, history, sample_k_samples(msgs, k, sample_size, seed))
    return vote_winner(votes), dict(votes)


def ensemble_act_partial_continuous(
    policy: AblationPolicy,
    history,
    msgs: MessageSet,
    k: int,
    sample_size: int,
    seed: Union[int, random.Random, None],
) -> ContinuousAction:
    """Coordinate-wise median over D randomly drawn k-subsets."""
    samples = sample_k_samples(msgs, k, sample_size, seed)
    if __debug__:
        _check_symmetry(policy, history, samples[0])
    actions = [policy.act(history, s) for s in samples]
    return np.median(_stack_actions(actions), axis=0)


# --- Reference base policies -------------------------------------------------
#
# Small deterministic policies used by the verification oracles and tests.
# Environment-specific scripted policies live in envs.


class ConstantPolicy:
    """Ignores everything and returns a fixed action."""

    def __init__(self, action: Action):
        self.action = action

    def act(self, history, sample: KSample) -> Action:
        return self.action


class IdentityPolicy:
    """k=1 policy whose action is the message payload itself."""

    def act(self, history, sample: KSample) -> Action:
        if len(sample) != 1:
            raise InvalidRangeError("IdentityPolicy requires k = 1")
        return sample.payloads[0]


class SymbolicTablePolicy:
    """Tabular policy on a finite alphabet, keyed by the sorted payload tuple."""

    def __init__(self, table: Dict[Tuple[Payload, ...], DiscreteAction],
                 default: Optional[DiscreteAction] = None):
        self.table = table
        self.default = default

    def act(self, history, sample: KSample) -> DiscreteAction:
        key = tuple(sorted(sample.payloads))
        if key in self.table:
            return self.table[key]
        if self.default is None:
            raise KeyError(f"no table entry for payload combination {key}")
        return self.default


class MeanVectorPolicy:
    """Continuous policy: the arithmetic mean of the payload vectors."""

    def act(self, history, sample: KSample) -> ContinuousAction:
        return np.mean(
            [np.atleast_1d(np.asarray(p, dtype=float)) for p in sample.payloads],
            axis=0,
        )
