"""Attack harness: rewrites up to C channels per step under pluggable strategies.

Attackers receive the benign message set and return a perturbed copy whose
tamper mask records exactly the channels they touched. They are stateless
between calls apart from the rng they are handed.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

from .certmath import binomial
from .ensemble import MessageSet, Payload
from .errors import DimensionMismatchError, InvalidRangeError


@dataclass(frozen=True)
class AttackBudget:
    """How many channels may be rewritten, and whether the set is re-picked.

    ``per-step`` reselects the attacked channels at every step; ``fixed``
    keeps one set for a whole episode. The bounded-adversary assumption
    (C strictly below half the channels) is enforced unless the caller
    explicitly opts into stress mode.
    """

    c: int
    channel_policy: str = "per-step"
    allow_overbudget: bool = False

    def __post_init__(self) -> None:
        if self.c < 0:
            raise InvalidRangeError(f"attack budget must be >= 0, got {self.c}")
        if self.channel_policy not in ("per-step", "fixed"):
            raise InvalidRangeError(
                f"channel_policy must be 'per-step' or 'fixed', got {self.channel_policy!r}"
            )

    def validate_for(self, n_channels: int) -> None:
        if self.c > n_channels:
            raise InvalidRangeError(
                f"budget C={self.c} exceeds the {n_channels} available channels"
            )
        if not self.allow_overbudget and 2 * self.c >= n_channels:
            raise InvalidRangeError(
                f"budget C={self.c} is not below half of {n_channels} channels; "
                "pass allow_overbudget=True to run anyway"
            )


class PayloadBox:
    """Axis-aligned box of real vector payloads."""

    def __init__(self, low: Sequence[float], high: Sequence[float]):
        if len(low) != len(high):
            raise DimensionMismatchError("low and high differ in dimension")
        self.low = tuple(float(x) for x in low)
        self.high = tuple(float(x) for x in high)

    def sample(self, rng: random.Random) -> Tuple[float, ...]:
        return tuple(rng.uniform(lo, hi) for lo, hi in zip(self.low, self.high))

    def contains(self, payload: Sequence[float]) -> bool:
        vec = tuple(payload)
        return len(vec) == len(self.low) and all(
            lo <= x <= hi for x, lo, hi in zip(vec, self.low, self.high)
        )


class PayloadAlphabet:
    """Finite payload alphabet (symbolic messages or a payload grid)."""

    def __init__(self, symbols: Sequence[Payload]):
        if not symbols:
            raise InvalidRangeError("alphabet must not be empty")
        self.symbols = tuple(symbols)

    def sample(self, rng: random.Random) -> Payload:
        return self.symbols[rng.randrange(len(self.symbols))]

    def __iter__(self):
        return iter(self.symbols)

    def __len__(self) -> int:
        return len(self.symbols)


PayloadSpace = Union[PayloadBox, PayloadAlphabet]


def _pick_channels(
    msgs: MessageSet,
    budget: AttackBudget,
    rng: random.Random,
    channels: Optional[Sequence[int]],
) -> List[int]:
    budget.validate_for(len(msgs))
    if channels is not None:
        if len(channels) > budget.c:
            raise InvalidRangeError(
                f"{len(channels)} preselected channels exceed budget {budget.c}"
            )
        return sorted(channels)
    return sorted(rng.sample(range(len(msgs)), budget.c))


def random_attack(
    msgs: MessageSet,
    budget: AttackBudget,
    space: PayloadSpace,
    rng: random.Random,
    channels: Optional[Sequence[int]] = None,
) -> MessageSet:
    """Rewrite C uniformly chosen channels with uniform payloads from ``space``."""
    if budget.c == 0:
        return msgs
    chosen = _pick_channels(msgs, budget, rng, channels)
    return msgs.replace_payloads({ch: space.sample(rng) for ch in chosen})


# --- Demand-vector transforms -------------------------------------------------


def perm_attack(demand_msg: Sequence[float], rng: random.Random) -> Tuple[float, ...]:
    """Report a random permutation of the true demand vector."""
    values = list(demand_msg)
    rng.shuffle(values)
    return tuple(values)


def swap_attack(demand_msg: Sequence[float]) -> Tuple[float, ...]:
    """Reverse the demand ranking: highest becomes lowest and so on.

    Equal values are ranked by original index, which makes the pairing
    deterministic and keeps constant vectors fixed.
    """
    values = list(demand_msg)
    m = len(values)
    order = sorted(range(m), key=lambda i: (values[i], i))
    out = [0.0] * m
    for r, idx in enumerate(order):
        out[idx] = values[order[m - 1 - r]]
    return tuple(out)


def flip_attack(demand_msg: Sequence[float]) -> Tuple[float, ...]:
    """Mirror each demand about the vector's mean, floored at zero."""
    values = [float(x) for x in demand_msg]
    eta = sum(values) / len(values)
    return tuple(max(2.0 * eta - x, 0.0) for x in values)


# --- Attacker strategies -------------------------------------------------------


class RandomAttacker:
    """Uniform payload rewrites inside a declared payload space."""

    def __init__(self, space: PayloadSpace):
        self.space = space

    def attack(
        self,
        msgs: MessageSet,
        budget: AttackBudget,
        rng: random.Random,
        channels: Optional[Sequence[int]] = None,
        context: Optional["AttackContext"] = None,
    ) -> MessageSet:
        return random_attack(msgs, budget, self.space, rng, channels)


class TransformAttacker:
    """Applies a payload transform (perm/swap/flip) to the attacked channels."""

    def __init__(self, transform: Callable[..., Payload], uses_rng: bool = False):
        self.transform = transform
        self.uses_rng = uses_rng

    def attack(
        self,
        msgs: MessageSet,
        budget: AttackBudget,
        rng: random.Random,
        channels: Optional[Sequence[int]] = None,
        context: Optional["AttackContext"] = None,
    ) -> MessageSet:
        if budget.c == 0:
            return msgs
        chosen = _pick_channels(msgs, budget, rng, channels)
        overrides: Dict[int, Payload] = {}
        for ch in chosen:
            benign = msgs.messages[ch].payload
            overrides[ch] = (
                self.transform(benign, rng) if self.uses_rng else self.transform(benign)
            )
        return msgs.replace_payloads(overrides)


@dataclass
class AttackContext:
    """Simulation hook the harness hands to adaptive attackers.

    ``evaluate`` returns the victim's simulated return when the current
    step's messages are replaced by the candidate set (benign afterwards).
    """

    evaluate: Callable[[MessageSet], float]


def _enumerate_perturbations(
    channel_ids: Sequence[int],
    max_channels: int,
    candidates: Sequence[Payload],
):
    for c in range(1, max_channels + 1):
        for subset in itertools.combinations(channel_ids, c):
            for assignment in itertools.product(candidates, repeat=c):
                yield dict(zip(subset, assignment))


def search_space_size(n_channels: int, max_channels: int, n_candidates: int) -> int:
    """Number of (channel subset, payload assignment) combinations searched."""
    return sum(
        binomial(n_channels, c) * n_candidates**c for c in range(1, max_channels + 1)
    )


def greedy_adaptive_attack(
    evaluate: Callable[[MessageSet], float],
    msgs: MessageSet,
    budget: AttackBudget,
    candidate_payloads: Sequence[Payload],
    *,
    exhaustive_limit: int = 100_000,
    channels: Optional[Sequence[int]] = None,
) -> MessageSet:
    """Worst-case perturbation over a finite candidate grid.

    Exhausts every channel subset within budget and every candidate
    assignment when the search space fits ``exhaustive_limit``; otherwise
    falls back to greedy coordinate descent, committing one channel at a
    time. Returns the benign set untouched when nothing strictly lowers
    the victim's simulated return.
    """
    budget.validate_for(len(msgs))
    if budget.c == 0 or not candidate_payloads:
        return msgs
    allowed = list(channels) if channels is not None else list(range(len(msgs)))
    baseline = evaluate(msgs)
    max_ch = min(budget.c, len(allowed))

    size = search_space_size(len(allowed), max_ch, len(candidate_payloads))
    best_value = baseline
    best_overrides: Dict[int, Payload] = {}

    if size <= exhaustive_limit:
        for overrides in _enumerate_perturbations(allowed, max_ch, candidate_payloads):
            value = evaluate(msgs.replace_payloads(overrides))
            if value < best_value:
                best_value = value
                best_overrides = overrides
    else:
        # Greedy: commit the single best channel rewrite, then the next.
        committed: Dict[int, Payload] = {}
        for _ in range(max_ch):
            round_best = best_value
            round_override: Optional[Tuple[int, Payload]] = None
            for ch in allowed:
                if ch in committed:
                    continue
                for payload in candidate_payloads:
                    trial = dict(committed)
                    trial[ch] = payload
                    value = evaluate(msgs.replace_payloads(trial))
                    if value < round_best:
                        round_best = value
                        round_override = (ch, payload)
            if round_override is None:
                break
            committed[round_override[0]] = round_override[1]
            best_value = round_best
        best_overrides = committed if best_value < baseline else {}

    if not best_overrides:
        return msgs
    return msgs.replace_payloads(best_overrides)


class GreedyAdaptiveAttacker:
    """Per-step worst-case search over a candidate payload grid.

    Needs a simulation context from the harness; by default the context is
    built seed-blind (the attacker does not know the victim's ensemble
    seed), the mode the guarantees are stated for.
    """

    def __init__(
        self,
        candidate_payloads: Sequence[Payload],
        exhaustive_limit: int = 100_000,
    ):
        self.candidate_payloads = tuple(candidate_payloads)
        self.exhaustive_limit = exhaustive_limit

    def attack(
        self,
        msgs: MessageSet,
        budget: AttackBudget,
        rng: random.Random,
        channels: Optional[Sequence[int]] = None,
        context: Optional[AttackContext] = None,
    ) -> MessageSet:
        if context is None:
            raise InvalidRangeError(
                "GreedyAdaptiveAttacker requires a simulation context"
            )
        return greedy_adaptive_attack(
            context.evaluate,
            msgs,
            budget,
            self.candidate_payloads,
            exhaustive_limit=self.exhaustive_limit,
            channels=channels,
        )
