"""Exact combinatorics behind the robustness certificates.

Everything here is integer or rational arithmetic: binomial counts, the
dominating-benign-sample feasibility condition, worst-case vote bounds, and
the hypergeometric success probabilities of partial-sample ensembles.
Floats appear only at reporting boundaries (and only on request).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Literal, Optional, Union

from .errors import ConditionViolatedError, InvalidRangeError

# Closed-form paths accept configs up to this many agents; exhaustive
# enumeration elsewhere in the package caps at 64.
MAX_AGENTS = 512

ActionKind = Literal["discrete", "continuous"]


def binomial(n: int, r: int) -> int:
    """Exact C(n, r); returns 0 for r > n or any negative argument."""
    if n < 0 or r < 0 or r > n:
        return 0
    return math.comb(n, r)


def _check_counts(n_agents: int, n_adversaries: int, ablation_size: int) -> None:
    if not 2 <= n_agents <= MAX_AGENTS:
        raise InvalidRangeError(
            f"n_agents must be in [2, {MAX_AGENTS}], got {n_agents}"
        )
    if not 0 <= n_adversaries <= n_agents - 1:
        raise InvalidRangeError(
            f"n_adversaries must be in [0, {n_agents - 1}], got {n_adversaries}"
        )
    if not 1 <= ablation_size <= n_agents - 1:
        raise InvalidRangeError(
            f"ablation_size must be in [1, {n_agents - 1}], got {ablation_size}"
        )


@dataclass(frozen=True)
class EnsembleConfig:
    """Counts that define one ensemble instance.

    ``n1`` (total k-subsets of the received messages), ``n2`` (k-subsets
    avoiding every corruptible channel) and ``u_adv`` (votes an attacker
    can touch) are derived on access so they can never go stale.
    """

    n_agents: int
    n_adversaries: int
    ablation_size: int
    sample_size: Optional[int] = None  # None means the full ensemble (D = n1)
    action_kind: ActionKind = "discrete"

    def __post_init__(self) -> None:
        _check_counts(self.n_agents, self.n_adversaries, self.ablation_size)
        if self.action_kind not in ("discrete", "continuous"):
            raise InvalidRangeError(f"unknown action_kind {self.action_kind!r}")
        if self.sample_size is not None and not 1 <= self.sample_size <= self.n1:
            raise InvalidRangeError(
                f"sample_size must be in [1, {self.n1}], got {self.sample_size}"
            )

    @property
    def n_channels(self) -> int:
        return self.n_agents - 1

    @property
    def n1(self) -> int:
        return binomial(self.n_agents - 1, self.ablation_size)

    @property
    def n2(self) -> int:
        return binomial(self.n_agents - 1 - self.n_adversaries, self.ablation_size)

    @property
    def u_adv(self) -> int:
        return self.n1 - self.n2

    @property
    def effective_sample_size(self) -> int:
        return self.n1 if self.sample_size is None else self.sample_size

    @property
    def is_full_ensemble(self) -> bool:
        return self.effective_sample_size == self.n1


def dominating_benign_holds(n_agents: int, n_adversaries: int, ablation_size: int) -> bool:
    """Whether purely benign k-subsets strictly outnumber contaminated ones.

    Evaluates 2 * C(N-1-C, k) > C(N-1, k) in exact integer arithmetic.
    """
    _check_counts(n_agents, n_adversaries, ablation_size)
    n1 = binomial(n_agents - 1, ablation_size)
    n2 = binomial(n_agents - 1 - n_adversaries, ablation_size)
    return 2 * n2 > n1


def max_certifiable_k(n_agents: int, n_adversaries: int) -> Optional[int]:
    """Largest ablation size whose certificate condition holds, or None.

    None means no ablation size works, which happens exactly when the
    adversary controls at least half the channels (C >= (N-1)/2); any
    smaller C admits k = 1.
    """
    if not 2 <= n_agents <= MAX_AGENTS:
        raise InvalidRangeError(f"n_agents must be in [2, {MAX_AGENTS}], got {n_agents}")
    if n_adversaries < 0:
        raise InvalidRangeError(f"n_adversaries must be >= 0, got {n_adversaries}")
    if n_adversaries > n_agents - 1:
        return None
    # Feasibility is downward-closed in k, so scan from the top.
    for k in range(n_agents - 1, 0, -1):
        if dominating_benign_holds(n_agents, n_adversaries, k):
            return k
    return None


def max_certifiable_C(n_agents: int, ablation_size: int) -> int:
    """Largest adversary count the given ablation size can certify against.

    Returns 0 when even a single corrupted channel breaks the condition.
    """
    _check_counts(n_agents, 0, ablation_size)
    # The condition is monotone decreasing in C: scan upward until it fails.
    best = 0
    for c in range(1, n_agents):
        if dominating_benign_holds(n_agents, c, ablation_size):
            best = c
        else:
            break
    return best


def adversarial_vote_bound(n_agents: int, n_adversaries: int, ablation_size: int) -> int:
    """Number of ensemble votes that corrupted channels can reach.

    u_adv = C(N-1, k) - C(N-1-C, k): the count of k-subsets containing at
    least one corruptible channel.
    """
    _check_counts(n_agents, n_adversaries, ablation_size)
    return binomial(n_agents - 1, ablation_size) - binomial(
        n_agents - 1 - n_adversaries, ablation_size
    )


def _partial_sample_frac_discrete(
    n1: int, n2: int, sample_size: int, u_max: int
) -> Fraction:
    if u_max > n1 - n2:
        return Fraction(1)
    total = binomial(n1, sample_size)
    hits = sum(
        binomial(n1 - n2, j) * binomial(n2, sample_size - j) for j in range(u_max)
    )
    return Fraction(hits, total)


def partial_sample_prob_discrete(
    n_agents: int,
    n_adversaries: int,
    ablation_size: int,
    sample_size: int,
    u_max: int,
    *,
    exact: bool = False,
) -> Union[float, Fraction]:
    """Probability that a D-sample vote with top count u_max is certified.

    Certification is guaranteed (probability 1) once u_max exceeds the
    number of contaminated k-subsets, n1 - n2. Below that threshold the
    draw succeeds iff fewer than u_max of the D sampled subsets are
    contaminated, a hypergeometric tail:

        sum_{j=0}^{u_max-1} C(n1-n2, j) * C(n2, D-j) / C(n1, D)

    Computed as an exact rational; pass ``exact=True`` to get it uncast.
    """
    _check_counts(n_agents, n_adversaries, ablation_size)
    n1 = binomial(n_agents - 1, ablation_size)
    n2 = binomial(n_agents - 1 - n_adversaries, ablation_size)
    if not 1 <= sample_size <= n1:
        raise InvalidRangeError(f"sample_size must be in [1, {n1}], got {sample_size}")
    if not 0 <= u_max <= sample_size:
        raise InvalidRangeError(f"u_max must be in [0, {sample_size}], got {u_max}")
    p = _partial_sample_frac_discrete(n1, n2, sample_size, u_max)
    return p if exact else float(p)


def _partial_sample_frac_continuous(n1: int, n2: int, sample_size: int) -> Fraction:
    total = binomial(n1, sample_size)
    hits = sum(
        binomial(n2, j) * binomial(n1 - n2, sample_size - j)
        for j in range(sample_size // 2 + 1, sample_size + 1)
    )
    return Fraction(hits, total)


def partial_sample_prob_continuous(
    n_agents: int,
    n_adversaries: int,
    ablation_size: int,
    sample_size: int,
    *,
    exact: bool = False,
) -> Union[float, Fraction]:
    """Probability that a D-sample draw contains a purely-benign majority.

        sum_{j=floor(D/2)+1}^{D} C(n2, j) * C(n1-n2, D-j) / C(n1, D)

    Requires the dominating-benign condition; raises otherwise since the
    median guarantee has no meaning without it.
    """
    if not dominating_benign_holds(n_agents, n_adversaries, ablation_size):
        raise ConditionViolatedError(
            f"dominating-benign condition fails for N={n_agents}, "
            f"C={n_adversaries}, k={ablation_size}"
        )
    n1 = binomial(n_agents - 1, ablation_size)
    n2 = binomial(n_agents - 1 - n_adversaries, ablation_size)
    if not 1 <= sample_size <= n1:
        raise InvalidRangeError(f"sample_size must be in [1, {n1}], got {sample_size}")
    p = _partial_sample_frac_continuous(n1, n2, sample_size)
    return p if exact else float(p)
