"""Desk-scale deterministic environments with scripted base policies.

Two environments exercise the two action kinds: a gridworld where scouts
report a food location (discrete moves) and an inventory game where peers
report observed demand (continuous restocks). Transitions, message
generation, and demand draws are all pure functions of the reset seed, so
a (env seed, attacker seed, ensemble seed) triple pins down a trajectory.
"""

from __future__ import annotations

import copy
import math
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from .ensemble import (
    AblationPolicy,
    KSample,
    MessageSet,
    ensemble_act_continuous,
    ensemble_act_discrete,
    ensemble_act_partial_continuous,
    ensemble_act_partial_discrete,
    enumerate_k_samples,
    sample_k_samples,
)
from .errors import (
    ConfigError,
    DimensionMismatchError,
    EpisodeFinishedError,
    InvalidRangeError,
)
from .threat import AttackBudget, AttackContext

DEFAULT_GAMMA = 0.99

# 9 grid actions: stay plus the 8 compass directions.
GRID_DIRS: Tuple[Tuple[int, int], ...] = (
    (0, 0),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
)
_DIR_TO_ACTION = {d: i for i, d in enumerate(GRID_DIRS)}


def _sign(x: float) -> int:
    return (x > 0) - (x < 0)


# --- Trajectories ---------------------------------------------------------------


@dataclass
class StepRecord:
    """One environment step as seen by the harness."""

    index: int
    observation: object
    benign_msgs: MessageSet
    msgs: MessageSet
    action: object
    reward: float


@dataclass
class Trajectory:
    """Episode record with benign and delivered message sets per step."""

    steps: List[StepRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def total_reward(self) -> float:
        return sum(s.reward for s in self.steps)

    def discounted_return(self, gamma: float = DEFAULT_GAMMA) -> float:
        return sum(s.reward * gamma**i for i, s in enumerate(self.steps))

    def to_lines(self, verdicts: Optional[Sequence[str]] = None) -> List[str]:
        """One line per step: index, action, reward, tamper mask, verdict."""
        lines = []
        for i, s in enumerate(self.steps):
            action = s.action
            if isinstance(action, np.ndarray):
                action_txt = ";".join(format(float(x), ".10g") for x in action)
            else:
                action_txt = str(action)
            mask = "".join("1" if b else "0" for b in s.msgs.tamper_mask)
            verdict = verdicts[i] if verdicts is not None else "-"
            lines.append(f"{s.index},{action_txt},{s.reward:.10g},{mask},{verdict}")
        return lines


@dataclass(frozen=True)
class Seeds:
    """The three named seeds every run is reproducible from."""

    env: int = 0
    attack: int = 0
    ensemble: int = 0


# --- Victim decision rules ------------------------------------------------------


class EnsembleVictim:
    """Acts through the vote/median ensemble of a base policy.

    ``sample_size=None`` evaluates every k-subset; a smaller value draws
    that many subsets per step from the ensemble seed stream.
    """

    def __init__(
        self,
        policy: AblationPolicy,
        ablation_size: int,
        action_kind: str,
        sample_size: Optional[int] = None,
    ):
        if action_kind not in ("discrete", "continuous"):
            raise ConfigError(f"unknown action_kind {action_kind!r}")
        self.policy = policy
        self.ablation_size = ablation_size
        self.action_kind = action_kind
        self.sample_size = sample_size
        self._rng = random.Random(0)
        self.last_votes: Optional[dict] = None

    def reset(self, seed: int) -> None:
        self._rng = random.Random(seed)

    def fork(self, seed: int) -> "EnsembleVictim":
        clone = EnsembleVictim(
            self.policy, self.ablation_size, self.action_kind, self.sample_size
        )
        clone.reset(seed)
        return clone

    def act(self, history, msgs: MessageSet):
        k = self.ablation_size
        if self.action_kind == "discrete":
            if self.sample_size is None:
                action, votes = ensemble_act_discrete(self.policy, history, msgs, k)
            else:
                action, votes = ensemble_act_partial_discrete(
                    self.policy, history, msgs, k, self.sample_size, self._rng
                )
            self.last_votes = votes
            return action
        if self.sample_size is None:
            return ensemble_act_continuous(self.policy, history, msgs, k)
        return ensemble_act_partial_continuous(
            self.policy, history, msgs, k, self.sample_size, self._rng
        )


class StreamAblationVictim:
    """Base policy driven by a predetermined stream of index subsets.

    This is the clean-rollout oracle: enumerating every stream of subsets
    enumerates every trajectory the randomly-ablated base policy can
    produce.
    """

    def __init__(
        self,
        policy: AblationPolicy,
        ablation_size: int,
        index_stream: Iterable[Tuple[int, ...]],
    ):
        self.policy = policy
        self.ablation_size = ablation_size
        self._stream: Iterator[Tuple[int, ...]] = iter(index_stream)

    def reset(self, seed: int) -> None:  # stream fixed at construction
        pass

    def act(self, history, msgs: MessageSet):
        indices = next(self._stream)
        if len(indices) != self.ablation_size:
            raise InvalidRangeError(
                f"stream yielded {len(indices)} indices, expected {self.ablation_size}"
            )
        return self.policy.act(history, KSample.from_message_set(msgs, indices))


class RandomAblationVictim:
    """Base policy on one uniformly drawn k-subset per step."""

    def __init__(self, policy: AblationPolicy, ablation_size: int):
        self.policy = policy
        self.ablation_size = ablation_size
        self._rng = random.Random(0)

    def reset(self, seed: int) -> None:
        self._rng = random.Random(seed)

    def act(self, history, msgs: MessageSet):
        sample = sample_k_samples(msgs, self.ablation_size, 1, self._rng)[0]
        return self.policy.act(history, sample)


# --- GridFood -------------------------------------------------------------------


@dataclass
class GridFoodEnv:
    """Gridworld where N-1 scouts report the food cell to the victim.

    Benign reports all equal the true food coordinate; ``report_noise``
    adds a per-scout integer offset (drawn once per episode) so purely
    benign k-subsets can disagree. Every step costs ``step_penalty`` until
    the victim stands on the food.
    """

    width: int = 15
    height: int = 15
    n_agents: int = 9
    horizon: int = 40
    report_noise: int = 0
    step_penalty: float = -0.5

    def __post_init__(self) -> None:
        if self.n_agents < 2:
            raise ConfigError("need at least 2 agents")
        if self.width < 2 or self.height < 2:
            raise ConfigError("grid must be at least 2x2")
        self._pos: Tuple[int, int] = (0, 0)
        self._food: Tuple[int, int] = (0, 0)
        self._offsets: Tuple[Tuple[int, int], ...] = ()
        self._steps = 0
        self._reached = False
        self.done = True

    @property
    def n_channels(self) -> int:
        return self.n_agents - 1

    @property
    def action_kind(self) -> str:
        return "discrete"

    def payload_box(self) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        """Valid report range: the grid itself."""
        return (0.0, 0.0), (float(self.width - 1), float(self.height - 1))

    def reset(self, seed: int) -> Tuple[int, int]:
        rng = random.Random(seed)
        self._pos = (rng.randrange(self.width), rng.randrange(self.height))
        while True:
            self._food = (rng.randrange(self.width), rng.randrange(self.height))
            if self._food != self._pos:
                break
        amp = self.report_noise
        self._offsets = tuple(
            (rng.randint(-amp, amp), rng.randint(-amp, amp))
            for _ in range(self.n_channels)
        )
        self._steps = 0
        self._reached = False
        self.done = False
        return self.observation()

    def observation(self) -> Tuple[int, int]:
        return self._pos

    def _clamp(self, x: int, y: int) -> Tuple[int, int]:
        return (
            min(max(x, 0), self.width - 1),
            min(max(y, 0), self.height - 1),
        )

    def benign_messages(self) -> MessageSet:
        payloads = []
        for dx, dy in self._offsets:
            rx, ry = self._clamp(self._food[0] + dx, self._food[1] + dy)
            payloads.append((float(rx), float(ry)))
        return MessageSet.from_payloads(payloads)

    def step(self, action: int) -> Tuple[Tuple[int, int], float, bool]:
        if self.done:
            raise EpisodeFinishedError("episode already finished")
        if not 0 <= action < len(GRID_DIRS):
            raise InvalidRangeError(f"action must be in [0, {len(GRID_DIRS) - 1}]")
        dx, dy = GRID_DIRS[action]
        self._pos = self._clamp(self._pos[0] + dx, self._pos[1] + dy)
        reward = 0.0 if self._reached else self.step_penalty
        self._steps += 1
        if self._pos == self._food:
            self._reached = True
        self.done = self._reached or self._steps >= self.horizon
        return self.observation(), reward, self.done

    def copy(self) -> "GridFoodEnv":
        return copy.deepcopy(self)

    def value_bound(self, gamma: float = DEFAULT_GAMMA) -> float:
        """Analytic bound on |discounted return|: every step costs at most 0.5."""
        r_max = abs(self.step_penalty)
        if gamma >= 1.0:
            return r_max * self.horizon
        return r_max * (1 - gamma**self.horizon) / (1 - gamma)

    # Model access for discrepancy estimation: a state is (pos, reached, steps).

    def model_state(self):
        return (self._pos, self._reached, self._steps)

    def history_for(self, state):
        return state[0]

    def benign_messages_for(self, state) -> MessageSet:
        saved = self.model_state()
        self._pos, self._reached, self._steps = state
        try:
            return self.benign_messages()
        finally:
            self._pos, self._reached, self._steps = saved

    def reward_fn(self, state, action: int) -> float:
        _, reached, _ = state
        return 0.0 if reached else self.step_penalty

    def transition_fn(self, state, action: int):
        (x, y), reached, steps = state
        dx, dy = GRID_DIRS[action]
        pos = self._clamp(x + dx, y + dy)
        return (pos, reached or pos == self._food, steps + 1)


class GridFoodScriptedPolicy:
    """Move one step toward the coordinate-wise median of the sampled reports."""

    def act(self, history, sample: KSample) -> int:
        px, py = history
        xs = sorted(p[0] for p in sample.payloads)
        ys = sorted(p[1] for p in sample.payloads)
        mid = len(xs) // 2
        if len(xs) % 2:
            tx, ty = xs[mid], ys[mid]
        else:
            tx = (xs[mid - 1] + xs[mid]) / 2.0
            ty = (ys[mid - 1] + ys[mid]) / 2.0
        return _DIR_TO_ACTION[(_sign(tx - px), _sign(ty - py))]


# --- DemandShare ----------------------------------------------------------------


@dataclass
class DemandShareEnv:
    """Inventory game: restock against demand reported by peers.

    Each agent observes a per-step demand realization (a multinomial draw
    of its buyers over the products); peers send their previous-step
    observations as messages. The victim restocks, the step's demand
    realizes, and the reward is the negative Euclidean mismatch between
    post-restock inventory and demand. Leftover inventory carries over,
    floored at zero.
    """

    n_agents: int = 10
    n_products: int = 3
    horizon: int = 50
    n_buyers: int = 300
    demand_profile: Optional[Tuple[float, ...]] = None

    def __post_init__(self) -> None:
        if self.n_agents < 2:
            raise ConfigError("need at least 2 agents")
        if self.n_buyers % self.n_agents:
            raise ConfigError("n_buyers must split evenly across agents")
        self._inventory = np.zeros(self.n_products)
        self._demands = np.zeros((1, self.n_agents, self.n_products))
        self._t = 0
        self.done = True

    @property
    def n_channels(self) -> int:
        return self.n_agents - 1

    @property
    def action_kind(self) -> str:
        return "continuous"

    @property
    def buyers_per_agent(self) -> int:
        return self.n_buyers // self.n_agents

    def reset(self, seed: int):
        gen = np.random.default_rng(seed)
        if self.demand_profile is not None:
            profile = np.asarray(self.demand_profile, dtype=float)
            if profile.shape != (self.n_products,):
                raise DimensionMismatchError(
                    f"demand_profile must have {self.n_products} entries"
                )
            profile = profile / profile.sum()
        else:
            profile = gen.dirichlet(np.ones(self.n_products))
        # demands[t] holds what every agent observed before step t; the
        # demand realized during step t is demands[t + 1].
        self._demands = gen.multinomial(
            self.buyers_per_agent,
            profile,
            size=(self.horizon + 1, self.n_agents),
        ).astype(float)
        self._inventory = gen.uniform(0, self.buyers_per_agent, self.n_products)
        self._t = 0
        self.done = False
        return self.observation()

    def observation(self) -> Tuple[Tuple[float, ...], Tuple[float, ...]]:
        own = self._demands[self._t, 0]
        return (tuple(self._inventory), tuple(own))

    def benign_messages(self) -> MessageSet:
        others = self._demands[self._t, 1:]
        return MessageSet.from_payloads([tuple(row) for row in others])

    def step(self, action) -> Tuple[object, float, bool]:
        if self.done:
            raise EpisodeFinishedError("episode already finished")
        vec = np.asarray(action, dtype=float)
        if vec.shape != (self.n_products,):
            raise DimensionMismatchError(
                f"action must have {self.n_products} coordinates, got shape {vec.shape}"
            )
        stocked = np.maximum(self._inventory + vec, 0.0)
        demand = self._demands[self._t + 1, 0]
        reward = -float(np.linalg.norm(stocked - demand))
        self._inventory = np.maximum(stocked - demand, 0.0)
        self._t += 1
        self.done = self._t >= self.horizon
        return self.observation(), reward, self.done

    def copy(self) -> "DemandShareEnv":
        return copy.deepcopy(self)

    def value_bound(self, gamma: float = DEFAULT_GAMMA) -> float:
        """Bound on |discounted return| while restocks track demand estimates.

        Scripted restocks keep post-restock inventory inside the demand
        box [0, buyers_per_agent]^M, so each step's mismatch is at most
        the box diagonal.
        """
        r_max = math.sqrt(self.n_products) * self.buyers_per_agent
        if gamma >= 1.0:
            return r_max * self.horizon
        return r_max * (1 - gamma**self.horizon) / (1 - gamma)

    # Model access: a state is (t, inventory tuple).

    def model_state(self):
        return (self._t, tuple(self._inventory))

    def history_for(self, state):
        t, inv = state
        return (inv, tuple(self._demands[t, 0]))

    def benign_messages_for(self, state) -> MessageSet:
        t, _ = state
        return MessageSet.from_payloads(
            [tuple(row) for row in self._demands[t, 1:]]
        )

    def reward_fn(self, state, action) -> float:
        t, inv = state
        stocked = np.maximum(np.asarray(inv) + np.asarray(action, dtype=float), 0.0)
        return -float(np.linalg.norm(stocked - self._demands[t + 1, 0]))

    def transition_fn(self, state, action):
        t, inv = state
        stocked = np.maximum(np.asarray(inv) + np.asarray(action, dtype=float), 0.0)
        nxt = np.maximum(stocked - self._demands[t + 1, 0], 0.0)
        return (t + 1, tuple(nxt))


class DemandShareScriptedPolicy:
    """Restock toward the mean of own and sampled demand observations."""

    def act(self, history, sample: KSample) -> np.ndarray:
        inventory, own_demand = history
        rows = [np.asarray(own_demand, dtype=float)]
        rows.extend(np.asarray(p, dtype=float) for p in sample.payloads)
        return np.mean(rows, axis=0) - np.asarray(inventory, dtype=float)


# --- Episode harness ------------------------------------------------------------

Env = Union[GridFoodEnv, DemandShareEnv]


def simulate_return(
    env: Env,
    victim,
    first_msgs: MessageSet,
    horizon: int,
    ensemble_seed: int,
) -> float:
    """Victim's undiscounted return over ``horizon`` steps from the env's
    current state, with ``first_msgs`` delivered now and benign messages
    afterwards."""
    sim = env.copy()
    sim_victim = victim.fork(ensemble_seed) if hasattr(victim, "fork") else victim
    history = sim.observation()
    total = 0.0
    msgs = first_msgs
    for _ in range(horizon):
        if sim.done:
            break
        action = sim_victim.act(history, msgs)
        history, reward, _ = sim.step(action)
        total += reward
        msgs = sim.benign_messages()
    return total


def make_attack_context(
    env: Env,
    victim,
    horizon: int,
    rng: random.Random,
    seed_aware: bool = False,
    victim_seed: Optional[int] = None,
) -> AttackContext:
    """Simulation hook for adaptive attackers.

    Seed-blind (default): the attacker evaluates candidates under its own
    guess of the victim's ensemble seed, drawn from the attacker rng.
    Seed-aware: it simulates with the victim's actual seed.
    """
    if seed_aware:
        if victim_seed is None:
            raise ConfigError("seed-aware attack needs the victim's ensemble seed")
        eval_seed = victim_seed
    else:
        eval_seed = rng.randrange(2**32)
    return AttackContext(
        evaluate=lambda msgs: simulate_return(env, victim, msgs, horizon, eval_seed)
    )


def run_episode(
    env: Env,
    victim,
    attacker=None,
    budget: Optional[AttackBudget] = None,
    seeds: Seeds = Seeds(),
    attack_horizon: int = 5,
    seed_aware_attacker: bool = False,
) -> Trajectory:
    """Roll one episode: observe, receive (possibly attacked) messages, act.

    The attacker, when present, is called every step with the benign set;
    with a fixed-set budget the attacked channels are drawn once per
    episode from the attacker seed.
    """
    if attacker is not None and budget is None:
        raise ConfigError("an attacker needs an AttackBudget")
    history = env.reset(seeds.env)
    if hasattr(victim, "reset"):
        victim.reset(seeds.ensemble)
    attack_rng = random.Random(seeds.attack)
    fixed_channels: Optional[List[int]] = None
    if attacker is not None and budget.channel_policy == "fixed":
        budget.validate_for(env.n_channels)
        fixed_channels = sorted(attack_rng.sample(range(env.n_channels), budget.c))

    traj = Trajectory()
    index = 0
    while not env.done:
        benign = env.benign_messages()
        if attacker is None:
            msgs = benign
        else:
            context = make_attack_context(
                env,
                victim,
                attack_horizon,
                attack_rng,
                seed_aware=seed_aware_attacker,
                victim_seed=seeds.ensemble if seed_aware_attacker else None,
            )
            msgs = attacker.attack(
                benign, budget, attack_rng, channels=fixed_channels, context=context
            )
        action = victim.act(history, msgs)
        observation, reward, _ = env.step(action)
        traj.steps.append(
            StepRecord(
                index=index,
                observation=history,
                benign_msgs=benign,
                msgs=msgs,
                action=action,
                reward=reward,
            )
        )
        history = observation
        index += 1
    return traj
