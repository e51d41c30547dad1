"""Deterministic-policy-gradient learner for one forecasting client.

Four networks (main/target actor and critic), a ring replay buffer, and
the three-step update: regress the critic onto the bootstrapped target,
ascend the critic's action gradient through the actor, then softly blend
the mains into the targets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ProtocolError, ShapeError, StateError


@dataclass(frozen=True)
class DdpgConfig:
    gamma: float = 0.9
    tau: float = 0.01
    minibatch_size: int = 64
    buffer_capacity: int = 10_000
    actor_lr: float = 0.0003
    critic_lr: float = 0.003
    noise_sigma_initial: float = 0.1
    noise_sigma_decay: float = 0.995
    actor_hidden: int = 30
    critic_hidden: int = 28
    optimizer: str = "adam"  # "adam" | "sgd"

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.minibatch_size < 1 or self.buffer_capacity < 1:
            raise ValueError("minibatch_size and buffer_capacity must be positive")
        if self.minibatch_size > self.buffer_capacity:
            raise ValueError("minibatch_size cannot exceed buffer_capacity")
        if self.actor_lr <= 0.0 or self.critic_lr <= 0.0:
            raise ValueError("learning rates must be positive")
        if self.noise_sigma_initial < 0.0 or self.noise_sigma_decay < 0.0:
            raise ValueError("noise parameters must be nonnegative")
        if self.actor_hidden < 1 or self.critic_hidden < 1:
            raise ValueError("hidden widths must be >= 1")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass(frozen=True)
class Transition:
    """One (state, action, reward, next_state) step of an episode."""

    state: np.ndarray
    action: float
    reward: float
    next_state: np.ndarray

    def __post_init__(self) -> None:
        state = np.asarray(self.state, dtype=np.float64)
        next_state = np.asarray(self.next_state, dtype=np.float64)
        if state.ndim != 1 or state.shape != next_state.shape:
            raise ShapeError("state and next_state must be equal-length vectors")
        if not 0.0 <= self.action <= 1.0:
            raise ValueError(f"action {self.action} outside [0, 1]")
        if self.reward > 0.0:
            raise ValueError(f"reward {self.reward} must be <= 0")
        object.__setattr__(self, "state", state)
        object.__setattr__(self, "next_state", next_state)


class ReplayBuffer:
    """Fixed-capacity ring of transitions; eviction is oldest-first."""

    def __init__(self, capacity: int, state_dim: int) -> None:
        if capacity < 1 or state_dim < 1:
            raise ValueError("capacity and state_dim must be positive")
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity)
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.inserted = 0

    def __len__(self) -> int:
        return min(self.inserted, self.capacity)

    def add(self, transition: Transition) -> None:
        if transition.state.size != self.states.shape[1]:
            raise ShapeError(
                f"transition state length {transition.state.size} does not match "
                f"buffer state_dim {self.states.shape[1]}"
            )
        slot = self.inserted % self.capacity
        self.states[slot] = transition.state
        self.actions[slot] = transition.action
        self.rewards[slot] = transition.reward
        self.next_states[slot] = transition.next_state
        self.inserted += 1

    def sample(self, rng: np.random.Generator, size: int
               ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        n = len(self)
        if n < size:
            raise StateError(f"buffer holds {n} transitions, cannot sample {size}")
        idx = rng.integers(0, n, size=size)
        return (self.states[idx].copy(), self.actions[idx].copy(),
                self.rewards[idx].copy(), self.next_states[idx].copy())


@dataclass(frozen=True)
class AgentParams:
    """The four network parameter sets a client exchanges with the server."""

    actor_main: nn.NetworkParams
    actor_target: nn.NetworkParams
    critic_main: nn.NetworkParams
    critic_target: nn.NetworkParams

    def as_tuple(self) -> tuple[nn.NetworkParams, ...]:
        return (self.actor_main, self.actor_target, self.critic_main, self.critic_target)

    def copy(self) -> "AgentParams":
        return AgentParams(*(p.copy() for p in self.as_tuple()))


Batch = tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]


def _coerce_batch(minibatch) -> Batch:
    if isinstance(minibatch, tuple) and len(minibatch) == 4:
        states, actions, rewards, next_states = minibatch
        states = np.asarray(states, dtype=np.float64)
        if states.ndim != 2 or states.shape[0] == 0:
            raise ProtocolError("batch must contain at least one transition")
        return (states, np.asarray(actions, dtype=np.float64),
                np.asarray(rewards, dtype=np.float64),
                np.asarray(next_states, dtype=np.float64))
    transitions = list(minibatch)
    if not transitions:
        raise ProtocolError("batch must contain at least one transition")
    return (np.stack([t.state for t in transitions]),
            np.array([t.action for t in transitions]),
            np.array([t.reward for t in transitions]),
            np.stack([t.next_state for t in transitions]))


def _blend(main: nn.NetworkParams, target: nn.NetworkParams, tau: float) -> nn.NetworkParams:
    return nn.NetworkParams(
        [tau * wm + (1.0 - tau) * wt for wm, wt in zip(main.weights, target.weights)],
        [tau * bm + (1.0 - tau) * bt for bm, bt in zip(main.biases, target.biases)],
        list(main.activations),
    )


def _negate(params: nn.NetworkParams) -> nn.NetworkParams:
    return nn.NetworkParams([-w for w in params.weights], [-b for b in params.biases],
                            list(params.activations))


class DdpgAgent:
    """One client's learner. Single-threaded; distinct agents share nothing."""

    def __init__(self, state_dim: int, config: DdpgConfig | None = None,
                 seed: int | None = 0, rng: np.random.Generator | None = None) -> None:
        if state_dim < 1:
            raise ValueError("state_dim must be >= 1")
        self.state_dim = state_dim
        self.config = config if config is not None else DdpgConfig()
        self.rng = rng if rng is not None else np.random.default_rng(seed)

        cfg = self.config
        actor_spec = [nn.LayerSpec(state_dim, cfg.actor_hidden, "relu"),
                      nn.LayerSpec(cfg.actor_hidden, 1, "sigmoid")]
        critic_spec = [nn.LayerSpec(state_dim + 1, cfg.critic_hidden, "relu"),
                       nn.LayerSpec(cfg.critic_hidden, 1, "linear")]
        self.actor_main = nn.init_params(actor_spec, self.rng)
        self.critic_main = nn.init_params(critic_spec, self.rng)
        self.actor_target = self.actor_main.copy()
        self.critic_target = self.critic_main.copy()
        self.actor_opt = nn.OptimizerState.for_params(self.actor_main, cfg.actor_lr,
                                                      cfg.optimizer)
        self.critic_opt = nn.OptimizerState.for_params(self.critic_main, cfg.critic_lr,
                                                       cfg.optimizer)
        self.buffer = ReplayBuffer(cfg.buffer_capacity, state_dim)
        self.noise_sigma = cfg.noise_sigma_initial

    def act(self, state: np.ndarray, explore: bool = False) -> float:
        """Policy output for one state; optional clamped Gaussian exploration."""
        state = np.asarray(state, dtype=np.float64)
        if state.ndim != 1 or state.size != self.state_dim:
            raise ShapeError(f"state must be a vector of length {self.state_dim}")
        out, _ = nn.forward(self.actor_main, state)
        action = float(out[0])
        if explore:
            action += float(self.rng.normal(0.0, self.noise_sigma))
        return min(max(action, 0.0), 1.0)

    def decay_noise(self) -> None:
        self.noise_sigma *= self.config.noise_sigma_decay

    def critic_update(self, minibatch) -> float:
        """Regress the critic onto r + gamma * targetQ'(s', targetPi(s')).

        Returns the mean-squared error before the step. Target networks and
        the actor are untouched.
        """
        states, actions, rewards, next_states = _coerce_batch(minibatch)
        batch = states.shape[0]

        next_actions, _ = nn.forward(self.actor_target, next_states)
        target_in = np.concatenate([next_states, next_actions], axis=1)
        next_q, _ = nn.forward(self.critic_target, target_in)
        target_q = rewards[:, None] + self.config.gamma * next_q

        critic_in = np.concatenate([states, actions[:, None]], axis=1)
        q, tape = nn.forward(self.critic_main, critic_in)
        err = q - target_q
        loss = float(np.mean(err * err))

        grads, _ = nn.backward(self.critic_main, tape, (2.0 / batch) * err)
        self.critic_main, self.critic_opt = nn.apply_gradients(
            self.critic_main, grads, self.critic_opt)
        return loss

    def actor_update(self, minibatch) -> float:
        """Ascend the sampled policy gradient; only the main actor changes.

        Returns the pre-step mean critic value of the policy's own actions.
        """
        states, _, _, _ = _coerce_batch(minibatch)
        batch = states.shape[0]

        actions, actor_tape = nn.forward(self.actor_main, states)
        critic_in = np.concatenate([states, actions], axis=1)
        q, critic_tape = nn.forward(self.critic_main, critic_in)
        mean_q = float(np.mean(q))

        _, input_grad = nn.backward(self.critic_main, critic_tape, np.ones_like(q))
        dq_da = input_grad[:, -1:]
        ascent, _ = nn.backward(self.actor_main, actor_tape, dq_da / batch)
        self.actor_main, self.actor_opt = nn.apply_gradients(
            self.actor_main, _negate(ascent), self.actor_opt)
        return mean_q

    def soft_update(self) -> None:
        """target <- tau * main + (1 - tau) * target, both network pairs."""
        tau = self.config.tau
        self.actor_target = _blend(self.actor_main, self.actor_target, tau)
        self.critic_target = _blend(self.critic_main, self.critic_target, tau)

    def train_step(self) -> None:
        """One minibatch pass: critic, then actor, then target blend."""
        batch = self.buffer.sample(self.rng, self.config.minibatch_size)
        self.critic_update(batch)
        self.actor_update(batch)
        self.soft_update()

    def export_params(self) -> AgentParams:
        """Deep copy of all four networks; later agent updates do not leak in."""
        return AgentParams(self.actor_main.copy(), self.actor_target.copy(),
                           self.critic_main.copy(), self.critic_target.copy())

    def import_params(self, params: AgentParams) -> None:
        """Replace all four networks; optimizer moments are reset."""
        if params.actor_main.shape_signature != self.actor_main.shape_signature or \
           params.actor_target.shape_signature != self.actor_target.shape_signature or \
           params.critic_main.shape_signature != self.critic_main.shape_signature or \
           params.critic_target.shape_signature != self.critic_target.shape_signature:
            raise ProtocolError("imported parameters do not match agent network shapes")
        self.actor_main = params.actor_main.copy()
        self.actor_target = params.actor_target.copy()
        self.critic_main = params.critic_main.copy()
        self.critic_target = params.critic_target.copy()
        cfg = self.config
        self.actor_opt = nn.OptimizerState.for_params(self.actor_main, cfg.actor_lr,
                                                      cfg.optimizer)
        self.critic_opt = nn.OptimizerState.for_params(self.critic_main, cfg.critic_lr,
                                                       cfg.optimizer)

    def check_finite(self) -> bool:
        """True iff every parameter in all four networks is finite."""
        nets = (self.actor_main, self.actor_target, self.critic_main, self.critic_target)
        return all(
            np.isfinite(a).all()
            for net in nets
            for a in (*net.weights, *net.biases)
        )
