"""Federated orchestration: clients, parameter server, and load accounting.

Clients train locally on private series; only serialized network
parameters ever cross the client boundary. The server aggregates uploads
by plain arithmetic averaging on a fixed synchronization schedule and
broadcasts the result back.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import env as fenv
from . import nn
from .data import TimeSeries, split
from .ddpg import AgentParams, DdpgAgent, DdpgConfig, Transition
from .errors import DataError, FormatError, NumericError, ProtocolError
from .metrics import EvalSeries, MetricsReport

# Fixed tags keep every seeded stream distinct and scheduling-independent.
_CLIENT_TAG = 11
_SELECT_TAG = 23
_CENTRAL_TAG = 37
_GLOBAL_TAG = 53


@dataclass(frozen=True)
class FedConfig:
    """Protocol knobs: population, sampling ratio, schedule, and seed."""

    num_clients: int
    client_ratio: float = 1.0
    sync_interval: int = 100
    global_epochs: int = 200
    local_episodes: int = 2
    master_seed: int = 0

    def __post_init__(self) -> None:
        if self.num_clients < 1:
            raise ValueError("num_clients must be >= 1")
        if not 0.0 < self.client_ratio <= 1.0:
            raise ValueError("client_ratio must lie in (0, 1]")
        if self.sync_interval < 1 or self.global_epochs < 1 or self.local_episodes < 1:
            raise ValueError("sync_interval, global_epochs, local_episodes must be >= 1")
        if self.sync_interval > self.global_epochs:
            raise ValueError("sync_interval cannot exceed global_epochs")

    @property
    def num_selected(self) -> int:
        # Tiny slack keeps float products like 0.7 * 10 from ceiling to 8.
        return max(1, math.ceil(self.client_ratio * self.num_clients - 1e-9))


def serialize_agent_params(params: AgentParams) -> bytes:
    """All four networks as one wire payload (main/target actor, then critic)."""
    return b"".join(nn.serialize_params(p) for p in params.as_tuple())


def deserialize_agent_params(data: bytes) -> AgentParams:
    nets = []
    offset = 0
    for _ in range(4):
        params, offset = nn.read_params(data, offset)
        nets.append(params)
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes after four networks")
    return AgentParams(*nets)


def transfer_size(agent: DdpgAgent) -> int:
    """Bytes per client-server model transfer for this agent's shapes."""
    return len(serialize_agent_params(agent.export_params()))


def run_local_episodes(
    agent: DdpgAgent,
    series: TimeSeries | np.ndarray,
    env_config: fenv.EnvConfig,
    episodes: int,
) -> list[float]:
    """Explore-store-update over seeded random windows; one list entry per episode.

    Episode starts, exploration noise, and minibatch draws all come from the
    agent's own generator, so a client's trajectory does not depend on how
    other clients are scheduled.
    """
    values = series.values if isinstance(series, TimeSeries) else np.asarray(series, float)
    j, length = env_config.lag_count, env_config.episode_length
    if values.size < j + length + 1:
        raise DataError(
            f"series of length {values.size} cannot fit an episode "
            f"({j} lags + {length} steps)"
        )
    episode_rewards = []
    for _ in range(episodes):
        start = int(agent.rng.integers(j - 1, values.size - length))
        state = fenv.reset(values, env_config, start)
        total, steps, done = 0.0, 0, False
        while not done:
            observation = state.observation
            action = agent.act(observation, explore=True)
            reward, state, done = fenv.step(state, action)
            agent.buffer.add(Transition(observation, action, reward, state.observation))
            total += reward
            steps += 1
            if len(agent.buffer) >= agent.config.minibatch_size:
                agent.train_step()
        episode_rewards.append(total / steps)
        agent.decay_noise()
    return episode_rewards


@dataclass
class ClientHandle:
    """One wind farm: private data, its learner, and its network position.

    The raw series never leaves this object; the orchestrator only sees
    parameter payloads and scalar summaries.
    """

    client_id: int
    series: TimeSeries
    train: TimeSeries
    test: TimeSeries
    agent: DdpgAgent
    env_config: fenv.EnvConfig
    hops: int = 1
    data_bytes: int = 0

    def local_train(self, episodes: int) -> float:
        """Run local episodes on the private train split; mean episode reward."""
        rewards = run_local_episodes(self.agent, self.train, self.env_config, episodes)
        return float(np.mean(rewards))

    def upload(self) -> bytes:
        """Serialize all four networks for the server."""
        return serialize_agent_params(self.agent.export_params())

    def receive(self, payload: bytes) -> None:
        """Install a broadcast global model (resets local optimizer moments)."""
        self.agent.import_params(deserialize_agent_params(payload))

    def evaluate_actor(self, actor_params: nn.NetworkParams) -> tuple[EvalSeries, np.ndarray]:
        """Score a policy on the private test split; only scores leave the client."""
        return evaluate_forecaster(actor_params, self.test, self.env_config)


def evaluate_forecaster(
    actor_params: nn.NetworkParams,
    test: TimeSeries,
    env_config: fenv.EnvConfig,
) -> tuple[EvalSeries, np.ndarray]:
    """One-step rollout over the whole test window.

    The first ``lag_count`` test values serve only as lags; targets start
    after them. Returns the aligned eval pair and the cursor indices used.
    """
    j = env_config.lag_count
    if len(test) < j + 2:
        raise DataError(f"test split of length {len(test)} too short for {j} lags")
    indices = np.arange(j - 1, len(test) - 1)
    predicted = fenv.rollout_forecast(actor_params, test, env_config, indices)
    return EvalSeries(test.values[j:], predicted), indices


def make_client(
    client_id: int,
    series: TimeSeries,
    ddpg_config: DdpgConfig,
    fed_config: FedConfig,
    lag_count: int = 7,
    episode_length: int = 48,
    split_ratio: float = 0.8,
    hops: int = 1,
    seed: int | None = None,
) -> ClientHandle:
    """Split the private series, derive the client seed, and build the learner.

    The agent seed defaults to a stream derived from (master_seed, client_id),
    so runs are reproducible and clients are independent of scheduling.
    """
    train, test = split(series, split_ratio, min_length=lag_count + 2)
    env_config = fenv.EnvConfig(
        normalization_max=float(train.values.max()),
        lag_count=lag_count,
        episode_length=episode_length,
    )
    rng = np.random.default_rng(
        [fed_config.master_seed, _CLIENT_TAG, client_id] if seed is None else seed
    )
    agent = DdpgAgent(lag_count, ddpg_config, rng=rng)
    return ClientHandle(
        client_id=client_id, series=series, train=train, test=test,
        agent=agent, env_config=env_config, hops=hops, data_bytes=series.byte_size,
    )


class ParameterServer:
    """Holds the global model; its API accepts parameter payloads only."""

    def __init__(self, agent: DdpgAgent) -> None:
        self.agent = agent

    def aggregate(self, uploads: list[AgentParams]) -> AgentParams:
        """Average each of the four networks over uploads, in upload order."""
        if not uploads:
            raise ProtocolError("cannot aggregate zero uploads")
        merged = AgentParams(
            nn.average_params([u.actor_main for u in uploads]),
            nn.average_params([u.actor_target for u in uploads]),
            nn.average_params([u.critic_main for u in uploads]),
            nn.average_params([u.critic_target for u in uploads]),
        )
        self.agent.import_params(merged)
        return merged

    def aggregate_payloads(self, payloads: list[bytes]) -> AgentParams:
        return self.aggregate([deserialize_agent_params(p) for p in payloads])

    def global_payload(self) -> bytes:
        return serialize_agent_params(self.agent.export_params())


@dataclass
class EpochRecord:
    epoch: int
    selected: tuple[int, ...]
    mean_reward: float
    synced: bool
    upload_bytes: int
    download_bytes: int


@dataclass
class FedRunState:
    """Epoch-by-epoch journal of one federated run."""

    epochs_run: int = 0
    selected_history: list[tuple[int, ...]] = field(default_factory=list)
    sync_epochs: list[int] = field(default_factory=list)
    upload_bytes: int = 0
    download_bytes: int = 0
    reward_traces: dict[int, list[tuple[int, float]]] = field(default_factory=dict)
    journal: list[EpochRecord] = field(default_factory=list)
    traffic: list[bytes] = field(default_factory=list)

    def epoch_mean_rewards(self) -> np.ndarray:
        return np.array([record.mean_reward for record in self.journal])


def init_global(
    public_series: TimeSeries,
    ddpg_config: DdpgConfig | None = None,
    lag_count: int = 7,
    episode_length: int = 48,
    seed: int = 0,
    warm_start_episodes: int = 0,
) -> DdpgAgent:
    """Build the server's model, optionally warm-started on public data."""
    ddpg_config = ddpg_config if ddpg_config is not None else DdpgConfig()
    if len(public_series) < lag_count + episode_length + 1:
        raise DataError(
            f"public series of length {len(public_series)} too short for one episode"
        )
    agent = DdpgAgent(lag_count, ddpg_config,
                      rng=np.random.default_rng([seed, _GLOBAL_TAG]))
    if warm_start_episodes > 0:
        env_config = fenv.EnvConfig(
            normalization_max=float(public_series.values.max()),
            lag_count=lag_count, episode_length=episode_length,
        )
        run_local_episodes(agent, public_series, env_config, warm_start_episodes)
    return agent


def _train_selected(clients: list[ClientHandle], selected: tuple[int, ...],
                    episodes: int, epoch: int, workers: int) -> dict[int, float]:
    chosen = [c for c in clients if c.client_id in selected]

    def one(client: ClientHandle) -> tuple[int, float]:
        mean_reward = client.local_train(episodes)
        if not client.agent.check_finite():
            raise NumericError(
                f"client {client.client_id} diverged to non-finite parameters "
                f"at epoch {epoch}"
            )
        return client.client_id, mean_reward

    if workers > 1 and len(chosen) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(one, chosen))
    else:
        results = [one(c) for c in chosen]
    return dict(results)


def run_federated(
    clients: list[ClientHandle],
    fed_config: FedConfig,
    global_agent: DdpgAgent,
    workers: int = 1,
    keep_traffic: bool = True,
) -> tuple[DdpgAgent, FedRunState, MetricsReport]:
    """The full protocol: allocate, train locally, synchronize, evaluate.

    Per epoch, ``ceil(E*N)`` clients are sampled without replacement and run
    their local episodes. Every ``sync_interval`` epochs the selected
    clients upload all four networks, the server averages them in client-id
    order, and the result is broadcast to every client. Results are
    identical whether clients run serially or in a worker pool.
    """
    if len(clients) != fed_config.num_clients:
        raise ProtocolError(
            f"got {len(clients)} clients for num_clients={fed_config.num_clients}"
        )
    ids = [c.client_id for c in clients]
    if sorted(ids) != list(range(1, fed_config.num_clients + 1)):
        raise ProtocolError("client ids must be exactly 1..N")
    global_sig = tuple(p.shape_signature for p in global_agent.export_params().as_tuple())
    for c in clients:
        sig = tuple(p.shape_signature for p in c.agent.export_params().as_tuple())
        if sig != global_sig:
            raise ProtocolError(f"client {c.client_id} is not shape-compatible "
                                f"with the global model")

    clients = sorted(clients, key=lambda c: c.client_id)
    server = ParameterServer(global_agent)
    state = FedRunState(reward_traces={c.client_id: [] for c in clients})

    # Initial allocation: every client starts from the server's model.
    initial = server.global_payload()
    for client in clients:
        client.receive(initial)
        if keep_traffic:
            state.traffic.append(initial)

    for epoch in range(1, fed_config.global_epochs + 1):
        rng = np.random.default_rng([fed_config.master_seed, _SELECT_TAG, epoch])
        selected = tuple(sorted(
            rng.choice(fed_config.num_clients, size=fed_config.num_selected,
                       replace=False) + 1
        ))
        state.selected_history.append(selected)

        rewards = _train_selected(clients, selected, fed_config.local_episodes,
                                  epoch, workers)
        for cid in selected:
            state.reward_traces[cid].append((epoch, rewards[cid]))

        synced = epoch % fed_config.sync_interval == 0
        if synced:
            payloads = [c.upload() for c in clients if c.client_id in selected]
            state.upload_bytes += sum(len(p) for p in payloads)
            if keep_traffic:
                state.traffic.extend(payloads)
            server.aggregate_payloads(payloads)

            broadcast = server.global_payload()
            for client in clients:
                client.receive(broadcast)
                state.download_bytes += len(broadcast)
                if keep_traffic:
                    state.traffic.append(broadcast)
            state.sync_epochs.append(epoch)

        state.journal.append(EpochRecord(
            epoch=epoch, selected=selected,
            mean_reward=float(np.mean([rewards[cid] for cid in selected])),
            synced=synced, upload_bytes=state.upload_bytes,
            download_bytes=state.download_bytes,
        ))
        state.epochs_run = epoch

    report = MetricsReport()
    final_actor = global_agent.actor_main
    for client in clients:
        ev, _ = client.evaluate_actor(final_actor)
        report.add(client.client_id, "feddrl", ev)
        trace = np.array([r for _, r in state.reward_traces[client.client_id]])
        report.reward_summary[client.client_id] = _trace_summary(trace)
    report.load = {
        "transfer_bytes": float(transfer_size(global_agent)),
        "upload_bytes": float(state.upload_bytes),
        "download_bytes": float(state.download_bytes),
        "sync_rounds": float(len(state.sync_epochs)),
    }
    return global_agent, state, report


def _trace_summary(trace: np.ndarray) -> dict[str, float]:
    if trace.size == 0:
        return {"episodes": 0.0}
    quarter = max(1, trace.size // 4)
    return {
        "episodes": float(trace.size),
        "mean": float(trace.mean()),
        "first_quarter_mean": float(trace[:quarter].mean()),
        "last_quarter_mean": float(trace[-quarter:].mean()),
        "first_quarter_std": float(trace[:quarter].std()),
        "last_quarter_std": float(trace[-quarter:].std()),
    }


def run_centralized(
    series_list: list[TimeSeries],
    fed_config: FedConfig,
    ddpg_config: DdpgConfig,
    lag_count: int = 7,
    episode_length: int = 48,
    split_ratio: float = 0.8,
) -> tuple[DdpgAgent, list[EpochRecord], MetricsReport]:
    """Pooled-data reference: one agent visits every farm's train split.

    Mirrors the federated schedule (same epochs, same episodes per farm per
    epoch) so the two pipelines see the same amount of data.
    """
    if not series_list:
        raise DataError("need at least one series")
    prepared = []
    for i, series in enumerate(series_list, start=1):
        train, test = split(series, split_ratio, min_length=lag_count + 2)
        env_config = fenv.EnvConfig(
            normalization_max=float(train.values.max()),
            lag_count=lag_count, episode_length=episode_length,
        )
        prepared.append((i, train, test, env_config))

    agent = DdpgAgent(
        lag_count, ddpg_config,
        rng=np.random.default_rng([fed_config.master_seed, _CENTRAL_TAG]),
    )
    journal: list[EpochRecord] = []
    for epoch in range(1, fed_config.global_epochs + 1):
        epoch_rewards = []
        for i, train, _, env_config in prepared:
            rewards = run_local_episodes(agent, train, env_config,
                                         fed_config.local_episodes)
            epoch_rewards.extend(rewards)
        if not agent.check_finite():
            raise NumericError(f"centralized training diverged at epoch {epoch}")
        journal.append(EpochRecord(
            epoch=epoch, selected=tuple(i for i, *_ in prepared),
            mean_reward=float(np.mean(epoch_rewards)), synced=False,
            upload_bytes=0, download_bytes=0,
        ))

    report = MetricsReport()
    for i, _, test, env_config in prepared:
        ev, _ = evaluate_forecaster(agent.actor_main, test, env_config)
        report.add(i, "centralized", ev)
    return agent, journal, report


@dataclass(frozen=True)
class LoadModel:
    """Inputs of the traffic comparison: payload size, data sizes, hop counts."""

    transfer_bytes: int                 # one client-server model payload
    data_bytes: tuple[int, ...]         # per-client private dataset size
    hops: tuple[int, ...]               # per-client distance to the server
    count_download: bool = True

    def __post_init__(self) -> None:
        if self.transfer_bytes <= 0:
            raise ValueError("transfer_bytes must be positive")
        if len(self.data_bytes) != len(self.hops) or not self.data_bytes:
            raise ValueError("need matching, non-empty data_bytes and hops")
        if any(d < 0 for d in self.data_bytes) or any(h < 1 for h in self.hops):
            raise ValueError("data sizes must be >= 0 and hop counts >= 1")


def compute_load_gain(load: LoadModel, fed_config: FedConfig) -> tuple[float, float, float]:
    """Centralized vs federated traffic and the relative saving U = 1 - L_F/L_C.

    Centralized load ships every private dataset over its hops once.
    Federated load ships one model payload per participating client per
    direction per synchronization round (floor(W/K) rounds); with partial
    participation each client contributes its expected share E of rounds.
    Download counting can be disabled for sensitivity analysis.
    """
    if len(load.data_bytes) != fed_config.num_clients:
        raise ValueError("load model and fed config disagree on client count")
    l_c = float(sum(d * h for d, h in zip(load.data_bytes, load.hops)))
    if l_c == 0.0:
        raise ZeroDivisionError("centralized load is zero; gain undefined")
    rounds = fed_config.global_epochs // fed_config.sync_interval
    directions = 2.0 if load.count_download else 1.0
    participation = fed_config.num_selected / fed_config.num_clients
    l_f = load.transfer_bytes * rounds * directions * participation * float(sum(load.hops))
    return l_c, l_f, 1.0 - l_f / l_c


def load_model_from_clients(clients: list[ClientHandle], global_agent: DdpgAgent,
                            count_download: bool = True) -> LoadModel:
    """Measure payload size and collect per-client sizes/hops from a run setup."""
    ordered = sorted(clients, key=lambda c: c.client_id)
    return LoadModel(
        transfer_bytes=transfer_size(global_agent),
        data_bytes=tuple(c.data_bytes for c in ordered),
        hops=tuple(c.hops for c in ordered),
        count_download=count_download,
    )
