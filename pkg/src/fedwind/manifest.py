"""Run manifests: a diff-friendly INI schema describing one experiment.

A manifest fully determines a run: mode, data sources, every config knob,
and every seed. Nothing is ever seeded from the clock.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass
from pathlib import Path

from .baselines import ArimaConfig, BpnnConfig
from .data import SyntheticConfig, TimeSeries, generate_synthetic, load_csv
from .ddpg import DdpgConfig
from .errors import ManifestError
from .federated import FedConfig, LoadModel, compute_load_gain

MODES = ("federated", "centralized", "baseline", "robustness-grid")
BASELINE_METHODS = ("persistence", "arima", "bpnn")

_KNOWN_KEYS = {
    "run": {"mode", "output_dir", "sigma", "compare_centralized", "workers"},
    "data": {"source", "series_count", "length", "seed", "capacity_mw", "noise_level",
             "paths", "hops", "split_ratio", "declared_data_bytes",
             "declared_transfer_bytes"},
    "env": {"lag_count", "episode_length"},
    "ddpg": {"gamma", "tau", "minibatch_size", "buffer_capacity", "actor_lr",
             "critic_lr", "noise_sigma_initial", "noise_sigma_decay", "actor_hidden",
             "critic_hidden", "optimizer"},
    "federated": {"num_clients", "client_ratio", "sync_interval", "global_epochs",
                  "local_episodes", "master_seed", "warm_start_episodes"},
    "baselines": {"methods"},
    "arima": {"p", "d", "q", "max_iterations"},
    "bpnn": {"hidden_width", "hidden_layers", "learning_rate", "epochs", "lag_count"},
    "grid": {"sync_intervals", "client_ratios"},
}


@dataclass
class RunManifest:
    """Parsed manifest plus its source path (for copying into run output)."""

    path: Path
    parser: configparser.ConfigParser

    # -- raw access -------------------------------------------------------

    def _get(self, section: str, key: str, default=None) -> str | None:
        if self.parser.has_option(section, key):
            value = self.parser.get(section, key).strip()
            return value if value else default
        return default

    def _require(self, section: str, key: str) -> str:
        value = self._get(section, key)
        if value is None:
            raise ManifestError(f"[{section}] {key} is required")
        return value

    def _typed(self, section: str, key: str, cast, default=None):
        raw = self._get(section, key)
        if raw is None:
            return default
        try:
            return cast(raw)
        except ValueError as exc:
            raise ManifestError(f"[{section}] {key}: cannot parse {raw!r}") from exc

    # -- typed views ------------------------------------------------------

    @property
    def mode(self) -> str:
        mode = self._require("run", "mode")
        if mode not in MODES:
            raise ManifestError(f"[run] mode must be one of {MODES}, got {mode!r}")
        return mode

    @property
    def output_dir(self) -> Path:
        return Path(self._require("run", "output_dir"))

    @property
    def sigma(self) -> float:
        sigma = self._typed("run", "sigma", float, 0.02)
        if sigma <= 0.0:
            raise ManifestError("[run] sigma must be positive")
        return sigma

    @property
    def compare_centralized(self) -> bool:
        return _parse_bool(self._get("run", "compare_centralized", "false"))

    @property
    def workers(self) -> int:
        workers = self._typed("run", "workers", int, 1)
        if workers < 1:
            raise ManifestError("[run] workers must be >= 1")
        return workers

    @property
    def lag_count(self) -> int:
        return self._typed("env", "lag_count", int, 7)

    @property
    def episode_length(self) -> int:
        return self._typed("env", "episode_length", int, 48)

    @property
    def split_ratio(self) -> float:
        return self._typed("data", "split_ratio", float, 0.8)

    def data_seed(self) -> int:
        if self._get("data", "source", "synthetic") == "synthetic":
            raw = self._get("data", "seed")
            if raw is None:
                raise ManifestError("[data] seed is required for synthetic data "
                                    "(all seeds are explicit)")
            return int(raw)
        return 0

    def series_count(self) -> int:
        if self._get("data", "source", "synthetic") == "csv":
            return len(self.csv_paths())
        count = self._typed("data", "series_count", int, None)
        if count is None or count < 1:
            raise ManifestError("[data] series_count must be a positive integer")
        return count

    def csv_paths(self) -> tuple[Path, ...]:
        raw = self._require("data", "paths")
        return tuple(Path(p.strip()) for p in raw.split(",") if p.strip())

    def hops(self) -> tuple[int, ...]:
        raw = self._get("data", "hops")
        count = self.series_count()
        if raw is None:
            return (1,) * count
        hops = tuple(int(h.strip()) for h in raw.split(",") if h.strip())
        if len(hops) != count:
            raise ManifestError(f"[data] hops lists {len(hops)} entries for "
                                f"{count} series")
        if any(h < 1 for h in hops):
            raise ManifestError("[data] hop counts must be >= 1")
        return hops

    def load_series(self) -> list[TimeSeries]:
        source = self._get("data", "source", "synthetic")
        if source == "csv":
            return [load_csv(p) for p in self.csv_paths()]
        if source != "synthetic":
            raise ManifestError(f"[data] source must be 'synthetic' or 'csv', "
                                f"got {source!r}")
        seed = self.data_seed()
        kwargs = {}
        length = self._typed("data", "length", int, None)
        if length is not None:
            kwargs["length"] = length
        capacity = self._typed("data", "capacity_mw", float, None)
        if capacity is not None:
            kwargs["capacity_mw"] = capacity
        noise = self._typed("data", "noise_level", float, None)
        if noise is not None:
            kwargs["noise_level"] = noise
        try:
            return [generate_synthetic(SyntheticConfig(seed=seed + i, **kwargs))
                    for i in range(self.series_count())]
        except ValueError as exc:
            raise ManifestError(f"[data] {exc}") from exc

    def ddpg_config(self) -> DdpgConfig:
        kwargs = {}
        for key, cast in (("gamma", float), ("tau", float), ("minibatch_size", int),
                          ("buffer_capacity", int), ("actor_lr", float),
                          ("critic_lr", float), ("noise_sigma_initial", float),
                          ("noise_sigma_decay", float), ("actor_hidden", int),
                          ("critic_hidden", int), ("optimizer", str)):
            value = self._typed("ddpg", key, cast, None)
            if value is not None:
                kwargs[key] = value
        try:
            return DdpgConfig(**kwargs)
        except ValueError as exc:
            raise ManifestError(f"[ddpg] {exc}") from exc

    def fed_config(self) -> FedConfig:
        raw_seed = self._get("federated", "master_seed")
        if raw_seed is None:
            raise ManifestError("[federated] master_seed is required "
                                "(all seeds are explicit)")
        kwargs = {"master_seed": int(raw_seed)}
        num_clients = self._typed("federated", "num_clients", int, None)
        kwargs["num_clients"] = num_clients if num_clients is not None \
            else self.series_count()
        for key, cast in (("client_ratio", float), ("sync_interval", int),
                          ("global_epochs", int), ("local_episodes", int)):
            value = self._typed("federated", key, cast, None)
            if value is not None:
                kwargs[key] = value
        try:
            return FedConfig(**kwargs)
        except ValueError as exc:
            raise ManifestError(f"[federated] {exc}") from exc

    def warm_start_episodes(self) -> int:
        return self._typed("federated", "warm_start_episodes", int, 0)

    def baseline_methods(self) -> tuple[str, ...]:
        raw = self._get("baselines", "methods", "persistence")
        methods = tuple(m.strip() for m in raw.split(",") if m.strip())
        for m in methods:
            if m not in BASELINE_METHODS:
                raise ManifestError(f"[baselines] unknown method {m!r}; "
                                    f"choose from {BASELINE_METHODS}")
        return methods

    def arima_config(self) -> ArimaConfig:
        kwargs = {}
        for key in ("p", "d", "q", "max_iterations"):
            value = self._typed("arima", key, int, None)
            if value is not None:
                kwargs[key] = value
        try:
            return ArimaConfig(**kwargs)
        except ValueError as exc:
            raise ManifestError(f"[arima] {exc}") from exc

    def bpnn_config(self) -> BpnnConfig:
        kwargs = {"lag_count": self.lag_count, "seed": self.data_seed()}
        for key, cast in (("hidden_width", int), ("hidden_layers", int),
                          ("learning_rate", float), ("epochs", int),
                          ("lag_count", int)):
            value = self._typed("bpnn", key, cast, None)
            if value is not None:
                kwargs[key] = value
        try:
            return BpnnConfig(**kwargs)
        except ValueError as exc:
            raise ManifestError(f"[bpnn] {exc}") from exc

    def grid(self) -> tuple[tuple[int, ...], tuple[float, ...]]:
        raw_k = self._get("grid", "sync_intervals", "50, 100, 200")
        raw_e = self._get("grid", "client_ratios", "0.5, 1.0")
        intervals = tuple(int(k.strip()) for k in raw_k.split(",") if k.strip())
        ratios = tuple(float(e.strip()) for e in raw_e.split(",") if e.strip())
        if not intervals or not ratios:
            raise ManifestError("[grid] sync_intervals and client_ratios "
                                "must be non-empty")
        return intervals, ratios

    def declared_bytes(self) -> tuple[int | None, int | None]:
        data = self._typed("data", "declared_data_bytes", int, None)
        transfer = self._typed("data", "declared_transfer_bytes", int, None)
        return data, transfer


def _parse_bool(raw: str | None) -> bool:
    if raw is None:
        return False
    lowered = raw.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ManifestError(f"cannot parse boolean {raw!r}")


def load_manifest(path) -> RunManifest:
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path) as handle:
            parser.read_file(handle)
    except configparser.Error as exc:
        raise ManifestError(f"{path}: {exc}") from exc
    return RunManifest(path=path, parser=parser)


def validate_manifest(manifest: RunManifest) -> tuple[list[str], dict | None]:
    """All schema and cross-field checks, reported without executing anything.

    Returns (diagnostics, dry-run load estimate). The estimate is produced
    when declared sizes allow it; the run itself is never started.
    """
    diagnostics: list[str] = []

    for section in manifest.parser.sections():
        if section not in _KNOWN_KEYS:
            diagnostics.append(f"unknown section [{section}]")
            continue
        for key in manifest.parser.options(section):
            if key not in _KNOWN_KEYS[section]:
                diagnostics.append(f"unknown key [{section}] {key}")

    def check(callable_, *args):
        try:
            return callable_(*args)
        except ManifestError as exc:
            diagnostics.append(str(exc))
            return None

    mode = check(lambda: manifest.mode)
    check(lambda: manifest.output_dir)
    check(lambda: manifest.workers)
    check(lambda: manifest.sigma)
    ddpg = check(manifest.ddpg_config)
    fed = None
    if mode in ("federated", "centralized", "robustness-grid", None):
        fed = check(manifest.fed_config)
    if mode == "baseline":
        check(manifest.baseline_methods)
        methods = manifest._get("baselines", "methods", "persistence")
        if "arima" in methods:
            check(manifest.arima_config)
        if "bpnn" in methods:
            check(manifest.bpnn_config)
    if mode == "robustness-grid":
        check(manifest.grid)

    count = check(manifest.series_count)
    hops = check(manifest.hops)
    source = manifest._get("data", "source", "synthetic")
    if source == "synthetic":
        check(manifest.data_seed)
    elif source == "csv":
        paths = check(manifest.csv_paths)
        if paths:
            for p in paths:
                if not p.is_file():
                    diagnostics.append(f"[data] missing csv file: {p}")

    if fed is not None and count is not None and fed.num_clients != count:
        diagnostics.append(
            f"[federated] num_clients={fed.num_clients} does not match "
            f"{count} data series"
        )
    raw_k = manifest._typed("federated", "sync_interval", int, None)
    raw_w = manifest._typed("federated", "global_epochs", int, None)
    if raw_k is not None and raw_w is not None and raw_k > raw_w:
        diagnostics.append(
            f"[federated] sync_interval={raw_k} exceeds global_epochs={raw_w} "
            f"(constraint: K <= W)"
        )

    estimate = None
    declared_data, declared_transfer = manifest.declared_bytes()
    if (fed is not None and hops is not None and count is not None
            and declared_data is not None and declared_transfer is not None
            and fed.num_clients == count):
        try:
            load = LoadModel(
                transfer_bytes=declared_transfer,
                data_bytes=(declared_data,) * count,
                hops=hops,
            )
            l_c, l_f, gain = compute_load_gain(load, fed)
            estimate = {"L_C": l_c, "L_F": l_f, "U": gain}
        except (ValueError, ZeroDivisionError) as exc:
            diagnostics.append(f"load estimate failed: {exc}")

    return diagnostics, estimate


def effective_workers(manifest: RunManifest) -> int:
    """Worker count: FEDWIND_WORKERS overrides the manifest."""
    raw = os.environ.get("FEDWIND_WORKERS")
    if raw:
        try:
            workers = int(raw)
        except ValueError as exc:
            raise ManifestError(f"FEDWIND_WORKERS={raw!r} is not an integer") from exc
        if workers < 1:
            raise ManifestError("FEDWIND_WORKERS must be >= 1")
        return workers
    return manifest.workers
