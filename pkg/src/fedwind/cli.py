"""Batch experiment runner.

Usage:
    fedwind run MANIFEST [--output-dir DIR] [--seed N] [-v | -q]
    fedwind validate MANIFEST

Exit codes: 0 success, 2 manifest error, 3 data error, 4 numeric
divergence, 1 any other failure. Reports are reproducible: the same
manifest always produces byte-identical files.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import shutil
import sys
from dataclasses import replace as dc_replace
from pathlib import Path

import numpy as np

from . import baselines as bl
from . import env as fenv
from . import federated as fed
from .data import TimeSeries, split as split_series
from .errors import DataError, FedwindError, ManifestError, NumericError
from .manifest import RunManifest, effective_workers, load_manifest, validate_manifest
from .metrics import EvalSeries, MetricsReport, equivalence_check

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_MANIFEST = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

log = logging.getLogger("fedwind")


def _write_journal(path: Path, records: list[fed.EpochRecord]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["epoch", "selected", "mean_reward", "synced",
                         "upload_bytes", "download_bytes"])
        for r in records:
            writer.writerow([r.epoch, "|".join(map(str, r.selected)),
                             repr(r.mean_reward), int(r.synced),
                             r.upload_bytes, r.download_bytes])


def _write_predictions(path: Path, actual: np.ndarray,
                       columns: dict[str, np.ndarray]) -> None:
    names = list(columns)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "actual"] + names)
        for i in range(actual.size):
            row = [i, repr(float(actual[i]))]
            row += [repr(float(columns[name][i])) for name in names]
            writer.writerow(row)


def _write_load_table(path: Path, load: fed.LoadModel, fed_config: fed.FedConfig,
                      sync_intervals: tuple[int, ...]) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["sync_interval", "sync_rounds", "L_C", "L_F", "U"])
        for k in sync_intervals:
            if k > fed_config.global_epochs:
                continue  # no sync round ever happens; gain is undefined
            cfg = dc_replace(fed_config, sync_interval=k)
            l_c, l_f, gain = fed.compute_load_gain(load, cfg)
            writer.writerow([k, fed_config.global_epochs // k,
                             repr(l_c), repr(l_f), repr(gain)])


def _build_clients(manifest: RunManifest, fed_config: fed.FedConfig,
                   series_list: list[TimeSeries]) -> list[fed.ClientHandle]:
    ddpg_config = manifest.ddpg_config()
    hops = manifest.hops()
    return [
        fed.make_client(
            i + 1, series, ddpg_config, fed_config,
            lag_count=manifest.lag_count,
            episode_length=manifest.episode_length,
            split_ratio=manifest.split_ratio,
            hops=hops[i],
        )
        for i, series in enumerate(series_list)
    ]


def _baseline_rows(manifest: RunManifest, series_list: list[TimeSeries],
                   report: MetricsReport, out_dir: Path,
                   methods: tuple[str, ...],
                   extra_columns: dict[int, dict[str, np.ndarray]] | None = None) -> None:
    """Run the requested baselines per client and write prediction files."""
    lag = manifest.lag_count
    for i, series in enumerate(series_list, start=1):
        train, test = split_series(series, manifest.split_ratio, min_length=lag + 2)
        indices = np.arange(lag - 1, len(test) - 1)
        actual = test.values[lag:]
        columns: dict[str, np.ndarray] = {}
        if extra_columns and i in extra_columns:
            columns.update(extra_columns[i])

        if "persistence" in methods:
            columns["persistence"] = bl.persistence_forecast(test, indices)
            report.add(i, "persistence", EvalSeries(actual, columns["persistence"]))
        if "arima" in methods:
            model = bl.arima_fit(train, manifest.arima_config())
            full = series.values
            offset = len(train)
            columns["arima"] = bl.arima_forecast(model, full, indices + offset)
            report.add(i, "arima", EvalSeries(actual, columns["arima"]))
        if "bpnn" in methods:
            cfg = manifest.bpnn_config()
            cfg = dc_replace(cfg, seed=cfg.seed + i)
            params, _ = bl.bpnn_train(train, cfg)
            norm = float(train.values.max())
            columns["bpnn"] = bl.bpnn_forecast(params, test, indices,
                                               normalization_max=norm)
            report.add(i, "bpnn", EvalSeries(actual, columns["bpnn"]))

        _write_predictions(out_dir / f"predictions_client{i}.csv", actual, columns)


def _run_federated_mode(manifest: RunManifest, out_dir: Path) -> None:
    fed_config = manifest.fed_config()
    series_list = manifest.load_series()
    workers = effective_workers(manifest)

    clients = _build_clients(manifest, fed_config, series_list)
    global_agent = fed.init_global(
        series_list[0], manifest.ddpg_config(),
        lag_count=manifest.lag_count, episode_length=manifest.episode_length,
        seed=fed_config.master_seed,
        warm_start_episodes=manifest.warm_start_episodes(),
    )
    log.info("federated run: %d clients, W=%d, K=%d, E=%g", fed_config.num_clients,
             fed_config.global_epochs, fed_config.sync_interval,
             fed_config.client_ratio)
    global_agent, state, report = fed.run_federated(
        clients, fed_config, global_agent, workers=workers, keep_traffic=False)

    _write_journal(out_dir / "journal.csv", state.journal)
    feddrl_columns: dict[int, dict[str, np.ndarray]] = {}
    for client in clients:
        ev, _ = client.evaluate_actor(global_agent.actor_main)
        feddrl_columns[client.client_id] = {"feddrl": ev.predicted}
    _baseline_rows(manifest, series_list, report, out_dir, ("persistence",),
                   extra_columns=feddrl_columns)

    load = fed.load_model_from_clients(clients, global_agent)
    grid_k, _ = manifest.grid()
    _write_load_table(out_dir / "load_gain.csv", load, fed_config, grid_k)

    if manifest.compare_centralized:
        central_agent, central_journal, central_report = fed.run_centralized(
            series_list, fed_config, manifest.ddpg_config(),
            lag_count=manifest.lag_count, episode_length=manifest.episode_length,
            split_ratio=manifest.split_ratio,
        )
        _write_journal(out_dir / "journal_centralized.csv", central_journal)
        report.rows.extend(central_report.rows)
        psi_f, _ = report.aggregate("feddrl")
        psi_c, _ = report.aggregate("centralized")
        verdict = {
            "psi_centralized": psi_c,
            "psi_federated": psi_f,
            "sigma": manifest.sigma,
            "pass": equivalence_check(psi_c, psi_f, manifest.sigma),
        }
        with open(out_dir / "equivalence.json", "w") as handle:
            json.dump(verdict, handle, indent=2, sort_keys=True)
            handle.write("\n")

    report.write_csv(out_dir / "metrics.csv")
    report.write_json(out_dir / "metrics.json")


def _run_centralized_mode(manifest: RunManifest, out_dir: Path) -> None:
    fed_config = manifest.fed_config()
    series_list = manifest.load_series()
    agent, journal, report = fed.run_centralized(
        series_list, fed_config, manifest.ddpg_config(),
        lag_count=manifest.lag_count, episode_length=manifest.episode_length,
        split_ratio=manifest.split_ratio,
    )
    _write_journal(out_dir / "journal.csv", journal)

    lag = manifest.lag_count
    central_columns: dict[int, dict[str, np.ndarray]] = {}
    for i, series in enumerate(series_list, start=1):
        train, test = split_series(series, manifest.split_ratio, min_length=lag + 2)
        env_config = fenv.EnvConfig(
            normalization_max=float(train.values.max()),
            lag_count=lag, episode_length=manifest.episode_length)
        ev, _ = fed.evaluate_forecaster(agent.actor_main, test, env_config)
        central_columns[i] = {"centralized": ev.predicted}
    _baseline_rows(manifest, series_list, report, out_dir, ("persistence",),
                   extra_columns=central_columns)
    report.write_csv(out_dir / "metrics.csv")
    report.write_json(out_dir / "metrics.json")


def _run_baseline_mode(manifest: RunManifest, out_dir: Path) -> None:
    series_list = manifest.load_series()
    report = MetricsReport()
    _baseline_rows(manifest, series_list, report, out_dir,
                   manifest.baseline_methods())
    report.write_csv(out_dir / "metrics.csv")
    report.write_json(out_dir / "metrics.json")


def _run_grid_mode(manifest: RunManifest, out_dir: Path) -> None:
    base_fed = manifest.fed_config()
    series_list = manifest.load_series()
    workers = effective_workers(manifest)
    intervals, ratios = manifest.grid()

    rows = []
    for k in intervals:
        for e in ratios:
            fed_config = dc_replace(base_fed, sync_interval=k, client_ratio=e)
            clients = _build_clients(manifest, fed_config, series_list)
            global_agent = fed.init_global(
                series_list[0], manifest.ddpg_config(),
                lag_count=manifest.lag_count,
                episode_length=manifest.episode_length,
                seed=fed_config.master_seed,
                warm_start_episodes=manifest.warm_start_episodes(),
            )
            log.info("grid cell K=%d E=%g", k, e)
            _, state, report = fed.run_federated(
                clients, fed_config, global_agent, workers=workers,
                keep_traffic=False)
            cell = f"K{k}_E{int(round(e * 100))}"
            _write_journal(out_dir / f"journal_{cell}.csv", state.journal)
            trace = state.epoch_mean_rewards()
            quarter = max(1, trace.size // 4)
            agg_nmae, agg_nrmse = report.aggregate("feddrl")
            rows.append([k, repr(e), repr(agg_nmae), repr(agg_nrmse),
                         repr(float(trace[:quarter].std())),
                         repr(float(trace[-quarter:].std()))])

    with open(out_dir / "grid_comparison.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["sync_interval", "client_ratio", "nmae", "nrmse",
                         "initial_quarter_reward_std", "final_quarter_reward_std"])
        writer.writerows(rows)


def run(manifest: RunManifest, output_dir: Path | None = None,
        seed_overridden: bool = False) -> Path:
    """Execute a validated manifest; returns the output directory."""
    diagnostics, _ = validate_manifest(manifest)
    if diagnostics:
        raise ManifestError("; ".join(diagnostics))

    out_dir = output_dir if output_dir is not None else manifest.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    if seed_overridden:
        # Record the effective configuration, not the stale source file.
        with open(out_dir / "manifest_used.ini", "w") as handle:
            manifest.parser.write(handle)
    else:
        shutil.copyfile(manifest.path, out_dir / "manifest_used.ini")

    mode = manifest.mode
    if mode == "federated":
        _run_federated_mode(manifest, out_dir)
    elif mode == "centralized":
        _run_centralized_mode(manifest, out_dir)
    elif mode == "baseline":
        _run_baseline_mode(manifest, out_dir)
    else:
        _run_grid_mode(manifest, out_dir)
    return out_dir


def _apply_seed_override(manifest: RunManifest, seed: int) -> None:
    if not manifest.parser.has_section("federated"):
        manifest.parser.add_section("federated")
    manifest.parser.set("federated", "master_seed", str(seed))


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="fedwind",
        description="Run federated wind-power forecasting experiments "
                    "from a manifest.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_parser = sub.add_parser("run", help="execute a manifest")
    run_parser.add_argument("manifest", type=Path)
    run_parser.add_argument("--output-dir", type=Path, default=None,
                            help="override [run] output_dir")
    run_parser.add_argument("--seed", type=int, default=None,
                            help="override [federated] master_seed")
    run_parser.add_argument("-v", "--verbose", action="count", default=0)
    run_parser.add_argument("-q", "--quiet", action="store_true")

    val_parser = sub.add_parser("validate", help="check a manifest without running")
    val_parser.add_argument("manifest", type=Path)

    args = parser.parse_args(argv)
    level = logging.WARNING
    if getattr(args, "quiet", False):
        level = logging.ERROR
    elif getattr(args, "verbose", 0) == 1:
        level = logging.INFO
    elif getattr(args, "verbose", 0) >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")

    try:
        manifest = load_manifest(args.manifest)
        if args.command == "validate":
            diagnostics, estimate = validate_manifest(manifest)
            for line in diagnostics:
                print(f"diagnostic: {line}")
            if estimate is not None:
                print(f"dry-run load estimate: L_C={estimate['L_C']:.6g} "
                      f"L_F={estimate['L_F']:.6g} U={estimate['U']:.6g}")
            if not diagnostics:
                print("manifest ok")
            return EXIT_OK
        if args.seed is not None:
            _apply_seed_override(manifest, args.seed)
        out_dir = run(manifest, args.output_dir, seed_overridden=args.seed is not None)
        print(f"reports written to {out_dir}")
        return EXIT_OK
    except ManifestError as exc:
        print(json.dumps({"error": "manifest", "detail": str(exc)}), file=sys.stderr)
        return EXIT_MANIFEST
    except DataError as exc:
        print(json.dumps({"error": "data", "detail": str(exc)}), file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(json.dumps({"error": "numeric", "detail": str(exc)}), file=sys.stderr)
        return EXIT_NUMERIC
    except FedwindError as exc:
        print(json.dumps({"error": "run", "detail": str(exc)}), file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
