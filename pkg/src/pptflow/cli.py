"""Operator command surface.

Subcommands: extract, detect-periods, train, predict, congestion,
evaluate, plot.  Exit codes: 0 success, 2 input schema, 3 domain or
precondition, 4 numeric failure, 5 artifact mismatch, 66 missing file.
All outputs are written atomically (temp file + rename).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np
import pandas as pd

from . import features, periods, svgplot
from .checkpoint import atomic_write_bytes, load_checkpoint, save_checkpoint
from .errors import (
    CheckpointError,
    ConfigurationError,
    DataSchemaError,
    DomainError,
    EmptyDirectionError,
    NoActivationError,
    NumericFailureError,
    SeriesTooShortError,
)
from .fuzzy import FuzzySystem
from .model import PPTNet, PPTNetConfig
from .training import TrainConfig, evaluate as evaluate_windows, train

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_DOMAIN = 3
EXIT_NUMERIC = 4
EXIT_ARTIFACT = 5
EXIT_MISSING = 66

# key -> (type caster, default); flat key=value config files
CONFIG_SCHEMA = {
    "seed": (int, 0),
    "d_model": (int, 64),
    "d_ff": (int, 128),
    "heads": (int, 4),
    "top_k": (int, 6),
    "num_periodic_blocks": (int, 3),
    "num_decoder_layers": (int, 2),
    "kernel_sizes": (lambda s: tuple(int(v) for v in s.split(",")), (1, 3, 5)),
    "dropout": (float, 0.2),
    "agg_hidden": (int, 16),
    "lookback_factor": (int, 2),      # T = factor * H
    "lr_init": (float, 5e-3),
    "lr_min": (float, 0.0),
    "weight_decay": (float, 1e-3),
    "batch_size": (int, 32),
    "epochs": (int, 100),
    "patience": (int, 20),
    "stride": (int, 1),
}


def load_config(path=None, overrides=None):
    """Parse a flat key=value config file, validating against the schema."""
    values = {key: default for key, (_, default) in CONFIG_SCHEMA.items()}
    if path is not None:
        with open(path) as handle:
            for line_no, line in enumerate(handle, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise DataSchemaError(
                        f"{path}:{line_no}: expected key=value, got {line!r}"
                    )
                key, _, raw = line.partition("=")
                key = key.strip()
                if key not in CONFIG_SCHEMA:
                    raise DataSchemaError(
                        f"{path}:{line_no}: unknown configuration key {key!r}"
                    )
                caster = CONFIG_SCHEMA[key][0]
                try:
                    values[key] = caster(raw.strip())
                except ValueError as exc:
                    raise DataSchemaError(
                        f"{path}:{line_no}: bad value for {key!r}: {exc}"
                    ) from exc
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    env_seed = os.environ.get("PPTFLOW_SEED")
    if env_seed is not None:
        values["seed"] = int(env_seed)
    return values


def _atomic_write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def _write_csv(df, path):
    _atomic_write_text(path, df.to_csv(index=False))


def _write_json(obj, path):
    _atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommand bodies
# ---------------------------------------------------------------------------


def cmd_extract(args):
    meta, tracks = features.read_segment(args.meta, args.tracks, args.tracks_meta)
    ds = features.build_timeseries(tracks, meta, args.direction)
    out_csv = args.out
    df = pd.DataFrame(ds.values, columns=ds.feature_names)
    _write_csv(df, out_csv)
    stem, _ = os.path.splitext(out_csv)
    _write_json(features.stats_sidecar(ds, meta), stem + "_stats.json")
    print(f"wrote {out_csv} ({ds.values.shape[0]} seconds, "
          f"direction {ds.direction})")
    return EXIT_OK


def cmd_detect_periods(args):
    values = features.read_flow_csv(args.input) if args.flow else (
        pd.read_csv(args.input).to_numpy(dtype=np.float64)
    )
    if args.columns:
        names = list(pd.read_csv(args.input, nrows=0).columns)
        for column in args.columns:
            if column not in names:
                raise DataSchemaError(f"unknown column {column!r}")
        idx = [names.index(c) for c in args.columns]
        values = values[:, idx]
    t_len = values.shape[0]
    batch = values[None, :, :]
    spectrum = periods.amplitude_spectrum(batch)
    pset = periods.topk_periods(spectrum, args.k, t_len)
    report = {
        "T": t_len,
        "k": args.k,
        "entries": [
            {"f": e.freq, "p": e.period, "weight": e.weight}
            for e in pset.entries
        ],
    }
    if args.out:
        _write_json(report, args.out)
    print(json.dumps(report, indent=2))
    return EXIT_OK


def _prepare_training_data(values, horizon, cfg_values):
    t_len = cfg_values["lookback_factor"] * horizon
    n_rows = values.shape[0]
    mean, std = features.feature_stats(values, n_train=int(0.7 * n_rows))
    standardized = (values - mean) / std
    _, split = features.window_split(
        standardized, t_len, horizon, cfg_values["stride"]
    )
    return t_len, mean, std, split


def cmd_train(args):
    cfg_values = load_config(args.config, {"seed": args.seed})
    values = features.read_flow_csv(args.data)
    t_len, mean, std, split = _prepare_training_data(
        values, args.horizon, cfg_values
    )
    if not split["train"] or not split["val"]:
        raise SeriesTooShortError(
            f"series of {values.shape[0]} rows yields no train/val windows "
            f"at T={t_len}, H={args.horizon}"
        )
    config = PPTNetConfig(
        C=values.shape[1],
        d_model=cfg_values["d_model"],
        d_ff=cfg_values["d_ff"],
        heads=cfg_values["heads"],
        top_k=cfg_values["top_k"],
        num_periodic_blocks=cfg_values["num_periodic_blocks"],
        num_decoder_layers=cfg_values["num_decoder_layers"],
        T=t_len,
        H=args.horizon,
        kernel_sizes=cfg_values["kernel_sizes"],
        dropout=cfg_values["dropout"],
        agg_hidden=cfg_values["agg_hidden"],
    )
    model = PPTNet(config, seed=cfg_values["seed"])
    train_cfg = TrainConfig(
        lr_init=cfg_values["lr_init"],
        lr_min=cfg_values["lr_min"],
        weight_decay=cfg_values["weight_decay"],
        batch_size=cfg_values["batch_size"],
        epochs=cfg_values["epochs"],
        seed=cfg_values["seed"],
        patience=cfg_values["patience"],
    )
    result = train(model, split["train"], split["val"], train_cfg)
    os.makedirs(args.out, exist_ok=True)
    ckpt_path = os.path.join(args.out, "model.ckpt")
    stats = {"mean": mean.tolist(), "std": std.tolist(),
             "feature_names": features.FEATURE_NAMES}
    save_checkpoint(model, ckpt_path, stats=stats)
    log_path = os.path.join(args.out, "training_log.jsonl")
    _atomic_write_text(
        log_path,
        "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in result.log),
    )
    if result.diverged:
        print(f"training diverged; last good checkpoint at {ckpt_path}",
              file=sys.stderr)
        return EXIT_NUMERIC
    print(f"wrote {ckpt_path} (best epoch {result.best_epoch}, "
          f"val MAE {result.best_val_mae:.6f})")
    return EXIT_OK


def cmd_predict(args):
    model, header = load_checkpoint(args.checkpoint)
    values = features.read_flow_csv(args.data)
    if values.shape[1] != model.config.C:
        raise CheckpointError(
            f"checkpoint expects {model.config.C} features but data has "
            f"{values.shape[1]}"
        )
    stats = header.get("stats")
    if stats is None:
        raise CheckpointError("checkpoint lacks normalization statistics")
    mean = np.asarray(stats["mean"])
    std = np.asarray(stats["std"])
    t_len = model.config.T
    if values.shape[0] < t_len:
        raise SeriesTooShortError(
            f"need at least T={t_len} rows of history, got {values.shape[0]}"
        )
    window = (values[-t_len:] - mean) / std
    forecast = model.predict(window[None])[0]
    physical = features.destandardize(forecast, mean, std)
    df = pd.DataFrame(physical, columns=features.FEATURE_NAMES)
    _write_csv(df, args.out)
    stem, _ = os.path.splitext(args.out)
    _write_json(
        {"evaluation_targets": ["k", "v_x"], "horizon": model.config.H},
        stem + "_targets.json",
    )
    print(f"wrote {args.out} ({model.config.H} steps)")
    return EXIT_OK


def cmd_congestion(args):
    df = pd.read_csv(args.input)
    for column in ("k", "v"):
        if column not in df.columns:
            raise DataSchemaError(
                f"{args.input}: missing column {column!r}", column=column
            )
    if len(df) == 0:
        raise DomainError("input series is empty")
    k_series = df["k"].to_numpy(dtype=np.float64)
    v_series = np.abs(df["v"].to_numpy(dtype=np.float64))
    if args.calibration:
        cal = pd.read_csv(args.calibration)
        cal_k = cal["k"].to_numpy(dtype=np.float64)
        cal_v = np.abs(cal["v"].to_numpy(dtype=np.float64))
    else:
        cal_k, cal_v = k_series, v_series
    system = FuzzySystem.calibrate(cal_k, cal_v)
    series = system.congestion_series(k_series, v_series)
    out_df = pd.DataFrame({
        "t": series.timestamps,
        "P": series.probabilities,
        "label": series.labels,
    })
    _write_csv(out_df, args.out)
    print(json.dumps(system.describe(), indent=2))
    return EXIT_OK


def cmd_evaluate(args):
    pred_df = pd.read_csv(args.pred)
    truth_df = pd.read_csv(args.truth)
    if list(pred_df.columns) != list(truth_df.columns):
        raise DataSchemaError(
            f"column mismatch: {list(pred_df.columns)} vs "
            f"{list(truth_df.columns)}"
        )
    if len(pred_df) != len(truth_df):
        raise DataSchemaError(
            f"row count mismatch: {len(pred_df)} vs {len(truth_df)}"
        )
    pred = pred_df.to_numpy(dtype=np.float64)
    truth = truth_df.to_numpy(dtype=np.float64)
    from .training import compute_metrics

    report = {"physical": _metric_dict(compute_metrics(pred, truth))}
    if args.stats:
        with open(args.stats) as handle:
            stats = json.load(handle)
        mean = np.asarray(stats["mean"])
        std = np.asarray(stats["std"])
        report["standardized"] = _metric_dict(
            compute_metrics((pred - mean) / std, (truth - mean) / std)
        )
    _write_json(report, args.out)
    print(json.dumps(report["physical"], indent=2))
    return EXIT_OK


def _metric_dict(report):
    return {
        "mae": report.mae,
        "mse": report.mse,
        "rmse": report.rmse,
        "n": report.n,
        "per_feature": report.per_feature,
    }


def cmd_plot(args):
    df = pd.read_csv(args.input)
    if len(df) == 0:
        raise DomainError("cannot plot an empty series")
    columns = args.columns.split(",") if args.columns else [df.columns[0]]
    for column in columns:
        if column not in df.columns:
            raise DataSchemaError(f"unknown column {column!r}", column=column)
    series = []
    xs = np.arange(len(df))
    for column in columns:
        series.append((column, xs, df[column].to_numpy(dtype=np.float64)))
    if args.forecast:
        fdf = pd.read_csv(args.forecast)
        fx = np.arange(len(df), len(df) + len(fdf))
        for column in columns:
            if column in fdf.columns:
                series.append(
                    (f"{column} (forecast)", fx,
                     fdf[column].to_numpy(dtype=np.float64))
                )
    svg = svgplot.line_chart(series, title=args.title or "",
                             xlabel="t", ylabel=",".join(columns))
    _atomic_write_text(args.out, svg)
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing and dispatch
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pptflow",
        description="Traffic flow feature extraction, periodic-pattern "
                    "forecasting, and fuzzy congestion scoring.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="build the 12-feature flow series "
                                       "from a trajectory CSV triple")
    p.add_argument("--meta", required=True, help="recordingMeta CSV path")
    p.add_argument("--tracks", required=True, help="tracks CSV path")
    p.add_argument("--tracks-meta", required=True, help="tracksMeta CSV path")
    p.add_argument("--direction", required=True,
                   choices=["positive_x", "negative_x"],
                   help="travel direction to extract")
    p.add_argument("--out", required=True, help="output flow CSV path")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("detect-periods",
                       help="emit a JSON report of dominant periods")
    p.add_argument("--input", required=True, help="input CSV path")
    p.add_argument("--k", type=int, default=6, help="how many periods")
    p.add_argument("--columns", nargs="*", default=None,
                   help="columns to analyze (default: all)")
    p.add_argument("--flow", action="store_true",
                   help="input is a 12-feature flow CSV")
    p.add_argument("--out", default=None, help="optional JSON output path")
    p.set_defaults(func=cmd_detect_periods)

    p = sub.add_parser("train", help="train a forecasting model")
    p.add_argument("--data", required=True, help="flow CSV path")
    p.add_argument("--horizon", type=int, required=True,
                   choices=[15, 30, 45], help="forecast horizon in seconds")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--seed", type=int, default=None, help="seed override")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="forecast from a checkpoint")
    p.add_argument("--checkpoint", required=True, help="checkpoint path")
    p.add_argument("--data", required=True, help="flow CSV with history")
    p.add_argument("--out", required=True, help="forecast CSV path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("congestion",
                       help="score congestion probability from (k, v) pairs")
    p.add_argument("--input", required=True,
                   help="CSV with columns k and v")
    p.add_argument("--calibration", default=None,
                   help="optional CSV supplying calibration ranges")
    p.add_argument("--out", required=True, help="output CSV (t, P, label)")
    p.set_defaults(func=cmd_congestion)

    p = sub.add_parser("evaluate", help="compute MAE/MSE/RMSE reports")
    p.add_argument("--pred", required=True, help="prediction CSV")
    p.add_argument("--truth", required=True, help="ground-truth CSV")
    p.add_argument("--stats", default=None,
                   help="stats JSON for standardized-unit metrics")
    p.add_argument("--out", required=True, help="report JSON path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("plot", help="emit an SVG line chart")
    p.add_argument("--input", required=True, help="series CSV")
    p.add_argument("--columns", default=None,
                   help="comma-separated column names")
    p.add_argument("--forecast", default=None,
                   help="optional forecast CSV to overlay")
    p.add_argument("--title", default=None)
    p.add_argument("--out", required=True, help="SVG output path")
    p.set_defaults(func=cmd_plot)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except DataSchemaError as exc:
        print(f"error: input schema: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        print(f"error: unparseable input: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except CheckpointError as exc:
        print(f"error: artifact mismatch: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except NumericFailureError as exc:
        print(f"error: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DomainError, EmptyDirectionError, SeriesTooShortError,
            ConfigurationError, NoActivationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
