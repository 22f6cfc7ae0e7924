"""Command-line front end.

Subcommands
-----------
decompose   harmonic decomposition of the movement channels -> feature CSVs
predict     windowed local-GP airflow prediction -> predictions + metrics
evaluate    recompute metrics from a predictions CSV and the truth data
synth       generate a coupled synthetic subject -> standard data CSV

All files are UTF-8 CSV/JSON with LF endings and '.' decimals.  Floats are
written with repr so every file round-trips losslessly through its reader.
Failures exit nonzero with a machine-readable category on stderr.
"""

import argparse
import csv
import dataclasses
import datetime
import json
import os
import sys

import numpy as np

from . import __version__
from .config import (
    PipelineConfig,
    apply_env_overrides,
    config_hash,
    config_to_dict,
    decomposition_config,
    load_config,
)
from .locgp import (
    SubjectRecord,
    preprocess_channel,
    run_pipeline,
    score_predictions,
)
from .metrics import summarize_windows
from .ridge import harmonic_decompose
from .signal import TimeSeries
from .synth import CoupledSubjectConfig, gen_coupled_subject

__all__ = ["main", "ingest_csv", "CliError", "ERROR_CODES"]

ERROR_CODES = {
    "usage": 2,
    "nonuniform-sampling": 3,
    "nan-values": 4,
    "missing-column": 5,
    "rate-mismatch": 6,
    "bad-config": 7,
    "io-error": 8,
    "bad-data": 9,
}

METRIC_COLUMNS = (
    "subject",
    "window",
    "t_start",
    "t_end",
    "model",
    "n_samples",
    "rmse_reduction",
    "diff_rmse_reduction",
    "coverage_95",
    "lag_seconds",
)

WINDOW_COLUMNS = (
    "subject",
    "window",
    "model",
    "skipped",
    "reason",
    "n_train",
    "mu",
    "sigma2",
    "rho",
    "tau2",
    "log_lik",
    "flags",
)


class CliError(Exception):
    def __init__(self, category: str, message: str):
        if category not in ERROR_CODES:
            raise ValueError(f"unknown error category {category!r}")
        super().__init__(message)
        self.category = category
        self.code = ERROR_CODES[category]


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def ingest_csv(path, expected_fs: float | None = None) -> SubjectRecord:
    """Load one subject from a `t,flow,abd,tho` CSV (flow optional).

    The time column must be strictly increasing and uniform; the inferred
    rate must match ``expected_fs`` within 0.1% when one is given.
    """
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise CliError("bad-data", f"{path}: empty file") from None
            rows = list(reader)
    except OSError as exc:
        raise CliError("io-error", f"{path}: {exc}") from exc

    header = [h.strip() for h in header]
    columns = {name: i for i, name in enumerate(header)}
    for required in ("t", "abd", "tho"):
        if required not in columns:
            raise CliError("missing-column", f"{path}: missing column {required!r}")
    if len(rows) < 3:
        raise CliError("bad-data", f"{path}: need at least 3 samples")

    data = np.empty((len(rows), len(header)))
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise CliError("bad-data", f"{path}: row {i + 2} has {len(row)} cells")
        for j, cell in enumerate(row):
            try:
                data[i, j] = float(cell)
            except ValueError:
                raise CliError(
                    "nan-values", f"{path}: non-numeric cell at row {i + 2}"
                ) from None
    if not np.isfinite(data).all():
        raise CliError("nan-values", f"{path}: NaN or infinite cells present")

    t = data[:, columns["t"]]
    steps = np.diff(t)
    if np.any(steps <= 0):
        raise CliError("nonuniform-sampling", f"{path}: time not strictly increasing")
    dt = (t[-1] - t[0]) / (len(t) - 1)
    if np.max(np.abs(steps - dt)) > 1e-6 * dt:
        raise CliError("nonuniform-sampling", f"{path}: time steps are not uniform")
    fs = 1.0 / dt
    if expected_fs is not None and abs(fs - expected_fs) > 1e-3 * expected_fs:
        raise CliError(
            "rate-mismatch",
            f"{path}: inferred rate {fs:.6g} Hz does not match configured "
            f"{expected_fs:.6g} Hz",
        )

    def series(name):
        return TimeSeries(data[:, columns[name]].copy(), fs, t0=float(t[0]))

    subject_id = _stem(path)
    flow = series("flow") if "flow" in columns else None
    return SubjectRecord(subject_id, abd=series("abd"), tho=series("tho"), flow=flow)


def _stem(path) -> str:
    name = str(path).replace("\\", "/").rsplit("/", 1)[-1]
    return name.rsplit(".", 1)[0] if "." in name else name


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _load_cfg(args) -> PipelineConfig:
    try:
        cfg = load_config(args.config) if args.config else PipelineConfig()
        cfg = apply_env_overrides(cfg)
        overrides = {}
        for name in ("mode", "seed", "jobs"):
            value = getattr(args, name, None)
            if value is not None:
                overrides[name] = value
        if overrides:
            cfg = dataclasses.replace(cfg, **overrides)
    except (OSError, json.JSONDecodeError, ValueError, TypeError) as exc:
        raise CliError("bad-config", str(exc)) from exc
    return cfg


def _out(args, filename) -> str:
    out_dir = args.out_dir.rstrip("/") or "/"
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise CliError("io-error", f"{out_dir}: {exc}") from exc
    return f"{out_dir}/{filename}"


def _write_summary(args, cfg, payload):
    summary = {
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "config_hash": config_hash(cfg),
        "config": config_to_dict(cfg),
        "versions": _versions(),
        "seed": cfg.seed,
        **payload,
    }
    with open(_out(args, "run_summary.json"), "w", newline="") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _versions() -> dict:
    import scipy
    import sklearn

    return {
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
        "breathflow": __version__,
    }


# ---------------------------------------------------------------------------
# subcommands


def _cmd_decompose(args) -> int:
    cfg = _load_cfg(args)
    record = ingest_csv(args.data, cfg.data_fs)
    dcfg = decomposition_config(cfg)
    channels = {}
    try:
        for name in ("abd", "tho"):
            ts = preprocess_channel(getattr(record, name), cfg)
            channels[name] = (ts, harmonic_decompose(ts, dcfg))
    except ValueError as exc:
        raise CliError("bad-data", f"{args.data}: {exc}") from exc

    for name, (ts, components) in channels.items():
        header = ["t"]
        for comp in components:
            k = comp.harmonic_index
            header += [f"h{k}_if", f"h{k}_amp", f"h{k}_cos", f"h{k}_sin", f"h{k}_out_of_band"]
        times = ts.times
        rows = []
        for i in range(len(times)):
            row = [times[i]]
            for comp in components:
                row += [
                    comp.if_hz[i],
                    comp.amplitude[i],
                    comp.phase_cos[i],
                    comp.phase_sin[i],
                    int(comp.out_of_band),
                ]
            rows.append(row)
        _write_csv(_out(args, f"harmonics_{record.subject_id}_{name}.csv"), header, rows)

    from .features import harmonic_features, write_features_csv

    fm = harmonic_features(channels["abd"][1], channels["tho"][1])
    write_features_csv(
        _out(args, f"features_{record.subject_id}.csv"), fm, channels["abd"][0].times
    )
    _write_summary(args, cfg, {"command": "decompose", "subject": record.subject_id})
    return 0


def _metric_rows(scores_by_subject):
    rows = []
    for subject_id in sorted(scores_by_subject):
        for s in scores_by_subject[subject_id]:
            rows.append(
                (
                    subject_id, s.window, s.t_start, s.t_end, s.model, s.n_samples,
                    s.rmse_reduction, s.diff_rmse_reduction, s.coverage_95,
                    s.lag_seconds,
                )
            )
    return rows


def _window_rows(predictions_by_subject):
    rows = []
    for subject_id in sorted(predictions_by_subject):
        for p in predictions_by_subject[subject_id]:
            params = p.params
            rows.append(
                (
                    subject_id, p.window, p.model, int(p.skipped), p.reason,
                    p.n_train,
                    params.get("mu", ""), params.get("sigma2", ""),
                    params.get("rho", ""), params.get("tau2", ""),
                    params.get("log_lik", ""), ";".join(p.flags),
                )
            )
    return rows


def _cmd_predict(args) -> int:
    cfg = _load_cfg(args)
    records = [ingest_csv(path, cfg.data_fs) for path in args.data]
    try:
        result = run_pipeline(records, cfg)
    except ValueError as exc:
        raise CliError("bad-data", str(exc)) from exc

    for subject_id, preds in sorted(result.predictions.items()):
        kept = [p for p in preds if p.model != "loclm" and not p.skipped]
        rows = []
        for p in kept:
            for i, sample in enumerate(p.sample_indices):
                rows.append((sample / cfg.fs, p.mean[i], p.sd[i]))
        _write_csv(_out(args, f"predictions_{subject_id}.csv"), ("t", "mean", "sd"), rows)

    _write_csv(_out(args, "metrics.csv"), METRIC_COLUMNS, _metric_rows(result.scores))
    _write_csv(_out(args, "windows.csv"), WINDOW_COLUMNS, _window_rows(result.predictions))
    _write_summary(
        args,
        cfg,
        {
            "command": "predict",
            "mode": result.mode,
            "subjects": sorted(result.predictions),
            "summary": result.summary,
        },
    )
    return 0


def _cmd_evaluate(args) -> int:
    cfg = _load_cfg(args)
    if len(args.data) != len(args.predictions):
        raise CliError("usage", "need one predictions file per data file")
    scores = {}
    for data_path, pred_path in zip(args.data, args.predictions):
        record = ingest_csv(data_path, cfg.data_fs)
        if record.flow is None:
            raise CliError("missing-column", f"{data_path}: evaluate needs a flow column")
        truth = preprocess_channel(record.flow, cfg).samples
        try:
            with open(pred_path, newline="") as fh:
                reader = csv.reader(fh)
                header = next(reader)
                if [h.strip() for h in header] != ["t", "mean", "sd"]:
                    raise CliError("bad-data", f"{pred_path}: expected header t,mean,sd")
                parsed = [[float(c) for c in row] for row in reader]
        except OSError as exc:
            raise CliError("io-error", f"{pred_path}: {exc}") from exc
        except ValueError as exc:
            raise CliError("nan-values", f"{pred_path}: {exc}") from exc
        if parsed:
            arr = np.asarray(parsed)
            indices = np.rint(arr[:, 0] * cfg.fs).astype(int)
            if indices.min() < 0 or indices.max() >= len(truth):
                raise CliError("bad-data", f"{pred_path}: times outside the recording")
            scores[record.subject_id] = score_predictions(
                indices, arr[:, 1], arr[:, 2], truth, cfg, model=cfg.model_name
            )
        else:
            scores[record.subject_id] = []

    _write_csv(_out(args, "metrics.csv"), METRIC_COLUMNS, _metric_rows(scores))
    all_scores = [s for per_subject in scores.values() for s in per_subject]
    summary = (
        {cfg.model_name: summarize_windows(all_scores)} if all_scores else {}
    )
    _write_summary(
        args,
        cfg,
        {"command": "evaluate", "subjects": sorted(scores), "summary": summary},
    )
    return 0


def _cmd_synth(args) -> int:
    cfg = _load_cfg(args)
    synth_cfg = CoupledSubjectConfig(
        duration=args.duration, noise_sd_channels=args.noise, noise_sd_flow=args.noise
    )
    written = []
    for i in range(args.n_subjects):
        seed = cfg.seed + i
        subject = gen_coupled_subject(seed, synth_cfg)
        times = subject.flow.times
        rows = zip(times, subject.flow.samples, subject.abd.samples, subject.tho.samples)
        name = f"synth_{seed}.csv"
        _write_csv(_out(args, name), ("t", "flow", "abd", "tho"), rows)
        written.append(name)
    _write_summary(args, cfg, {"command": "synth", "files": written})
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bt", description="Airflow reconstruction from movement signals"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="pipeline config JSON")
        p.add_argument("--out-dir", default=".", help="directory for outputs")
        p.add_argument("--mode", choices=("intra", "inter"), help="override config mode")
        p.add_argument("--jobs", type=int, help="override worker count")
        p.add_argument("--seed", type=int, help="override root seed")

    p = sub.add_parser("decompose", help="write harmonic and feature CSVs")
    common(p)
    p.add_argument("--data", required=True, help="subject CSV (t,abd,tho[,flow])")
    p.set_defaults(func=_cmd_decompose)

    p = sub.add_parser("predict", help="run the prediction pipeline")
    common(p)
    p.add_argument("--data", required=True, nargs="+", help="subject CSVs")
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("evaluate", help="recompute metrics from predictions")
    common(p)
    p.add_argument("--data", required=True, nargs="+", help="truth CSVs")
    p.add_argument("--predictions", required=True, nargs="+", help="prediction CSVs")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("synth", help="generate synthetic subjects")
    common(p)
    p.add_argument("--duration", type=float, default=1200.0, help="seconds")
    p.add_argument("--n-subjects", type=int, default=1)
    p.add_argument("--noise", type=float, default=0.0, help="channel noise sd")
    p.set_defaults(func=_cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc.category}: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
