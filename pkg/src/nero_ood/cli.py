"""Command-line entry point.

Verbs: gen, train-toy, fit, score, eval, sweep-k, relevance-dump,
plot-data. Every command accepts --config (a JSON file whose keys mirror
the flag names); explicit flags win over the file, which wins over
defaults. The resolved configuration is written next to each command's
output so every run is self-describing.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
failure. Outputs are deterministic: rerunning a command with the same
configuration produces byte-identical files (no timestamps anywhere).

NERO_THREADS caps batch-scoring parallelism; results do not depend on it.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import csvio
from .baselines import (
    energy,
    entropy,
    fit_mahalanobis,
    mahalanobis_score,
    max_logit,
    msp,
    react_clip_threshold,
    react_energy,
)
from .bundle import ArtifactBundle, load_bundle
from .bundle import write_bundle as _write_bundle
from .detector import (
    DetectorConfig,
    NeroModel,
    fit,
    load_model,
    save_model,
    score_batch,
    weight_hash,
)
from .errors import DataError, IoError, NeroError, NumericalError, UsageError
from .metrics import evaluate, report_to_dict, reports_to_csv
from .relevance import relevance_batch
from .synthetic import (
    ScenarioSpec,
    export_bundles,
    generate,
    load_dataset,
    spec_from_dict,
    train_toy,
    write_dataset,
)

METHODS = ("nero", "msp", "maxlogit", "energy", "entropy", "mahalanobis", "react_energy")


def _write_text(path: Path, text: str) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def _write_json(path: Path, payload: dict) -> None:
    _write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _resolve_config(args: argparse.Namespace, defaults: dict, required: tuple[str, ...]) -> dict:
    """Layer defaults < config file < explicit flags."""
    cfg = dict(defaults)
    config_path = getattr(args, "config", None)
    if config_path is not None:
        path = Path(config_path)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            loaded = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
        unknown = set(loaded) - set(defaults)
        if unknown:
            raise UsageError(f"unknown config keys in {path}: {sorted(unknown)}")
        cfg.update(loaded)
    for key in defaults:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    missing = [key for key in required if cfg.get(key) is None]
    if missing:
        raise UsageError(f"missing required option(s): {', '.join('--' + m.replace('_', '-') for m in missing)}")
    return cfg


def _detector_config(cfg: dict) -> DetectorConfig:
    return DetectorConfig(
        z=cfg.get("z"),
        variance_fraction=cfg.get("tau"),
        k=cfg.get("k"),
        eps=cfg.get("eps", 1e-12),
        y_mode=cfg.get("y_mode", "logit"),
        lambda_mode=cfg.get("lambda_mode", "nearest"),
        feature_norm=cfg.get("feature_norm", "l2"),
    )


def _scores_csv(scores: np.ndarray) -> str:
    lines = ["sample,score"]
    for i, s in enumerate(scores):
        lines.append(f"{i},{csvio.format_float(s)}")
    return "\n".join(lines) + "\n"


def _per_sample_scores(
    method: str,
    b: ArtifactBundle,
    model: NeroModel | None,
    extras: dict,
    threads: int,
) -> np.ndarray:
    if method == "nero":
        scores, _ = score_batch(model, b, threads=threads)
        return scores
    if method == "msp":
        return np.array([msp(row) for row in b.logits])
    if method == "maxlogit":
        return np.array([max_logit(row) for row in b.logits])
    if method == "energy":
        return np.array([energy(row, extras["temperature"]) for row in b.logits])
    if method == "entropy":
        return np.array([entropy(row) for row in b.logits])
    if method == "mahalanobis":
        m = extras["mahalanobis_model"]
        return np.array([mahalanobis_score(m, row) for row in b.features])
    if method == "react_energy":
        clip = extras["react_clip"]
        return np.array(
            [
                react_energy(row, b.weights, b.bias, clip, extras["temperature"])
                for row in b.features
            ]
        )
    raise UsageError(f"unknown method {method!r}; available: {', '.join(METHODS)}")


# --- commands ---------------------------------------------------------------


def cmd_gen(args: argparse.Namespace, threads: int) -> None:
    cfg = _resolve_config(
        args,
        defaults={"spec": None, "out": None, "seed": None, "layout": None},
        required=("out",),
    )
    spec_fields: dict = {}
    if cfg["spec"] is not None:
        spec_path = Path(cfg["spec"])
        if not spec_path.is_file():
            raise UsageError(f"scenario spec not found: {spec_path}")
        try:
            spec_fields = json.loads(spec_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"scenario spec {spec_path} is not valid JSON: {exc}") from None
    if cfg["seed"] is not None:
        spec_fields["seed"] = cfg["seed"]
    if cfg["layout"] is not None:
        spec_fields["layout"] = cfg["layout"]
    spec = spec_from_dict(spec_fields)

    dataset = generate(spec)
    out = Path(cfg["out"])
    write_dataset(dataset, out)
    _write_json(out / "run_config.json", {"command": "gen", "spec": dataclasses.asdict(spec)})
    print(f"wrote dataset ({dataset.train_inputs.shape[0]} train / "
          f"{dataset.test_inputs.shape[0]} test / {dataset.ood_inputs.shape[0]} ood) to {out}")


def cmd_train_toy(args: argparse.Namespace, threads: int) -> None:
    cfg = _resolve_config(
        args,
        defaults={"data": None, "out": None, "epochs": 300, "lr": 0.05, "seed": 0},
        required=("data", "out"),
    )
    dataset = load_dataset(cfg["data"])
    result = train_toy(
        dataset, epochs=int(cfg["epochs"]), learning_rate=float(cfg["lr"]), seed=int(cfg["seed"])
    )
    train_b, test_id_b, test_ood_b = export_bundles(result.model, dataset)

    out = Path(cfg["out"])
    _write_bundle(train_b, out / "train")
    _write_bundle(test_id_b, out / "test_id")
    _write_bundle(test_ood_b, out / "test_ood")
    _write_json(
        out / "train_log.json",
        {
            "epochs": int(cfg["epochs"]),
            "learning_rate": float(cfg["lr"]),
            "seed": int(cfg["seed"]),
            "initial_loss": result.losses[0],
            "final_loss": result.losses[-1],
            "train_accuracy": result.train_accuracy,
            "losses": result.losses,
        },
    )
    _write_json(out / "run_config.json", {"command": "train-toy", **cfg})
    print(
        f"trained toy model: accuracy {result.train_accuracy:.3f}, "
        f"loss {result.losses[0]:.4f} -> {result.losses[-1]:.4f}; bundles in {out}"
    )


_DETECTOR_DEFAULTS = {
    "z": None,
    "tau": None,
    "k": None,
    "eps": 1e-12,
    "y_mode": "logit",
    "lambda_mode": "nearest",
    "feature_norm": "l2",
}


def cmd_fit(args: argparse.Namespace, threads: int) -> None:
    cfg = _resolve_config(
        args,
        defaults={"train": None, "out": None, **_DETECTOR_DEFAULTS},
        required=("train", "out"),
    )
    train = load_bundle(cfg["train"])
    model = fit(train, _detector_config(cfg), threads=threads)
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out)
    log_path = out.with_name(out.stem + ".fit_log.json")
    _write_json(log_path, {"command": "fit", **cfg, **model.fit_info})
    print(
        f"fitted model: z={model.fit_info['z']}, lambda={model.lam:.6g}, k={model.k}, "
        f"skipped_denominators={model.fit_info['skipped_denominators']}; wrote {out}"
    )


def cmd_score(args: argparse.Namespace, threads: int) -> None:
    cfg = _resolve_config(
        args,
        defaults={"model": None, "bundle": None, "out": None},
        required=("model", "bundle", "out"),
    )
    b = load_bundle(cfg["bundle"])
    model = load_model(cfg["model"], b.weights, b.bias)
    scores, breakdowns = score_batch(model, b, threads=threads)

    lines = ["sample,score,min_distance,argmin_class,bias_term,scale_factor"]
    for i, bd in enumerate(breakdowns):
        lines.append(
            ",".join(
                [
                    str(i),
                    csvio.format_float(bd.score),
                    csvio.format_float(bd.min_distance),
                    str(bd.argmin_class),
                    csvio.format_float(bd.bias_term),
                    csvio.format_float(bd.scale_factor),
                ]
            )
        )
    out = Path(cfg["out"])
    _write_text(out, "\n".join(lines) + "\n")
    _write_json(out.with_name(out.stem + ".run.json"), {"command": "score", **cfg})
    print(f"scored {len(scores)} samples -> {out}")


_EVAL_DEFAULTS = {
    "train": None,
    "test_id": None,
    "test_ood": None,
    "out": None,
    "methods": ",".join(METHODS),
    "temperature": 1.0,
    "react_percentile": 90.0,
    "mahalanobis_ridge": None,
    "tpr": 0.95,
    **_DETECTOR_DEFAULTS,
}


def _load_eval_bundles(cfg: dict) -> tuple[ArtifactBundle, ArtifactBundle, ArtifactBundle]:
    return (
        load_bundle(cfg["train"]),
        load_bundle(cfg["test_id"]),
        load_bundle(cfg["test_ood"]),
    )


def cmd_eval(args: argparse.Namespace, threads: int) -> None:
    cfg = _resolve_config(
        args, defaults=_EVAL_DEFAULTS, required=("train", "test_id", "test_ood", "out")
    )
    methods = [m.strip() for m in str(cfg["methods"]).split(",") if m.strip()]
    unknown = set(methods) - set(METHODS)
    if unknown:
        raise UsageError(f"unknown method(s) {sorted(unknown)}; available: {', '.join(METHODS)}")
    if not methods:
        raise UsageError("no methods enabled")

    train, test_id, test_ood = _load_eval_bundles(cfg)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)

    model = None
    extras: dict = {"temperature": float(cfg["temperature"])}
    if "nero" in methods:
        model = fit(train, _detector_config(cfg), threads=threads)
        save_model(model, out / "model.json")
    if "mahalanobis" in methods:
        ridge = cfg["mahalanobis_ridge"]
        extras["mahalanobis_model"] = fit_mahalanobis(
            train, ridge=None if ridge is None else float(ridge)
        )
    if "react_energy" in methods:
        extras["react_clip"] = react_clip_threshold(
            train.features, float(cfg["react_percentile"])
        )

    reports = []
    for method in methods:
        id_scores = _per_sample_scores(method, test_id, model, extras, threads)
        ood_scores = _per_sample_scores(method, test_ood, model, extras, threads)
        method_config: dict = {"higher_is_more_ood": True}
        if method == "nero":
            method_config.update(model.fit_info)
            method_config.update(
                {"k": model.k, "y_mode": model.y_mode, "lambda_mode": model.lambda_mode,
                 "feature_norm": model.feature_norm, "eps": model.eps}
            )
        elif method in ("energy", "react_energy"):
            method_config["temperature"] = extras["temperature"]
        if method == "react_energy":
            method_config["clip"] = extras["react_clip"]
            method_config["clip_percentile"] = float(cfg["react_percentile"])
        reports.append(
            evaluate(method, id_scores, ood_scores, config=method_config, tpr=float(cfg["tpr"]))
        )
        _write_json(out / f"report_{method}.json", report_to_dict(reports[-1]))
        _write_text(out / f"scores_{method}_id.csv", _scores_csv(id_scores))
        _write_text(out / f"scores_{method}_ood.csv", _scores_csv(ood_scores))

    _write_text(out / "table.csv", reports_to_csv(reports))
    _write_json(out / "run_config.json", {"command": "eval", **cfg})
    width = max(len(m) for m in methods)
    for r in sorted(reports, key=lambda r: (-r.auroc, r.method_name)):
        print(f"{r.method_name:<{width}}  auroc={r.auroc:.4f}  fpr95={r.fpr95:.4f}")
    print(f"reports in {out}")


def cmd_sweep_k(args: argparse.Namespace, threads: int) -> None:
    cfg = _resolve_config(
        args,
        defaults={
            "train": None,
            "test_id": None,
            "test_ood": None,
            "out": None,
            "k_list": None,
            "tpr": 0.95,
            **_DETECTOR_DEFAULTS,
        },
        required=("train", "test_id", "test_ood", "out", "k_list"),
    )
    try:
        k_values = [int(tok) for tok in str(cfg["k_list"]).split(",") if tok.strip()]
    except ValueError:
        raise UsageError(f"k_list must be comma-separated integers, got {cfg['k_list']!r}") from None
    if not k_values:
        raise UsageError("k_list is empty")

    train, test_id, test_ood = _load_eval_bundles(cfg)
    for k in k_values:
        if not 1 <= k <= train.d:
            raise UsageError(f"k must be in [1, {train.d}], got {k}")

    # Centroids, projection, and lambda do not depend on k; fit once and
    # vary only the bottom-channel count.
    base = fit(train, _detector_config(cfg), threads=threads)
    lines = ["k,k_fraction,auroc,fpr95"]
    for k in k_values:
        model = dataclasses.replace(base, k=k)
        id_scores, _ = score_batch(model, test_id, threads=threads)
        ood_scores, _ = score_batch(model, test_ood, threads=threads)
        report = evaluate(f"nero_k{k}", id_scores, ood_scores, tpr=float(cfg["tpr"]))
        lines.append(
            f"{k},{csvio.format_float(k / train.d)},"
            f"{csvio.format_float(report.auroc)},{csvio.format_float(report.fpr95)}"
        )
    out = Path(cfg["out"])
    _write_text(out, "\n".join(lines) + "\n")
    _write_json(out.with_name(out.stem + ".run.json"), {"command": "sweep-k", **cfg})
    print(f"swept k over {k_values} -> {out}")


def cmd_relevance_dump(args: argparse.Namespace, threads: int) -> None:
    cfg = _resolve_config(
        args,
        defaults={"bundle": None, "out": None, "eps": 1e-12, "y_mode": "logit"},
        required=("bundle", "out"),
    )
    b = load_bundle(cfg["bundle"])
    batch = relevance_batch(b, eps=float(cfg["eps"]), y_mode=str(cfg["y_mode"]), threads=threads)
    matrix = np.column_stack([batch.neuron_relevance, batch.bias_relevance])
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    csvio.write_float_matrix(out, matrix)
    _write_json(
        out.with_name(out.stem + ".run.json"),
        {"command": "relevance-dump", **cfg, "skipped_denominators": batch.skipped_pairs},
    )
    print(f"wrote {matrix.shape[0]}x{matrix.shape[1]} relevance matrix -> {out}")


def cmd_plot_data(args: argparse.Namespace, threads: int) -> None:
    cfg = _resolve_config(
        args,
        defaults={
            "test_id": None,
            "test_ood": None,
            "out": None,
            "window": 9,
            "eps": 1e-12,
            "y_mode": "logit",
        },
        required=("test_id", "test_ood", "out"),
    )
    window = int(cfg["window"])
    if window < 1:
        raise UsageError(f"window must be >= 1, got {window}")
    test_id = load_bundle(cfg["test_id"])
    test_ood = load_bundle(cfg["test_ood"])
    if weight_hash(test_id.weights, test_id.bias) != weight_hash(test_ood.weights, test_ood.bias):
        raise DataError("test_id and test_ood bundles carry different final-layer parameters")

    kwargs = {"eps": float(cfg["eps"]), "y_mode": str(cfg["y_mode"]), "threads": threads}
    id_mean = np.abs(relevance_batch(test_id, **kwargs).neuron_relevance).mean(axis=0)
    ood_mean = np.abs(relevance_batch(test_ood, **kwargs).neuron_relevance).mean(axis=0)

    order = np.argsort(-id_mean, kind="stable")
    id_sorted = id_mean[order]
    ood_sorted = ood_mean[order]
    half = window // 2
    moving = np.array(
        [
            ood_sorted[max(0, i - half) : i + half + 1].mean()
            for i in range(len(ood_sorted))
        ]
    )

    lines = ["channel,id_mean,ood_mean,ood_moving_average"]
    for rank, channel in enumerate(order):
        lines.append(
            f"{int(channel)},{csvio.format_float(id_sorted[rank])},"
            f"{csvio.format_float(ood_sorted[rank])},{csvio.format_float(moving[rank])}"
        )
    out = Path(cfg["out"])
    _write_text(out, "\n".join(lines) + "\n")
    _write_json(out.with_name(out.stem + ".run.json"), {"command": "plot-data", **cfg})
    print(f"wrote channel relevance table ({len(order)} channels) -> {out}")


# --- parser / entry point ---------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 instead of argparse's default 2
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nero", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func, help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.set_defaults(func=func)
        p.add_argument("--config", help="JSON file of options (flags override it)")
        return p

    p = add("gen", cmd_gen, "generate a synthetic dataset directory")
    p.add_argument("--spec", help="scenario spec JSON file")
    p.add_argument("--out", help="output dataset directory")
    p.add_argument("--seed", type=int)
    p.add_argument("--layout", choices=("separable", "between"))

    p = add("train-toy", cmd_train_toy, "train the toy network and export bundles")
    p.add_argument("--data", help="dataset directory from gen")
    p.add_argument("--out", help="output directory for the three bundles")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--seed", type=int)

    def add_detector_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--z", type=int, help="explicit projection width")
        p.add_argument("--tau", type=float, help="variance fraction for choosing z")
        p.add_argument("--k", type=int, help="bottom-channel count")
        p.add_argument("--eps", type=float, help="relevance denominator epsilon")
        p.add_argument("--y-mode", dest="y_mode", choices=("logit", "softmax"))
        p.add_argument("--lambda-mode", dest="lambda_mode", choices=("nearest", "own"))
        p.add_argument("--feature-norm", dest="feature_norm", choices=("l2", "l1"))

    p = add("fit", cmd_fit, "fit a detector on a train bundle")
    p.add_argument("--train", help="train bundle directory")
    p.add_argument("--out", help="output model JSON path")
    add_detector_flags(p)

    p = add("score", cmd_score, "score a bundle with a fitted model")
    p.add_argument("--model", help="model JSON path")
    p.add_argument("--bundle", help="bundle directory to score")
    p.add_argument("--out", help="output CSV path")

    p = add("eval", cmd_eval, "evaluate the detector and baselines")
    p.add_argument("--train", help="train bundle directory")
    p.add_argument("--test-id", dest="test_id", help="ID test bundle directory")
    p.add_argument("--test-ood", dest="test_ood", help="OOD test bundle directory")
    p.add_argument("--out", help="output report directory")
    p.add_argument("--methods", help=f"comma-separated subset of: {', '.join(METHODS)}")
    p.add_argument("--temperature", type=float)
    p.add_argument("--react-percentile", dest="react_percentile", type=float)
    p.add_argument("--mahalanobis-ridge", dest="mahalanobis_ridge", type=float)
    p.add_argument("--tpr", type=float)
    add_detector_flags(p)

    p = add("sweep-k", cmd_sweep_k, "evaluate the detector across bottom-channel counts")
    p.add_argument("--train", help="train bundle directory")
    p.add_argument("--test-id", dest="test_id", help="ID test bundle directory")
    p.add_argument("--test-ood", dest="test_ood", help="OOD test bundle directory")
    p.add_argument("--out", help="output CSV path")
    p.add_argument("--k-list", dest="k_list", help="comma-separated k values")
    p.add_argument("--tpr", type=float)
    add_detector_flags(p)

    p = add("relevance-dump", cmd_relevance_dump, "write the n x (d+1) relevance matrix")
    p.add_argument("--bundle", help="bundle directory")
    p.add_argument("--out", help="output CSV path")
    p.add_argument("--eps", type=float)
    p.add_argument("--y-mode", dest="y_mode", choices=("logit", "softmax"))

    p = add("plot-data", cmd_plot_data, "channel-wise mean |relevance| for ID vs OOD")
    p.add_argument("--test-id", dest="test_id", help="ID test bundle directory")
    p.add_argument("--test-ood", dest="test_ood", help="OOD test bundle directory")
    p.add_argument("--out", help="output CSV path")
    p.add_argument("--window", type=int, help="moving-average window (default 9)")
    p.add_argument("--eps", type=float)
    p.add_argument("--y-mode", dest="y_mode", choices=("logit", "softmax"))

    return parser


def _thread_count() -> int:
    raw = os.environ.get("NERO_THREADS")
    if raw is None:
        return 1
    try:
        threads = int(raw)
    except ValueError:
        raise UsageError(f"NERO_THREADS must be an integer, got {raw!r}") from None
    if threads < 1:
        raise UsageError(f"NERO_THREADS must be >= 1, got {threads}")
    return threads


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args.func(args, _thread_count())
        return 0
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (DataError, NeroError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
