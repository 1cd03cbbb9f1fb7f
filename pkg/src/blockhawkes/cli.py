"""Command-line entry point tying the pipeline together.

Subcommands: ``simulate``, ``fit``, ``spectral``, ``predict``,
``check-theorem``, ``eval-ari``, ``aggregate``. Every run resolves its
settings as command line > ``--config`` JSON file > built-in defaults,
writes its outputs atomically (temp file, then rename), and drops a
``run.json`` next to them recording the tool version, the fully resolved
config with its SHA-256 hash, and the seed. Reruns with the same config and
seed produce byte-identical files.

Errors after argument parsing are reported as a one-line JSON record on
stderr with exit status 1; argument errors keep argparse's usage text and
status 2.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import os
import sys
import tempfile
from dataclasses import fields as dataclass_fields
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    ClassAssignment,
    aggregate,
    load_events,
    load_labels,
    save_events,
    save_labels,
    save_node_mapping,
    weighted_adjacency,
)
from .evaluation import (
    DeviationPoint,
    PredictionProtocol,
    adjusted_rand_index,
    deviation_experiment,
    predict_discrete_baseline,
    predict_rolling,
)
from .generator import BlockHawkesModel, sample_network
from .hawkes import HawkesParams
from .inference import (
    FitResult,
    fit_block_model,
    local_search,
    variational_em,
)
from .spectral import soft_assignment, spectral_cluster


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


FIT_METHODS = ("spectral", "spectral+ls", "spectral+vem",
               "random+ls", "random+vem")

_COMMON_DEFAULTS = {"output_dir": ".", "seed": None, "threads": 1}

_DEFAULTS: dict[str, dict] = {
    "simulate": {
        "nodes": None, "classes": None, "horizon": None,
        "diag": None, "offdiag": None, "class_probs": None, "model": None,
    },
    "fit": {
        "events": None, "k": None, "method": "spectral+ls", "restarts": 10,
        "horizon": None, "num_nodes": None, "id_mode": "index",
        "weighted": False, "tau": None, "max_iterations": None, "tol": 1e-8,
    },
    "spectral": {
        "events": None, "k": None, "restarts": 10, "horizon": None,
        "num_nodes": None, "id_mode": "index", "weighted": False, "tau": None,
    },
    "predict": {
        "events": None, "labels": None, "k": None, "train_fraction": 2 / 3,
        "window": None, "num_windows": None, "snapshot_lengths": None,
        "refit_iterations": 300, "horizon": None, "num_nodes": None,
        "id_mode": "index",
    },
    "check-theorem": {
        "sizes": None, "sims": 10000, "horizon": 20.0,
        "alpha_factor": 5.0, "beta_factor": 10.0, "lambda_factor": 0.5,
    },
    "eval-ari": {"predicted": None, "truth": None},
    "aggregate": {
        "events": None, "t_start": 0.0, "t_end": None, "weighted": False,
        "horizon": None, "num_nodes": None, "id_mode": "index",
    },
}

_REQUIRED = {
    "simulate": ("nodes", "horizon"),
    "fit": ("events", "k"),
    "spectral": ("events", "k"),
    "predict": ("events", "window"),
    "check-theorem": ("sizes",),
    "eval-ari": ("predicted", "truth"),
    "aggregate": ("events",),
}

_INT_KEYS = {"nodes", "classes", "k", "restarts", "num_nodes", "num_windows",
             "max_iterations", "refit_iterations", "sims", "seed", "threads"}
_FLOAT_KEYS = {"horizon", "tol", "tau", "train_fraction", "window",
               "t_start", "t_end", "alpha_factor", "beta_factor",
               "lambda_factor"}
_FLOAT_LIST_KEYS = {"diag", "offdiag", "class_probs", "snapshot_lengths"}


# ---------------------------------------------------------------------------
# Config resolution


def _number_list(value, cast):
    if isinstance(value, str):
        value = [tok for tok in value.split(",") if tok.strip()]
    try:
        result = [cast(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"expected a comma-separated number list, got {value!r}")
    if not result:
        raise ConfigError("number list must be nonempty")
    return result


def _normalize(cfg: dict) -> None:
    for key, value in cfg.items():
        if value is None:
            continue
        if key in _INT_KEYS:
            cfg[key] = int(value)
        elif key in _FLOAT_KEYS:
            cfg[key] = float(value)
        elif key in _FLOAT_LIST_KEYS:
            cfg[key] = _number_list(value, float)
        elif key == "sizes":
            cfg[key] = _number_list(value, int)
        elif key == "weighted":
            cfg[key] = bool(value)


def _resolve(args: argparse.Namespace) -> dict:
    command = args.command
    cfg = dict(_COMMON_DEFAULTS)
    cfg.update(_DEFAULTS[command])
    if args.config is not None:
        with open(args.config) as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(loaded) - set(cfg))
        if unknown:
            raise ConfigError(
                f"unknown config keys for {command}: {', '.join(unknown)}")
        cfg.update(loaded)
    for key in cfg:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    missing = [k for k in _REQUIRED[command] if cfg.get(k) is None]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in missing)
        raise ConfigError(f"{command} requires {flags}")
    _normalize(cfg)
    if cfg["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    if cfg.get("seed") is None:
        # recorded in run.json so any run can be replayed exactly
        cfg["seed"] = int.from_bytes(os.urandom(4), "big")
    return cfg


def _config_hash(cfg: dict) -> str:
    canonical = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


# ---------------------------------------------------------------------------
# Output helpers


def _fmt(value) -> str:
    return repr(float(value))


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=str(path.parent),
                               prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _write_json(path: Path, payload: dict) -> None:
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(row) for row in rows)
    _atomic_write(path, "\n".join(lines) + "\n")


def _write_events(path: Path, stream) -> None:
    buf = io.StringIO()
    save_events(stream, buf)
    _atomic_write(path, buf.getvalue())


def _write_labels(path: Path, labels) -> None:
    buf = io.StringIO()
    save_labels(labels, buf)
    _atomic_write(path, buf.getvalue())


def _write_mapping(path: Path, mapping: dict) -> None:
    buf = io.StringIO()
    save_node_mapping(mapping, buf)
    _atomic_write(path, buf.getvalue())


def _load_stream(cfg: dict):
    return load_events(cfg["events"], num_nodes=cfg.get("num_nodes"),
                       horizon=cfg.get("horizon"), ids=cfg["id_mode"])


# ---------------------------------------------------------------------------
# simulate


def _model_from_config(cfg: dict) -> BlockHawkesModel:
    if cfg["model"] is not None:
        if cfg["diag"] or cfg["offdiag"] or cfg["class_probs"]:
            raise ConfigError(
                "model excludes diag/offdiag/class_probs: the file already "
                "fixes all parameters")
        payload = cfg["model"]
        if not isinstance(payload, dict):
            with open(payload) as fh:
                payload = json.load(fh)
        model = BlockHawkesModel.from_dict(payload)
        if cfg["classes"] not in (None, model.num_classes):
            raise ConfigError(
                f"classes={cfg['classes']} but the model file has "
                f"{model.num_classes}")
        return model
    if cfg["diag"] is None or cfg["offdiag"] is None:
        raise ConfigError("simulate requires --model, or --diag and --offdiag")
    if cfg["classes"] is None:
        raise ConfigError("--classes is required with --diag/--offdiag")
    triples = []
    for key in ("diag", "offdiag"):
        if len(cfg[key]) != 3:
            raise ConfigError(f"{key} must be alpha,beta,lambda_inf")
        triples.append(HawkesParams(*cfg[key]))
    probs = None
    if cfg["class_probs"] is not None:
        probs = np.asarray(cfg["class_probs"], dtype=np.float64)
    return BlockHawkesModel.homogeneous(cfg["classes"], triples[0],
                                        triples[1], class_probs=probs)


def _cmd_simulate(cfg: dict, out: Path):
    model = _model_from_config(cfg)
    stream, assignment = sample_network(model, cfg["nodes"], cfg["horizon"],
                                        cfg["seed"])
    _write_events(out / "events.csv", stream)
    _write_labels(out / "labels.csv", assignment.labels)
    _write_json(out / "model.json", {"schema_version": 1, **model.to_dict()})
    return (["events.csv", "labels.csv", "model.json"],
            {"num_events": stream.num_events})


# ---------------------------------------------------------------------------
# fit / spectral


def _spectral_part(stream, cfg):
    adjacency = (weighted_adjacency(stream) if cfg["weighted"]
                 else aggregate(stream))
    return spectral_cluster(adjacency, cfg["k"], cfg["seed"],
                            tau=cfg["tau"], restarts=cfg["restarts"])


def _run_fit(stream, cfg: dict) -> FitResult:
    k, method = cfg["k"], cfg["method"]
    limit = {} if cfg["max_iterations"] is None \
        else {"max_iterations": cfg["max_iterations"]}
    if method.startswith("spectral"):
        assignment, embedding = _spectral_part(stream, cfg)
        if method == "spectral":
            model, objective = fit_block_model(stream, assignment)
            return FitResult(assignment, model, objective,
                             trace=[objective], iterations=0, converged=True)
        if method == "spectral+ls":
            return local_search(stream, assignment, **limit)
        return variational_em(stream, k, soft_assignment(embedding, k),
                              tol=cfg["tol"], **limit)
    # random restarts: each init gets an independent substream
    best = None
    for seq in np.random.SeedSequence(cfg["seed"]).spawn(cfg["restarts"]):
        gen = np.random.default_rng(seq)
        if method == "random+ls":
            init = ClassAssignment(gen.integers(0, k, stream.num_nodes), k)
            candidate = local_search(stream, init, **limit)
        else:
            tau0 = gen.dirichlet(np.ones(k), size=stream.num_nodes)
            candidate = variational_em(stream, k, tau0, tol=cfg["tol"],
                                       **limit)
        if best is None or candidate.objective > best.objective:
            best = candidate
    return best


def _cmd_fit(cfg: dict, out: Path):
    stream, mapping = _load_stream(cfg)
    result = _run_fit(stream, cfg)
    outputs = ["labels.csv", "model.json", "fit.json"]
    _write_labels(out / "labels.csv", result.assignment.labels)
    _write_json(out / "model.json",
                {"schema_version": 1, **result.model.to_dict()})
    _write_json(out / "fit.json", {
        "schema_version": 1,
        "method": cfg["method"],
        "num_classes": cfg["k"],
        "objective": float(result.objective),
        "iterations": result.iterations,
        "converged": bool(result.converged),
        "trace": [float(v) for v in result.trace],
    })
    if result.variational is not None:
        tau = result.variational.tau
        header = ["node"] + [f"tau_{q}" for q in range(tau.shape[1])]
        rows = ([str(i)] + [_fmt(v) for v in row]
                for i, row in enumerate(tau))
        _write_csv(out / "tau.csv", header, rows)
        outputs.append("tau.csv")
    if cfg["id_mode"] == "map":
        _write_mapping(out / "node_map.csv", mapping)
        outputs.append("node_map.csv")
    return outputs, {"objective": float(result.objective),
                     "converged": bool(result.converged)}


def _cmd_spectral(cfg: dict, out: Path):
    stream, mapping = _load_stream(cfg)
    assignment, _ = _spectral_part(stream, cfg)
    outputs = ["labels.csv"]
    _write_labels(out / "labels.csv", assignment.labels)
    if cfg["id_mode"] == "map":
        _write_mapping(out / "node_map.csv", mapping)
        outputs.append("node_map.csv")
    return outputs, {}


# ---------------------------------------------------------------------------
# predict


def _cmd_predict(cfg: dict, out: Path):
    num_nodes = cfg.get("num_nodes")
    labels = None
    if cfg["labels"] is not None:
        nodes, labels = load_labels(cfg["labels"])
        if nodes.tolist() != list(range(len(nodes))):
            raise ConfigError("labels file must number nodes 0..N-1")
        if num_nodes is not None and num_nodes != len(nodes):
            raise ConfigError(
                f"num_nodes={num_nodes} but labels cover {len(nodes)} nodes")
        num_nodes = len(nodes)
    elif cfg["k"] is None:
        raise ConfigError("predict requires --labels or --k")
    stream, _ = load_events(cfg["events"], num_nodes=num_nodes,
                            horizon=cfg.get("horizon"), ids=cfg["id_mode"])
    protocol = PredictionProtocol.from_fraction(
        stream, cfg["train_fraction"], window=cfg["window"],
        num_windows=cfg.get("num_windows"))
    if labels is not None:
        k = cfg["k"] or int(labels.max()) + 1
        assignment = ClassAssignment(labels, k)
    else:
        # assignment comes from training data only, then stays frozen
        train = stream.before(protocol.train_end)
        assignment, _ = spectral_cluster(aggregate(train), cfg["k"],
                                         cfg["seed"])
    reports = [(predict_rolling(stream, assignment, protocol,
                                refit_iterations=cfg["refit_iterations"]),
                "")]
    for length in cfg["snapshot_lengths"] or []:
        report = predict_discrete_baseline(stream, assignment, protocol,
                                           length)
        reports.append((report, _fmt(length)))

    record_rows = []
    summary_rows = []
    for report, tag in reports:
        for r in report.records:
            record_rows.append([
                report.arm, tag, str(r.pair[0]), str(r.pair[1]),
                str(r.window), _fmt(r.start), _fmt(r.prediction),
                _fmt(r.actual), str(int(r.censored)), r.flag,
            ])
        summary_rows.append([
            report.arm, tag, _fmt(report.rmse_within),
            _fmt(report.rmse_between), _fmt(report.rmse_total),
            str(report.num_scored), str(report.num_censored),
            str(report.num_flagged),
        ])
    _write_csv(out / "records.csv",
               ["arm", "snapshot_length", "send_class", "recv_class",
                "window", "start", "prediction", "actual", "censored",
                "flag"],
               record_rows)
    _write_csv(out / "summary.csv",
               ["arm", "snapshot_length", "rmse_within", "rmse_between",
                "rmse_total", "num_scored", "num_censored", "num_flagged"],
               summary_rows)
    return (["records.csv", "summary.csv"],
            {"train_end": protocol.train_end,
             "num_windows": protocol.num_windows})


# ---------------------------------------------------------------------------
# check-theorem / eval-ari / aggregate


def _cmd_check_theorem(cfg: dict, out: Path):
    af, bf, lf = (cfg["alpha_factor"], cfg["beta_factor"],
                  cfg["lambda_factor"])

    def rule(n: int) -> HawkesParams:
        return HawkesParams(af * n, bf * n, lf * n)

    report = deviation_experiment(cfg["sizes"], rule, cfg["horizon"],
                                  cfg["sims"],
                                  np.random.default_rng(cfg["seed"]))
    names = [f.name for f in dataclass_fields(DeviationPoint)]
    rows = []
    for point in report.points:
        row = []
        for name in names:
            value = getattr(point, name)
            row.append(str(value) if isinstance(value, (int, np.integer))
                       else _fmt(value))
        rows.append(row)
    _write_csv(out / "deviation.csv", names, rows)
    return ["deviation.csv"], {}


def _cmd_eval_ari(cfg: dict, out: Path):
    nodes_a, labels_a = load_labels(cfg["predicted"])
    nodes_b, labels_b = load_labels(cfg["truth"])
    if nodes_a.shape != nodes_b.shape or not np.array_equal(nodes_a, nodes_b):
        raise ConfigError("label files cover different node sets")
    value = adjusted_rand_index(labels_a, labels_b)
    print(f"ari={value!r}")
    _write_json(out / "ari.json", {"schema_version": 1, "ari": value,
                                   "num_nodes": int(nodes_a.shape[0])})
    return ["ari.json"], {"ari": value}


def _cmd_aggregate(cfg: dict, out: Path):
    stream, _ = _load_stream(cfg)
    t0, t1 = cfg["t_start"], cfg["t_end"]
    times = stream.times
    if t1 is None:
        # whole window, closed on the right like the full observation
        mask = (times >= t0) & (times <= stream.horizon)
    else:
        if not t1 > t0:
            raise ConfigError("t_end must exceed t_start")
        mask = (times >= t0) & (times < t1)
    n = stream.num_nodes
    matrix = np.zeros((n, n), dtype=np.int64)
    if cfg["weighted"]:
        np.add.at(matrix, (stream.senders[mask], stream.receivers[mask]), 1)
    else:
        matrix[stream.senders[mask], stream.receivers[mask]] = 1
    text = "".join(",".join(str(v) for v in row) + "\n" for row in matrix)
    _atomic_write(out / "adjacency.csv", text)
    return ["adjacency.csv"], {}


_HANDLERS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "spectral": _cmd_spectral,
    "predict": _cmd_predict,
    "check-theorem": _cmd_check_theorem,
    "eval-ari": _cmd_eval_ari,
    "aggregate": _cmd_aggregate,
}


# ---------------------------------------------------------------------------
# Argument parsing


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with defaults for any flag")
    common.add_argument("--output-dir", help="directory for output files "
                        "(default: current directory)")
    common.add_argument("--seed", type=int,
                        help="RNG seed; generated and recorded when omitted")
    common.add_argument("--threads", type=int,
                        help="worker budget; computation currently runs on "
                        "one thread and the flag is recorded for forward "
                        "compatibility")

    parser = argparse.ArgumentParser(
        prog="blockhawkes",
        description="Simulate, fit, and evaluate block Hawkes event networks.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common],
                       help="draw an event stream from a block Hawkes model")
    p.add_argument("--nodes", type=int)
    p.add_argument("--classes", type=int)
    p.add_argument("--horizon", type=float)
    p.add_argument("--diag", help="alpha,beta,lambda_inf for same-class pairs")
    p.add_argument("--offdiag", help="alpha,beta,lambda_inf for cross-class "
                   "pairs")
    p.add_argument("--class-probs", help="comma-separated class prior")
    p.add_argument("--model", help="model JSON file; replaces diag/offdiag")

    def add_stream_flags(p, id_default="index"):
        p.add_argument("--events", help="sender,receiver,time CSV")
        p.add_argument("--horizon", type=float,
                       help="observation end (default: last event time)")
        p.add_argument("--num-nodes", type=int)
        p.add_argument("--id-mode", choices=("index", "map"), help=
                       "'index': IDs are 0-based integers; 'map': arbitrary "
                       f"IDs, densified by first appearance (default {id_default})")

    p = sub.add_parser("fit", parents=[common],
                       help="estimate classes and Hawkes parameters")
    add_stream_flags(p)
    p.add_argument("--k", type=int, help="number of latent classes")
    p.add_argument("--method", choices=FIT_METHODS)
    p.add_argument("--restarts", type=int,
                   help="k-means restarts, or random inits for random+*")
    p.add_argument("--weighted", action="store_const", const=True,
                   help="cluster on event counts instead of binary adjacency")
    p.add_argument("--tau", type=float, help="Laplacian regularizer")
    p.add_argument("--max-iterations", type=int)
    p.add_argument("--tol", type=float, help="EM convergence tolerance")

    p = sub.add_parser("spectral", parents=[common],
                       help="spectral clustering only, no Hawkes fit")
    add_stream_flags(p)
    p.add_argument("--k", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--weighted", action="store_const", const=True)
    p.add_argument("--tau", type=float)

    p = sub.add_parser("predict", parents=[common],
                       help="rolling next-event prediction on held-out "
                       "windows")
    add_stream_flags(p)
    p.add_argument("--labels", help="node,label CSV; skips clustering")
    p.add_argument("--k", type=int,
                   help="cluster the training prefix when no labels given")
    p.add_argument("--train-fraction", type=float)
    p.add_argument("--window", type=float, help="test window length")
    p.add_argument("--num-windows", type=int)
    p.add_argument("--snapshot-lengths",
                   help="comma list; adds the discrete baseline per length")
    p.add_argument("--refit-iterations", type=int)

    p = sub.add_parser("check-theorem", parents=[common],
                       help="measure adjacency-entry dependence against the "
                       "derived bound")
    p.add_argument("--sizes", help="comma list of network sizes")
    p.add_argument("--sims", type=int)
    p.add_argument("--horizon", type=float)
    p.add_argument("--alpha-factor", type=float, help="alpha = factor * N")
    p.add_argument("--beta-factor", type=float)
    p.add_argument("--lambda-factor", type=float)

    p = sub.add_parser("eval-ari", parents=[common],
                       help="adjusted Rand index between two label files")
    p.add_argument("--predicted")
    p.add_argument("--truth")

    p = sub.add_parser("aggregate", parents=[common],
                       help="adjacency matrix of a time window")
    add_stream_flags(p)
    p.add_argument("--t-start", type=float)
    p.add_argument("--t-end", type=float)
    p.add_argument("--weighted", action="store_const", const=True,
                   help="event counts instead of 0/1 entries")

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        cfg = _resolve(args)
        out = Path(cfg["output_dir"])
        out.mkdir(parents=True, exist_ok=True)
        outputs, extras = _HANDLERS[args.command](cfg, out)
        record = {
            "tool": "blockhawkes",
            "version": __version__,
            "command": args.command,
            "seed": cfg["seed"],
            "config_sha256": _config_hash(cfg),
            "config": cfg,
            "outputs": outputs,
        }
        record.update(extras)
        _write_json(out / "run.json", record)
        print(f"{args.command}: wrote {', '.join(outputs + ['run.json'])} "
              f"in {out}")
        return 0
    except Exception as exc:
        record = {"error": {"type": type(exc).__name__, "message": str(exc),
                            "command": args.command}}
        print(json.dumps(record), file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
