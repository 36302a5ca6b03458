"""Command-line interface: simulate, fit, evaluate, path, plus sweep and run.

Exit codes: 0 success, 2 configuration error, 3 data or I/O error, 4 divergence.
"""

import argparse
import copy
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy.stats import rankdata

from .config import build_model, feature_names, load_config, train_config
from .evaluation import entropy_path, log_score, recovery_metrics, smooth_recovery
from .exceptions import ConfigError, DataError, DivergenceError, NumericError
from .io import read_dataset, read_json, write_csv, write_dataset, write_json
from .optim import RestartSummary, multi_restart, train
from .simgen import SimTruth, generate

logger = logging.getLogger("mixdr")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4


# ---------------------------------------------------------------------------
# data


def simulate_truth(cfg, seed):
    """Generate ``n + n_test`` rows; returns ``(train, test or None)``."""
    options = dict(cfg.data.get("options", {}))
    n_test = int(cfg.data.get("n_test", 0))
    if n_test < 0:
        raise ConfigError("data.n_test must be >= 0")
    n = options.get("n")
    if not isinstance(n, int) or n < 1:
        raise ConfigError("data.options.n must be a positive integer")
    options["n"] = n + n_test
    truth = generate(cfg.data["generator"], seed, **options)
    truth.options = dict(truth.options, n=n, n_test=n_test)
    if n_test == 0:
        return truth, None
    return truth.split(n)


def cmd_simulate(cfg, out, seed):
    if "generator" not in cfg.data:
        raise ConfigError("simulate needs a data.generator")
    train_part, test_part = simulate_truth(cfg, seed)
    write_dataset(out / "data.csv", train_part.X, train_part.y)
    if test_part is not None:
        write_dataset(out / "test.csv", test_part.X, test_part.y)
    write_json(out / "truth.json", train_part.truth_dict())
    logger.info("wrote %d training rows to %s", train_part.y.size, out)


def load_data(cfg, out, seed):
    """Training data, optional test data and optional truth for a config.

    Generator configs read the simulated files in ``out`` (running ``simulate``
    first when they are missing); CSV configs read the referenced files.
    """
    if "generator" in cfg.data:
        if not (out / "data.csv").exists():
            cmd_simulate(cfg, out, seed)
        train_path, test_path, truth_path = out / "data.csv", out / "test.csv", out / "truth.json"
    else:
        train_path = cfg.resolve(cfg.data["csv"])
        test_path = cfg.resolve(cfg.data["test_csv"]) if "test_csv" in cfg.data else None
        truth_path = cfg.resolve(cfg.data["truth"]) if "truth" in cfg.data else None
    X, y, _ = read_dataset(train_path)
    test = read_dataset(test_path)[:2] if test_path is not None and test_path.exists() else None
    truth = None
    if truth_path is not None and truth_path.exists():
        truth = SimTruth.from_dict(read_json(truth_path), X, y)
    return (X, y), test, truth


# ---------------------------------------------------------------------------
# fit


def _restore(spec, fit_record, X):
    model = build_model(spec, X.shape[1]).setup(X, knots=fit_record.get("knots"))
    model.set_weights(np.asarray(fit_record["weights"], dtype=float))
    return model


def _fit_record(cfg, model, fit, seed, X):
    return {
        "name": cfg.name,
        "seed": seed,
        "model": cfg.model,
        "n_features": X.shape[1],
        "feature_names": feature_names(X.shape[1]),
        "weights": model.get_weights(),
        "weights_by_term": model.weights_by_term(),
        "lambdas": model.resolved_lambdas(),
        "knots": {k: v for k, v in model.knots().items()},
        "final_risk": fit.final_risk,
        "mean_pi": fit.params.pi.mean(axis=0),
        "restarts": [{"seed": r.seed, "final_risk": r.final_risk, "diverged": r.diverged,
                      "message": r.message} for r in fit.restarts],
        "best_restart": fit.best_restart,
    }


def cmd_fit(cfg, out, seed, jobs, init_from=None):
    (X, y), _, _ = load_data(cfg, out, seed)
    tcfg = train_config(cfg.train, seed=seed, jobs=jobs)
    init_from = init_from or cfg.train.get("init_from")
    if init_from is not None:
        record = read_json(cfg.resolve(init_from))
        model = _restore(cfg.model, record, X)
        fit = train(model, X, y, replace(tcfg, restarts=1))
        fit.restarts = [RestartSummary(seed, fit.final_risk, fit.risk_trajectory)]
    else:
        p = X.shape[1]
        fit = multi_restart(lambda s: build_model(cfg.model, p), X, y, tcfg)
        model = fit.model
    write_json(out / "fit.json", _fit_record(cfg, model, fit, seed, X))
    write_csv(out / "trajectory.csv", ["epoch", "risk", "lr"],
              ([e + 1, r, lr] for e, (r, lr) in enumerate(zip(fit.risk_trajectory,
                                                              fit.lr_trajectory))))
    logger.info("final risk %.6f", fit.final_risk)
    return fit


# ---------------------------------------------------------------------------
# evaluate


def evaluate_model(model, train_data, test, truth):
    X, y = train_data
    n = y.size
    metrics = {"ls": log_score(model, X, y)}
    metrics["ls_per_obs"] = metrics["ls"] / n
    if test is not None:
        metrics["pls"] = log_score(model, *test)
        metrics["pls_per_obs"] = metrics["pls"] / test[1].size
    if truth is not None:
        metrics["oracle_ls"] = truth.oracle_nll(X, y)
        metrics["oracle_ls_per_obs"] = metrics["oracle_ls"] / n
        if test is not None:
            metrics["oracle_pls"] = truth.oracle_nll(*test)
        if truth.generator == "additive":
            try:
                sm = smooth_recovery(model, truth)
                metrics.update({f"smooth_rmse_{k}": v for k, v in sm.items()
                                if k not in ("alignment", "active", "per_component")})
                metrics["alignment"] = sm["alignment"]
                metrics["smooth_active_components"] = sm["active"]
            except ConfigError as exc:
                metrics["recovery_skipped"] = str(exc)
        else:
            try:
                metrics.update(recovery_metrics(model, truth))
            except ConfigError as exc:
                metrics["recovery_skipped"] = str(exc)
    return metrics


def _numeric(metrics):
    return {k: v for k, v in metrics.items()
            if isinstance(v, (int, float)) and not isinstance(v, bool)}


def cmd_evaluate(cfg, out, seed):
    train_data, test, truth = load_data(cfg, out, seed)
    fit_path = out / "fit.json"
    if not fit_path.exists():
        raise DataError(f"{fit_path} not found; run 'fit' first")
    record = read_json(fit_path)
    model = _restore(record.get("model", cfg.model), record, train_data[0])
    metrics = evaluate_model(model, train_data, test, truth)
    write_json(out / "metrics.json", metrics)
    write_csv(out / "metrics.csv", ["replication", "metric", "value"],
              ([0, k, v] for k, v in _numeric(metrics).items()))
    return metrics


# ---------------------------------------------------------------------------
# path


def xi_grid(spec):
    """Explicit list, or ``{"logspace": [lo, hi, num], "include_zero": bool}``."""
    if isinstance(spec, list):
        return [float(v) for v in spec]
    if isinstance(spec, dict) and "logspace" in spec:
        lo, hi, num = spec["logspace"]
        grid = list(np.logspace(lo, hi, int(num)))
        return ([0.0] if spec.get("include_zero", True) else []) + grid
    raise ConfigError("path.xi_grid must be a list or {'logspace': [lo, hi, num]}")


def cmd_path(cfg, out, seed, jobs, grid=None):
    (X, y), _, _ = load_data(cfg, out, seed)
    pspec = cfg.path or {}
    grid = grid if grid is not None else xi_grid(pspec.get("xi_grid", [0.0, 0.01, 0.1, 1.0]))
    model_spec = copy.deepcopy(cfg.model)
    if "n_components" in pspec:
        model_spec["n_components"] = int(pspec["n_components"])
    tcfg = train_config(dict(cfg.train, **pspec.get("train", {})), seed=seed, jobs=jobs)
    model = build_model(model_spec, X.shape[1])
    rows = entropy_path(model, X, y, grid, tcfg)
    M = model.n_components
    write_csv(out / "path.csv", ["xi"] + [f"pi_{m + 1}" for m in range(M)],
              ([r.xi, *r.pi] for r in rows))
    write_json(out / "path.json", {"rows": [{"xi": r.xi, "pi": r.pi, "risk": r.risk,
                                             "diverged": r.diverged} for r in rows]})
    return rows


# ---------------------------------------------------------------------------
# optimizer sweep


def _sweep_one(cfg, setting, seed, data):
    (X, y), test = data
    spec = dict(cfg.train, optimizer=setting["optimizer"], lr=setting["lr"], clr=setting["clr"])
    spec.pop("base_lr", None)
    spec.pop("init_from", None)
    tcfg = train_config(spec, seed=seed, jobs=1)
    p = X.shape[1]
    try:
        fit = multi_restart(lambda s: build_model(cfg.model, p), X, y, tcfg)
    except DivergenceError as exc:
        return {"final_risk": float("nan"), "pls": float("nan"), "diverged": True,
                "message": str(exc)}
    return {"final_risk": fit.final_risk, "pls": log_score(fit.model, *test), "diverged": False,
            "message": ""}


def cmd_sweep(cfg, out, seed, jobs):
    """Rank optimizer settings by test log-score over seeded replications."""
    if "generator" not in cfg.data:
        raise ConfigError("sweep needs a data.generator")
    sw = cfg.sweep or {}
    settings = [{"optimizer": o, "lr": float(lr), "clr": bool(c)}
                for o in sw.get("optimizers", ["rmsprop", "adam", "adadelta", "sgd"])
                for lr in sw.get("learning_rates", [0.01, 0.1])
                for c in sw.get("clr", [True])]
    reps = int(sw.get("replications", 2))
    if reps < 1 or not settings:
        raise ConfigError("sweep needs >= 1 replication and >= 1 setting")
    if not cfg.data.get("n_test"):
        raise ConfigError("sweep needs data.n_test > 0 to score settings")
    rows = []
    for r in range(reps):
        train_part, test_part = simulate_truth(cfg, seed + r)
        data = ((train_part.X, train_part.y), (test_part.X, test_part.y))
        if jobs > 1:
            from joblib import Parallel, delayed
            results = Parallel(n_jobs=jobs)(delayed(_sweep_one)(cfg, s, seed + r, data)
                                            for s in settings)
        else:
            results = [_sweep_one(cfg, s, seed + r, data) for s in settings]
        pls = np.array([res["pls"] for res in results])
        ranks = rankdata(np.where(np.isnan(pls), np.inf, pls))
        for s, res, rank in zip(settings, results, ranks):
            rows.append({"replication": r, **s, **res, "rank": float(rank)})
    write_csv(out / "sweep.csv",
              ["replication", "optimizer", "lr", "clr", "final_risk", "pls", "diverged", "rank"],
              ([row[k] for k in ("replication", "optimizer", "lr", "clr", "final_risk", "pls",
                                 "diverged", "rank")] for row in rows))
    table = []
    for s in settings:
        mine = [row for row in rows if all(row[k] == s[k] for k in s)]
        table.append({**s, "mean_rank": float(np.mean([row["rank"] for row in mine])),
                      "n_diverged": sum(row["diverged"] for row in mine)})
    table.sort(key=lambda t: (t["mean_rank"], t["optimizer"], t["lr"], not t["clr"]))
    write_csv(out / "ranks.csv", ["optimizer", "lr", "clr", "mean_rank", "n_diverged"],
              ([t["optimizer"], t["lr"], t["clr"], t["mean_rank"], t["n_diverged"]]
               for t in table))
    return table


# ---------------------------------------------------------------------------
# entry point


def cmd_run(cfg, out, seed, jobs):
    """Full pipeline for a config: simulate, fit, evaluate, then path and sweep if configured."""
    if "generator" in cfg.data:
        cmd_simulate(cfg, out, seed)
    cmd_fit(cfg, out, seed, jobs)
    cmd_evaluate(cfg, out, seed)
    if cfg.path:
        cmd_path(cfg, out, seed, jobs)
    if cfg.sweep:
        cmd_sweep(cfg, out, seed, jobs)


def build_parser():
    parser = argparse.ArgumentParser(prog="mixdr", description="Mixtures of distributional regressions")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [("simulate", "generate a dataset and its truth"),
                        ("fit", "train a mixture model"),
                        ("evaluate", "score a fitted model"),
                        ("path", "entropy-penalty path of mixture probabilities"),
                        ("sweep", "optimizer and learning-rate sweep"),
                        ("run", "simulate, fit, evaluate (and path/sweep when configured)")]:
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="experiment JSON (path or bundled name)")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers")
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "fit":
            p.add_argument("--init-from", default=None, help="fit.json to start from")
        if name == "path":
            p.add_argument("--xi-grid", default=None, help="comma-separated xi values")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        seed = cfg.seed if args.seed is None else args.seed
        if args.jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        out = Path(args.out)
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise DataError(f"cannot create {out}: {exc}") from None
        if args.command == "simulate":
            cmd_simulate(cfg, out, seed)
        elif args.command == "fit":
            cmd_fit(cfg, out, seed, args.jobs, init_from=args.init_from)
        elif args.command == "evaluate":
            cmd_evaluate(cfg, out, seed)
        elif args.command == "path":
            grid = None
            if args.xi_grid:
                try:
                    grid = [float(v) for v in args.xi_grid.split(",")]
                except ValueError:
                    raise ConfigError("--xi-grid must be comma-separated numbers") from None
            cmd_path(cfg, out, seed, args.jobs, grid)
        elif args.command == "sweep":
            cmd_sweep(cfg, out, seed, args.jobs)
        else:
            cmd_run(cfg, out, seed, args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, NumericError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
