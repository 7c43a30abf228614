"""Command-line entry point: ``adaptive-mpc <command> [options]``.

Exit codes: 0 success, 1 runtime failure, 2 bad configuration or missing input file.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import platform
import sys
from importlib import metadata, resources
from pathlib import Path

import numpy as np

from .anfis import AnfisAdapter
from .config import ConfigError, RunConfig, load_config
from .nn import NnAdapter
from .pso import optimize
from .scenarios import (BUILTIN_SCENARIOS, MODES, SimulationDiverged, builtin_scenario,
                        run_closed_loop, summarize, write_summary)
from .tuning import (DEFAULT_PARAMS, OperatingCondition, condition_grid, dataset_arrays,
                     evaluate_fitness, generate_dataset, read_dataset, tune_condition,
                     write_dataset)

log = logging.getLogger("adaptive_mpc")

OUTPUT_ENV = "ADAPTIVE_MPC_OUTPUT_DIR"
BUNDLED_DATASET = "tuning_grid_4x4x3x3.csv"


class UsageError(Exception):
    """Bad input the user can fix; exits with status 2."""


def bundled_dataset_path() -> Path:
    return Path(str(resources.files("adaptive_mpc") / "data" / BUNDLED_DATASET))


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _package_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


class Run:
    """Output directory, resolved config and manifest bookkeeping for one command."""

    def __init__(self, command: str, cfg: RunConfig, out: str | None):
        self.command = command
        self.cfg = cfg
        self.out = Path(out or os.environ.get(OUTPUT_ENV) or cfg.run.output_dir)
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs: list[Path] = []
        self.inputs: dict[str, str] = {}

    def path(self, name: str) -> Path:
        p = self.out / name
        self.outputs.append(p)
        return p

    def record_input(self, label: str, path: Path) -> None:
        self.inputs[label] = f"{path.name}:{_sha256(path)}"

    def write_manifest(self, extra: dict | None = None) -> None:
        manifest = {
            "command": self.command,
            "seed": self.cfg.run.seed,
            "config_sha256": self.cfg.digest(),
            "config": self.cfg.to_dict(),
            "inputs": self.inputs,
            "outputs": {p.name: _sha256(p) for p in self.outputs},
            "versions": {"python": platform.python_version(), "numpy": np.__version__,
                         "artifact": _package_version()},
        }
        manifest.update(extra or {})
        with open(self.out / f"manifest-{self.command}.json", "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")


def _existing(path: str | None, what: str) -> Path:
    if path is None:
        raise UsageError(f"{what} required")
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {p}")
    return p


def _dataset(args, run: Run):
    path = _existing(args.dataset, "dataset") if args.dataset else (
        _existing(run.cfg.run.dataset, "dataset") if run.cfg.run.dataset else bundled_dataset_path())
    run.record_input("dataset", path)
    return read_dataset(path)


def _load_adapter(kind: str, model: str | None, run: Run, records_fn):
    """Load a trained adapter, or train one on the dataset when no model file is given."""
    cls = NnAdapter if kind == "nn" else AnfisAdapter
    if model is not None:
        p = _existing(model, f"{kind} model file")
        run.record_input(f"{kind}_model", p)
        try:
            return cls.load(p)
        except (ValueError, KeyError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read {kind} model {p}: {exc}") from None
    x, y = dataset_arrays(records_fn())
    cfg = run.cfg.nn if kind == "nn" else run.cfg.anfis
    adapter, _ = cls.train(x, y, cfg)
    return adapter


def _simulate(run: Run, name: str, mode: str, adapter, timing: bool):
    cfg = run.cfg
    timings = [] if timing else None
    sim = run_closed_loop(builtin_scenario(name, mode), cfg.vehicle, cfg.mpc.params,
                          cfg.mpc.constraints, adapter, cfg.mpc.ts,
                          cfg.scenario.adapter_every, timings=timings)
    latency = float(np.mean(timings)) if timings else None
    return sim, summarize(sim, name, mode, latency)


def cmd_simulate(args, run: Run) -> int:
    name = args.scenario or run.cfg.scenario.name
    adapter = None
    if args.mode != "fixed":
        kind = "nn" if args.mode == "nn-adaptive" else "anfis"
        adapter = _load_adapter(kind, args.model, run, lambda: _dataset(args, run))
    sim, summary = _simulate(run, name, args.mode, adapter, args.timing)
    sim.to_csv(run.path(f"{name}-{args.mode}.csv"))
    write_summary(summary, run.path(f"{name}-{args.mode}-summary.json"))
    run.write_manifest()
    print(f"{name} {args.mode}: mse={summary['mse']:.6g} max_abs_error={summary['max_abs_error']:.6g}")
    return 0


def cmd_tune(args, run: Run) -> int:
    try:
        cond = OperatingCondition(args.vx, args.wind, args.mu, args.y_ref)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    cfg = run.cfg
    rec = tune_condition(cond, cfg.pso, 0, vehicle=cfg.vehicle, constraints=cfg.mpc.constraints,
                         ts=cfg.mpc.ts)
    default_mse = evaluate_fitness((DEFAULT_PARAMS.np, DEFAULT_PARAMS.nc, DEFAULT_PARAMS.q,
                                    DEFAULT_PARAMS.r), cond, cfg.vehicle, cfg.mpc.constraints,
                                   cfg.mpc.ts)
    o = rec.optimal
    result = {"condition": dict(zip(("vx", "wind", "mu", "y_ref"), cond.as_array().tolist())),
              "optimal": {"np": o.np, "nc": o.nc, "q": o.q, "r": o.r},
              "mse": rec.achieved_mse, "default_mse": default_mse}
    with open(run.path("tune.json"), "w") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
        fh.write("\n")
    run.write_manifest()
    print(f"np={o.np} nc={o.nc} q={o.q:.6g} r={o.r:.6g} mse={rec.achieved_mse:.6g} "
          f"(default {default_mse:.6g})")
    return 0


def cmd_dataset(args, run: Run) -> int:
    cfg = run.cfg
    g = cfg.grid
    dims = args.grid or (g.n_vx, g.n_yref, g.n_mu, g.n_wind)
    conds = condition_grid(*dims)

    def progress(i, rec):
        log.info("%d/%d %s -> %s mse=%.3g", i + 1, len(conds), rec.condition, rec.optimal,
                 rec.achieved_mse)

    records = generate_dataset(conds, cfg.pso, workers=cfg.run.workers, progress=progress,
                               vehicle=cfg.vehicle, constraints=cfg.mpc.constraints, ts=cfg.mpc.ts)
    write_dataset(records, run.path("dataset.csv"))
    run.write_manifest({"grid": list(dims)})
    print(f"wrote {len(records)} records to {run.out / 'dataset.csv'}")
    return 0


def _write_losses(path: Path, curves: dict[str, list[float]]) -> None:
    names = list(curves)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", *names])
        for k in range(max(len(c) for c in curves.values())):
            w.writerow([k, *(repr(curves[n][k]) if k < len(curves[n]) else "" for n in names)])


def cmd_train_nn(args, run: Run) -> int:
    x, y = dataset_arrays(_dataset(args, run))
    adapter, results = NnAdapter.train(x, y, run.cfg.nn)
    adapter.save(run.path("nn_model.json"))
    _write_losses(run.path("nn_loss.csv"), {n.target: r.history for n, r in zip(adapter.nets, results)})
    run.write_manifest()
    for n, r in zip(adapter.nets, results):
        print(f"{n.target}: loss {r.history[0]:.4g} -> {r.history[-1]:.4g}, validation {r.val_mse:.4g}"
              if r.val_mse is not None else f"{n.target}: loss {r.history[0]:.4g} -> {r.history[-1]:.4g}")
    return 0


def cmd_train_anfis(args, run: Run) -> int:
    x, y = dataset_arrays(_dataset(args, run))
    adapter, results = AnfisAdapter.train(x, y, run.cfg.anfis)
    adapter.save(run.path("anfis_model.json"))
    _write_losses(run.path("anfis_loss.csv"), {m.target: r.history for m, r in zip(adapter.models, results)})
    run.write_manifest()
    for m, r in zip(adapter.models, results):
        print(f"{m.target}: {m.n_rules} rules, loss {r.history[0]:.4g} -> {r.history[-1]:.4g}")
    return 0


def spot_check(adapter, records, n_points: int = 50, seed: int = 0,
               step_tol: int = 2, rel_tol: float = 0.25) -> dict:
    """Share of dataset points whose prediction lies within ``step_tol`` horizon steps
    and ``rel_tol`` relative weight error of the recorded optimum."""
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(records), size=min(n_points, len(records)), replace=False))
    hits = 0
    for i in idx:
        rec = records[i]
        c, o = rec.condition, rec.optimal
        p = adapter.predict(c.vx, c.wind, c.mu, c.y_ref)
        ok = (abs(p.np - o.np) <= step_tol and abs(p.nc - o.nc) <= step_tol
              and abs(p.q - o.q) <= rel_tol * o.q and abs(p.r - o.r) <= rel_tol * o.r)
        hits += ok
    return {"points": int(idx.size), "hits": int(hits), "fraction": hits / idx.size}


def cmd_evaluate(args, run: Run) -> int:
    records = _dataset(args, run)
    kind = args.adapter
    adapter = _load_adapter(kind, args.model, run, lambda: records)
    result = spot_check(adapter, records, args.points, run.cfg.run.seed)
    result["adapter"] = kind
    with open(run.path(f"evaluate-{kind}.json"), "w") as fh:
        json.dump(result, fh, indent=2, sort_keys=True)
        fh.write("\n")
    run.write_manifest()
    print(f"{kind}: {result['hits']}/{result['points']} points within tolerance "
          f"({result['fraction']:.0%})")
    return 0


def cmd_compare(args, run: Run) -> int:
    name = args.scenario or run.cfg.scenario.name
    cache = {}

    def records():
        if "r" not in cache:
            cache["r"] = _dataset(args, run)
        return cache["r"]

    adapters = {"fixed": None,
                "nn-adaptive": _load_adapter("nn", args.nn_model, run, records),
                "anfis-adaptive": _load_adapter("anfis", args.anfis_model, run, records)}
    rows = []
    for mode in MODES:
        sim, summary = _simulate(run, name, mode, adapters[mode], args.timing)
        sim.to_csv(run.path(f"{name}-{mode}.csv"))
        rows.append(summary)
    write_summary({"scenario": name, "results": rows}, run.path(f"{name}-compare.json"))
    run.write_manifest()
    print(f"{'mode':<16}{'mse':>14}{'max_error':>14}")
    for s in rows:
        print(f"{s['mode']:<16}{s['mse']:>14.6g}{s['max_abs_error']:>14.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adaptive-mpc", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML run configuration (defaults built in)")
    common.add_argument("--seed", type=int, help="seed for every stochastic stage")
    common.add_argument("--out", help=f"output directory (else ${OUTPUT_ENV}, else config)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run one scenario")
    p.add_argument("--scenario", choices=BUILTIN_SCENARIOS)
    p.add_argument("--mode", choices=MODES, default="fixed")
    p.add_argument("--model", help="trained adapter file for adaptive modes")
    p.add_argument("--dataset", help="dataset to train on when --model is omitted")
    p.add_argument("--timing", action="store_true", help="record adapter latency (not reproducible)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("tune", parents=[common], help="PSO-tune one operating condition")
    p.add_argument("--vx", type=float, required=True)
    p.add_argument("--wind", type=float, default=0.0)
    p.add_argument("--mu", type=float, default=0.9)
    p.add_argument("--y-ref", type=float, required=True)
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("dataset", parents=[common], help="tune every grid point")
    p.add_argument("--grid", type=int, nargs=4, metavar=("N_VX", "N_YREF", "N_MU", "N_WIND"))
    p.set_defaults(func=cmd_dataset)

    for name, func in (("train-nn", cmd_train_nn), ("train-anfis", cmd_train_anfis)):
        p = sub.add_parser(name, parents=[common], help="fit the adapter to a dataset")
        p.add_argument("--dataset", help="tuning dataset CSV (bundled grid if omitted)")
        p.set_defaults(func=func)

    p = sub.add_parser("evaluate", parents=[common], help="spot-check an adapter against the dataset")
    p.add_argument("--adapter", choices=("nn", "anfis"), required=True)
    p.add_argument("--model")
    p.add_argument("--dataset")
    p.add_argument("--points", type=int, default=50)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", parents=[common], help="fixed vs adaptive MSE table")
    p.add_argument("--scenario", choices=BUILTIN_SCENARIOS)
    p.add_argument("--nn-model")
    p.add_argument("--anfis-model")
    p.add_argument("--dataset")
    p.add_argument("--timing", action="store_true")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        run = Run(args.command, cfg, args.out)
        return args.func(args, run)
    except (ConfigError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SimulationDiverged as exc:
        print(f"error: simulation diverged at step {exc.step}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - one-line diagnostic for any runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
