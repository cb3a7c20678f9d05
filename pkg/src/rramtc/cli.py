"""Command-line harness for the full simulation pipeline.

Every subcommand reads an optional JSON config (flags win over file values),
writes its results as CSV/JSON into --out, echoes the effective config, and
records a manifest.  Outputs are byte-identical across re-runs and worker
counts for a fixed seed.  Figures are rendered next to the data unless
--no-plots is given.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import plots
from .crossbar import (
    NAMED_RANGES,
    CompensationConfig,
    accuracy_vs_temperature,
    map_network,
    parametric_thermal_stats,
)
from .datasets import Dataset, load_idx, synthetic_digits
from .dynamics import (
    PerturbParams,
    SetParams,
    ispp_set,
    perturb_ensemble,
    run_set_ensemble,
)
from .errors import ConfigurationError, RramtcError
from .lattice import generate_grid, load_grid, order_parameter, save_grid
from .mlp import (
    mlp_from_json_dict,
    mlp_to_json_dict,
    quantize_weights,
    train_mlp,
)
from .network import DEFAULT_V_READ, ConductanceModel, NetworkAssembly, export_solve_csv
from .reporting import write_config_echo, write_csv, write_error, write_json, write_manifest
from .seeding import derive_seed
from .tcoeff import (
    DEFAULT_TEMPS,
    EnsembleConfig,
    SCATTER_CONCENTRATIONS,
    STATS_CONCENTRATIONS,
    ThermalStats,
    bin_talpha_stats,
    calibrate_model,
    refit_cell,
    run_ensemble,
)
from .errors import CalibrationError

ENSEMBLE_HEADER = ("trial_id", "c_v", "seed", "r0_ohm", "g0_S", "t_alpha_per_K", "order_param")
SWEEP_HEADER = ("temperature_K", "chip_id", "range_name", "compensated_flag", "accuracy")
PERTURB_HEADER = (
    "trial_id",
    "r0_before",
    "t_alpha_before",
    "r0_after",
    "t_alpha_after",
    "ov_before",
    "ov_after",
)


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in str(text).split(",") if v != "")
    except ValueError as exc:
        raise ConfigurationError(f"bad numeric list {text!r}") from exc


def _load_model(path: str | None) -> ConductanceModel:
    if path is None:
        return ConductanceModel()
    with open(path) as f:
        return ConductanceModel.from_dict(json.load(f))


def _load_dataset(args, seed_tag: str) -> Dataset:
    if args.data == "idx":
        if not (args.idx_images and args.idx_labels):
            raise ConfigurationError("--data idx requires --idx-images and --idx-labels")
        return load_idx(args.idx_images, args.idx_labels)
    n = args.test_per_class if seed_tag == "test" else args.train_per_class
    return synthetic_digits(n, args.noise, derive_seed(args.seed, "data", seed_tag))


def _load_stats(args) -> ThermalStats:
    if getattr(args, "stats", None):
        with open(args.stats) as f:
            return ThermalStats.from_json_dict(json.load(f))
    return parametric_thermal_stats()


def _load_mlp(path: str):
    with open(path) as f:
        return mlp_from_json_dict(json.load(f))


# ---------------------------------------------------------------------------
# Subcommand bodies.  Each returns a dict of manifest extras.


def cmd_ensemble(args, out: Path) -> dict:
    model = _load_model(args.model)
    run = run_ensemble(
        _floats(args.cv),
        args.trials,
        _floats(args.temps),
        args.seed,
        model,
        rows=args.rows,
        cols=args.cols,
        v_read=args.v_read,
        workers=args.workers,
    )
    write_csv(
        out / "ensemble.csv",
        ENSEMBLE_HEADER,
        [
            (r.trial_id, r.c_v, r.seed, r.r0, r.g0, r.t_alpha, r.order_param)
            for r in run.records
        ],
    )
    stats = bin_talpha_stats(run.records)
    write_json(out / "stats.json", stats.to_json_dict())
    if args.dump_grids:
        grid_dir = out / "grids"
        for r in run.records:
            grid = generate_grid(args.rows, args.cols, r.c_v, r.seed)
            save_grid(grid, grid_dir / f"cell_{r.trial_id:04d}_{r.c_v:.4f}.grid")
    if not args.no_plots:
        plots.plot_ensemble_scatter(run.records, out / "scatter.png")
    return {"records": len(run.records), "failures": len(run.failures)}


def cmd_set_sim(args, out: Path) -> dict:
    model = _load_model(args.model)
    params = SetParams(
        target_g=args.target_g,
        max_pulses=args.max_pulses,
        vacancies_per_pulse=args.vacancies_per_pulse,
        redistribution_hops_per_pulse=args.hops,
        power_weighting_exponent=args.exponent,
    )
    temps = _floats(args.temps)
    if args.initial_grid:
        start = load_grid(args.initial_grid)
        traces = [ispp_set(start, model, params, temps, args.seed, args.v_read)]
    else:
        traces = run_set_ensemble(
            args.runs,
            args.start_cv,
            model,
            params,
            temps,
            args.seed,
            rows=args.rows,
            cols=args.cols,
            v_read=args.v_read,
            workers=args.workers,
        )

    write_csv(
        out / "traces.csv",
        ("run_id", "pulse_index", "conductance_S"),
        [
            (run_id, i, g)
            for run_id, tr in enumerate(traces)
            for i, g in enumerate(tr.pulse_conductances)
        ],
    )
    write_csv(
        out / "summary.csv",
        (
            "run_id",
            "pulses_to_target",
            "final_g_S",
            "final_t_alpha_per_K",
            "fluctuation_std_S",
            "reached_target",
            "final_c_v",
            "final_order_param",
        ),
        [
            (
                run_id,
                tr.pulses_to_target,
                tr.final_g,
                tr.final_t_alpha,
                tr.fluctuation_std,
                tr.reached_target,
                tr.final_grid.c_v,
                order_parameter(tr.final_grid),
            )
            for run_id, tr in enumerate(traces)
        ],
    )
    read = NetworkAssembly(traces[0].final_grid).solve(model, model.t0, args.v_read)
    export_solve_csv(read, out / "current_density.csv")
    if args.dump_grids:
        for run_id, tr in enumerate(traces):
            save_grid(tr.final_grid, out / "grids" / f"run_{run_id:04d}.grid")
    if not args.no_plots:
        plots.plot_set_traces(traces, out / "traces.png")
        from .network import current_density_map

        plots.plot_current_map(read, current_density_map(read), out / "current_map.png")
    return {
        "runs": len(traces),
        "reached_target": sum(tr.reached_target for tr in traces),
    }


def cmd_perturb(args, out: Path) -> dict:
    model = _load_model(args.model)
    temps = _floats(args.temps)
    cells = []
    if args.grids:
        paths = sorted(Path(args.grids).glob("*.grid"))
        if not paths:
            raise ConfigurationError(f"no .grid files under {args.grids}")
        for i, p in enumerate(paths):
            grid = load_grid(p)
            cells.append((refit_cell(grid, temps, model, v_read=args.v_read, trial_id=i), grid))
    elif args.from_ensemble:
        from .tcoeff import EnsembleRecord, rebuild_grid

        with open(args.from_ensemble, newline="") as f:
            import csv as _csv

            for row in _csv.DictReader(f):
                rec = EnsembleRecord(
                    trial_id=int(row["trial_id"]),
                    c_v=float(row["c_v"]),
                    r0=float(row["r0_ohm"]),
                    t_alpha=float(row["t_alpha_per_K"]),
                    order_param=float(row["order_param"]),
                    seed=int(row["seed"]),
                )
                cells.append((rec, rebuild_grid(rec, args.rows, args.cols)))
    else:
        raise ConfigurationError("need --grids or --from-ensemble")

    if args.lrs_only:
        cells = [(rec, grid) for rec, grid in cells if rec.g0 >= args.lrs_threshold]
        if not cells:
            raise ConfigurationError("no cells left after the LRS filter")

    params = PerturbParams(steps=args.steps, p_far=args.p_far, r_far=args.r_far, seed=args.seed)
    pairs = perturb_ensemble(cells, params, model, temps, v_read=args.v_read, workers=args.workers)
    write_csv(
        out / "perturb.csv",
        PERTURB_HEADER,
        [
            (
                p.before.trial_id,
                p.before.r0,
                p.before.t_alpha,
                p.after.r0,
                p.after.t_alpha,
                p.before.order_param,
                p.after.order_param,
            )
            for p in pairs
        ],
    )
    write_json(out / "stats_before.json", bin_talpha_stats([p.before for p in pairs]).to_json_dict())
    write_json(out / "stats_after.json", bin_talpha_stats([p.after for p in pairs]).to_json_dict())
    if not args.no_plots:
        plots.plot_perturb_shift(pairs, out / "shift.png")
    pos_before = float(np.mean([p.before.t_alpha > 0 for p in pairs]))
    pos_after = float(np.mean([p.after.t_alpha > 0 for p in pairs]))
    return {"cells": len(pairs), "positive_before": pos_before, "positive_after": pos_after}


def cmd_calibrate(args, out: Path) -> dict:
    base = _load_model(args.model)
    config = EnsembleConfig(
        concentrations=_floats(args.cv),
        n_trials=args.trials,
        temps=_floats(args.temps),
        master_seed=args.seed,
        rows=args.rows,
        cols=args.cols,
        v_read=args.v_read,
        workers=args.workers,
    )
    search = _floats(args.search)
    if len(search) != 2:
        raise ConfigurationError("--search wants two comma-separated bounds")
    try:
        result = calibrate_model(
            args.target,
            ensemble_config=config,
            search_range=(search[0], search[1]),
            model=base,
            coarse_points=args.coarse_points,
            refine_steps=args.refine_steps,
        )
    except CalibrationError as exc:
        if exc.result is not None:
            write_csv(
                out / "calibration.csv",
                ("alpha_semi", "low_range_mean_t_alpha"),
                exc.result.evaluations,
            )
        raise
    write_csv(
        out / "calibration.csv",
        ("alpha_semi", "low_range_mean_t_alpha"),
        result.evaluations,
    )
    write_json(out / "model.json", result.model.to_dict())
    return {
        "achieved_low_mean": result.achieved_low_mean,
        "target": result.target,
        "abs_error": result.abs_error,
        "evaluations": len(result.evaluations),
    }


def cmd_train(args, out: Path) -> dict:
    train_set = _load_dataset(args, "train")
    test_set = _load_dataset(args, "test")
    losses: list[float] = []
    mlp = train_mlp(
        train_set,
        epochs=args.epochs,
        learning_rate=args.lr,
        seed=derive_seed(args.seed, "train"),
        n_hidden=args.hidden,
        batch_size=args.batch_size,
        on_epoch=lambda _e, loss: losses.append(loss),
    )
    write_json(out / "weights.json", mlp_to_json_dict(mlp))
    write_csv(out / "history.csv", ("epoch", "mean_loss"), list(enumerate(losses)))
    if not args.no_plots:
        plots.plot_training_curve(losses, out / "loss.png")
    return {
        "train_accuracy": mlp.accuracy(train_set.images, train_set.labels),
        "test_accuracy": mlp.accuracy(test_set.images, test_set.labels),
        "shape": list(mlp.shape),
    }


def cmd_map(args, out: Path) -> dict:
    mlp = _load_mlp(args.weights)
    qmlp = quantize_weights(mlp, args.levels)
    network = map_network(qmlp, args.range)
    write_json(
        out / "quantized.json",
        {
            "levels": args.levels,
            "range_name": network.range_name,
            "w_max": [qmlp.layer1.w_max, qmlp.layer2.w_max],
        },
    )
    for idx, xbar in enumerate(network.crossbars, start=1):
        level = (qmlp.layer1 if idx == 1 else qmlp.layer2).level_index
        rows_iter = (
            (r, c, int(level[r, c]), xbar.g_plus[r, c], xbar.g_minus[r, c])
            for r in range(xbar.shape[0])
            for c in range(xbar.shape[1])
        )
        write_csv(
            out / f"crossbar_layer{idx}.csv",
            ("row", "col", "level", "g_plus_S", "g_minus_S"),
            rows_iter,
        )
    return {"range_name": network.range_name, "levels": args.levels}


def _sweep_common(args, temps) -> tuple:
    mlp = _load_mlp(args.weights)
    qmlp = quantize_weights(mlp, args.levels)
    network = map_network(qmlp, args.range)
    stats = _load_stats(args)
    test_set = _load_dataset(args, "test")
    comp = CompensationConfig(assumed_t_alpha=args.assumed_talpha, enabled=True)
    result = accuracy_vs_temperature(
        network,
        test_set,
        temps,
        args.chips,
        args.seed,
        stats,
        compensation=comp,
        workers=args.workers,
    )
    return network, result


def cmd_infer(args, out: Path) -> dict:
    network, result = _sweep_common(args, (args.temperature,))
    records = [r for r in result.records if args.compensate or not r.compensated]
    write_csv(
        out / "infer.csv",
        SWEEP_HEADER,
        [
            (r.temperature, r.chip_id, r.range_name, r.compensated, r.accuracy)
            for r in records
        ],
    )
    return {"summary": result.summary()}


def cmd_sweep(args, out: Path) -> dict:
    network, result = _sweep_common(args, _floats(args.temps))
    records = [r for r in result.records if args.compensate or not r.compensated]
    write_csv(
        out / "sweep.csv",
        SWEEP_HEADER,
        [
            (r.temperature, r.chip_id, r.range_name, r.compensated, r.accuracy)
            for r in records
        ],
    )
    summary = [row for row in result.summary() if args.compensate or not row["compensated_flag"]]
    write_csv(
        out / "summary.csv",
        ("temperature_K", "compensated_flag", "mean_accuracy", "min_accuracy", "p5_accuracy", "n_chips"),
        [
            (
                row["temperature_K"],
                row["compensated_flag"],
                row["mean_accuracy"],
                row["min_accuracy"],
                row["p5_accuracy"],
                row["n_chips"],
            )
            for row in summary
        ],
    )
    if not args.no_plots:
        plots.plot_accuracy_sweep(summary, out / "sweep.png")
    return {"rows": len(records)}


# ---------------------------------------------------------------------------
# Parser assembly


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--workers", type=int, default=1, help="process pool size")
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--no-plots", action="store_true", help="skip figure rendering")


def _add_lattice_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--rows", type=int, default=40)
    p.add_argument("--cols", type=int, default=32)
    p.add_argument("--v-read", type=float, default=DEFAULT_V_READ)
    p.add_argument("--temps", default=",".join(str(t) for t in DEFAULT_TEMPS))
    p.add_argument("--model", help="conductance model JSON (from calibrate)")


def _add_dataset_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", choices=("synthetic", "idx"), default="synthetic")
    p.add_argument("--idx-images")
    p.add_argument("--idx-labels")
    p.add_argument("--train-per-class", type=int, default=200)
    p.add_argument("--test-per-class", type=int, default=50)
    p.add_argument("--noise", type=float, default=0.7)


def _add_mapping_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--weights", required=True, help="weights.json from train")
    p.add_argument("--levels", type=int, default=8)
    p.add_argument("--range", choices=sorted(NAMED_RANGES), default="full")
    p.add_argument("--stats", help="ThermalStats JSON (from ensemble); parametric if omitted")
    p.add_argument("--assumed-talpha", type=float, default=-0.004)
    p.add_argument("--chips", type=int, default=10)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rramtc",
        description="Vacancy-network RRAM simulator: ensembles, programming, "
        "perturbation, and crossbar inference over temperature.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("ensemble", help="Monte Carlo cell ensemble and range statistics")
    _add_common(p)
    _add_lattice_opts(p)
    p.add_argument("--cv", default=",".join(str(c) for c in SCATTER_CONCENTRATIONS))
    p.add_argument("--trials", type=int, default=300)
    p.add_argument("--dump-grids", action="store_true")
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("set-sim", help="pulse programming runs to a target conductance")
    _add_common(p)
    _add_lattice_opts(p)
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--start-cv", type=float, default=0.35)
    p.add_argument("--initial-grid", help="grid file; runs a single trace from it")
    p.add_argument("--target-g", type=float, default=60e-6)
    p.add_argument("--max-pulses", type=int, default=400)
    p.add_argument("--vacancies-per-pulse", type=int, default=2)
    p.add_argument("--hops", type=int, default=20)
    p.add_argument("--exponent", type=float, default=1.0)
    p.add_argument("--dump-grids", action="store_true")
    p.set_defaults(func=cmd_set_sim)

    p = sub.add_parser("perturb", help="vacancy hopping disturb on stored cells")
    _add_common(p)
    _add_lattice_opts(p)
    p.add_argument("--grids", help="directory of .grid files")
    p.add_argument("--from-ensemble", help="ensemble.csv; grids rebuilt from seeds")
    p.add_argument("--lrs-only", action="store_true", help="keep only low-resistance cells")
    p.add_argument("--lrs-threshold", type=float, default=50e-6)
    p.add_argument("--steps", type=int, default=400)
    p.add_argument("--p-far", type=float, default=0.05)
    p.add_argument("--r-far", type=int, default=5)
    p.set_defaults(func=cmd_perturb)

    p = sub.add_parser("calibrate", help="tune the bond model to a target low-range mean")
    _add_common(p)
    _add_lattice_opts(p)
    p.add_argument("--target", type=float, default=-0.004)
    p.add_argument("--cv", default=",".join(str(c) for c in STATS_CONCENTRATIONS))
    p.add_argument("--trials", type=int, default=40)
    p.add_argument("--search", default="-0.0065,-0.002")
    p.add_argument("--coarse-points", type=int, default=5)
    p.add_argument("--refine-steps", type=int, default=6)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("train", help="train the float classifier")
    _add_common(p)
    _add_dataset_opts(p)
    p.add_argument("--hidden", type=int, default=100)
    p.add_argument("--epochs", type=int, default=25)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=64)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("map", help="quantize weights and map to conductance pairs")
    _add_common(p)
    _add_mapping_opts(p)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("infer", help="accuracy of mapped chips at one temperature")
    _add_common(p)
    _add_dataset_opts(p)
    _add_mapping_opts(p)
    p.add_argument("--temperature", type=float, default=300.0)
    p.add_argument("--compensate", action="store_true", help="also emit compensated rows")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("sweep", help="accuracy distribution across temperatures")
    _add_common(p)
    _add_dataset_opts(p)
    _add_mapping_opts(p)
    p.add_argument("--temps", default="300,325,350,375,400")
    p.add_argument("--compensate", action="store_true", help="also emit compensated rows")
    p.set_defaults(func=cmd_sweep)

    return parser


def _apply_config_file(parser: argparse.ArgumentParser, argv: list[str]) -> None:
    """Merge a --config JSON under the flags of the chosen subcommand."""
    if "--config" not in argv:
        return
    path = argv[argv.index("--config") + 1]
    with open(path) as f:
        cfg = json.load(f)
    if not isinstance(cfg, dict):
        raise ConfigurationError(f"{path}: config must be a JSON object")
    # find the subparser for the command named in argv
    sub_actions = [a for a in parser._actions if isinstance(a, argparse._SubParsersAction)]
    chosen = next((tok for tok in argv if tok in sub_actions[0].choices), None)
    if chosen is None:
        return
    sub = sub_actions[0].choices[chosen]
    known = {a.dest for a in sub._actions}
    unknown = set(cfg) - known
    if unknown:
        raise ConfigurationError(f"{path}: unknown config keys {sorted(unknown)}")
    sub.set_defaults(**cfg)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        _apply_config_file(parser, argv)
    except (OSError, json.JSONDecodeError, ConfigurationError, IndexError) as exc:
        parser.exit(2, f"{parser.prog}: config error: {exc}\n")
    args = parser.parse_args(argv)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()
    try:
        extra = args.func(args, out)
    except RramtcError as exc:
        write_error(out, args.subcommand, exc)
        return 1
    except Exception as exc:  # noqa: BLE001 - last-resort path still emits machine-readable JSON
        write_error(out, args.subcommand, exc)
        return 1

    echo = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    write_config_echo(out, echo)
    write_manifest(out, args.subcommand, args.seed, time.time() - started, extra)
    return 0


if __name__ == "__main__":
    sys.exit(main())
