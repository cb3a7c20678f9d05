"""End-to-end acceptance gate.

Each test prints one ``[criterion NN] PASS/FAIL`` line (run with ``pytest -s``
to see them all); the expensive artifacts — calibrated model, 900-cell
ensemble, 120-run programming batch, trained/mapped classifier — are built
once per session and shared.
"""

import csv
import json
import time
from pathlib import Path

import numpy as np
import pytest
import scipy.stats

from helpers import dense_solve, kcl_residuals
from rramtc.cli import main as cli_main
from rramtc.crossbar import (
    CompensationConfig,
    accuracy_vs_temperature,
    assign_talpha,
    compensate,
    crossbar_matvec,
    map_network,
    map_to_conductance,
    parametric_thermal_stats,
)
from rramtc.datasets import synthetic_digits
from rramtc.dynamics import PerturbParams, SetParams, perturb_ensemble, run_set_ensemble
from rramtc.lattice import VacancyGrid, bond_arrays, generate_grid
from rramtc.mlp import (
    QuantizedLayer,
    init_mlp,
    loss_and_grads,
    quantize_weights,
    train_mlp,
)
from rramtc.network import ConductanceModel, solve_network
from rramtc.seeding import derive_seed, make_rng
from rramtc.tcoeff import (
    DEFAULT_TEMPS,
    EnsembleConfig,
    bin_talpha_stats,
    calibrate_model,
    fit_talpha,
    refit_cell,
    run_ensemble,
)

WORKERS = 4
LRS_THRESHOLD = 50e-6


def _report(criterion: int, passed: bool, detail: str) -> None:
    print(f"\n[criterion {criterion:02d}] {'PASS' if passed else 'FAIL'}: {detail}")
    assert passed, f"criterion {criterion:02d}: {detail}"


# ---------------------------------------------------------------------------
# Shared expensive artifacts


@pytest.fixture(scope="session")
def calibrated():
    return calibrate_model(-0.004, EnsembleConfig(workers=WORKERS))


@pytest.fixture(scope="session")
def big_ensemble(calibrated):
    started = time.perf_counter()
    run = run_ensemble(
        (0.50, 0.55, 0.58),
        300,
        DEFAULT_TEMPS,
        master_seed=424242,
        model=calibrated.model,
        workers=WORKERS,
    )
    return run, time.perf_counter() - started


@pytest.fixture(scope="session")
def ensemble_stats(big_ensemble):
    run, _ = big_ensemble
    return bin_talpha_stats(run.records)


@pytest.fixture(scope="session")
def ispp_batch():
    traces = run_set_ensemble(
        n_runs=120,
        c_v=0.35,
        model=ConductanceModel(),
        params=SetParams(target_g=60e-6, max_pulses=400),
        temps=DEFAULT_TEMPS,
        master_seed=2101,
        workers=WORKERS,
    )
    return [t for t in traces if t.reached_target]


@pytest.fixture(scope="session")
def perturbed(ispp_batch):
    model = ConductanceModel()
    cells = []
    for i, trace in enumerate(ispp_batch):
        rec = refit_cell(trace.final_grid, DEFAULT_TEMPS, model, trial_id=i, seed=i)
        if rec.g0 >= LRS_THRESHOLD:
            cells.append((rec, trace.final_grid))
    pairs = perturb_ensemble(
        cells, PerturbParams(steps=400, seed=777), model, DEFAULT_TEMPS, workers=WORKERS
    )
    return pairs


@pytest.fixture(scope="session")
def pipeline(ensemble_stats):
    # noise 0.875 / 40 hidden units sits where drift visibly hurts the
    # full-range mapping while the low-range scatter stays recoverable
    started = time.perf_counter()
    train = synthetic_digits(200, noise=0.875, seed=derive_seed(4242, "data", "train"))
    test = synthetic_digits(100, noise=0.875, seed=derive_seed(4242, "data", "test"))
    mlp = train_mlp(
        train, epochs=25, learning_rate=0.1, seed=derive_seed(4242, "train"), n_hidden=40
    )
    qmlp = quantize_weights(mlp, levels=8)
    temps = (300.0, 325.0, 350.0, 375.0, 400.0)
    sweeps = {
        name: accuracy_vs_temperature(
            map_network(qmlp, name), test, temps, n_chips=24, master_seed=515,
            stats=ensemble_stats, workers=WORKERS,
        )
        for name in ("full", "low")
    }
    return {
        "train": train,
        "test": test,
        "mlp": mlp,
        "qmlp": qmlp,
        "sweeps": sweeps,
        "elapsed": time.perf_counter() - started,
    }


# ---------------------------------------------------------------------------
# Criteria


def test_01_solver_matches_dense_oracle():
    model = ConductanceModel()
    rng = make_rng(9001)
    started = time.perf_counter()
    worst_rel = 0.0
    worst_kcl = 0.0
    for i in range(200):
        rows = int(rng.integers(2, 7))
        cols = int(rng.integers(1, 7))
        grid = generate_grid(rows, cols, float(rng.uniform(0.0, 1.0)), int(rng.integers(2**31)))
        temperature = float(rng.uniform(250.0, 450.0))
        res = solve_network(grid, model, temperature)
        _, _, r_oracle = dense_solve(grid, model, temperature)
        worst_rel = max(worst_rel, abs(res.resistance - r_oracle) / r_oracle)
        resid = kcl_residuals(res)
        if resid.size:  # rows=2 grids have no interior nodes
            worst_kcl = max(worst_kcl, np.abs(resid).max() / res.total_current)
    elapsed = time.perf_counter() - started
    ok = worst_rel < 1e-9 and worst_kcl < 1e-10 and elapsed < 5.0
    _report(
        1,
        ok,
        f"200 grids: max rel resistance err {worst_rel:.2e} (<1e-9), "
        f"max KCL residual {worst_kcl:.2e} of total (<1e-10), {elapsed:.2f}s (<5s)",
    )


def test_02_uniform_grid_analytic_case():
    model = ConductanceModel()
    grid = VacancyGrid(40, 32, np.ones((40, 32), dtype=bool), None)
    res = solve_network(grid, model, model.t0)
    expected = 39.0 / (32.0 * model.g_metal)
    rel = abs(res.resistance - expected) / expected
    a, b, _ = bond_arrays(grid)
    horizontal = (b - a) == 1
    h_max = np.abs(res.bond_currents[horizontal]).max()
    v_max = np.abs(res.bond_currents[~horizontal]).max()
    ok = rel < 1e-10 and h_max < 1e-12 * v_max
    _report(
        2,
        ok,
        f"R rel err {rel:.2e} (<1e-10); max |horizontal I| {h_max:.2e} "
        f"< 1e-12 * max vertical {v_max:.2e}",
    )


def test_03_fit_recovery_exact_and_noisy():
    true_r0, true_ta = 5.0e4, -0.004
    temps = np.array(DEFAULT_TEMPS)
    clean = true_r0 * (1 + true_ta * (temps - 300.0))

    exact = fit_talpha(list(zip(temps, clean)))
    rel_r0 = abs(exact.r0 - true_r0) / abs(true_r0)
    rel_ta = abs(exact.t_alpha - true_ta) / abs(true_ta)

    rng = make_rng(33)
    estimates = np.empty((1000, 2))
    for i in range(1000):
        noisy = clean * (1 + 0.05 * rng.standard_normal(len(temps)))
        fit = fit_talpha(list(zip(temps, noisy)))
        estimates[i] = fit.r0, fit.t_alpha
    sigma = estimates.std(axis=0)
    truth = np.array([true_r0, true_ta])
    within = (np.abs(estimates - truth) <= 3.0 * sigma).mean(axis=0)
    bias_ok = np.all(np.abs(estimates.mean(axis=0) - truth) <= 4.0 * sigma / np.sqrt(1000))

    ok = rel_r0 < 1e-12 and rel_ta < 1e-12 and within.min() >= 0.99 and bias_ok
    _report(
        3,
        ok,
        f"exact: rel err r0 {rel_r0:.1e}, t_alpha {rel_ta:.1e} (<1e-12); "
        f"5% noise x1000: within-3-sigma fractions r0 {within[0]:.3f}, "
        f"t_alpha {within[1]:.3f} (>=0.99), bias within 4 sem: {bias_ok}",
    )


def test_04_ensemble_trends(big_ensemble):
    run, elapsed = big_ensemble
    concs = (0.50, 0.55, 0.58)
    pos_frac = []
    median_r0 = []
    for c in concs:
        recs = run.by_concentration(c)
        assert len(recs) >= 290, f"too many failed trials at c_v={c}"
        pos_frac.append(float(np.mean([r.t_alpha > 0 for r in recs])))
        median_r0.append(float(np.median([r.r0 for r in recs])))
    monotone_pos = all(a <= b + 1e-12 for a, b in zip(pos_frac, pos_frac[1:]))
    monotone_r0 = all(a >= b - 1e-12 for a, b in zip(median_r0, median_r0[1:]))
    ok = monotone_pos and monotone_r0 and elapsed < 600.0
    _report(
        4,
        ok,
        f"positive-coefficient fraction {[round(p, 3) for p in pos_frac]} non-decreasing; "
        f"median r0 {[round(m) for m in median_r0]} ohm non-increasing; "
        f"900 trials in {elapsed:.1f}s (<600s)",
    )


def test_05_calibration_and_cv_ordering(calibrated, ensemble_stats):
    target = -0.004
    err_frac = abs(calibrated.achieved_low_mean - target) / abs(target)
    cvs = [ensemble_stats[name].cv_percent for name in ("low", "middle", "high")]
    counts = [ensemble_stats[name].sample_count for name in ("low", "middle", "high")]
    ordered = cvs[0] < cvs[1] < cvs[2]
    ok = calibrated.ok and err_frac <= 0.30 and ordered and min(counts) >= 2
    _report(
        5,
        ok,
        f"low-range mean {calibrated.achieved_low_mean:.5f} vs {target} "
        f"({err_frac:.1%} off, <=30%); cv% low/middle/high = "
        f"{[round(v, 2) for v in cvs]} strictly increasing (n={counts})",
    )


def test_06_programming_cohort_comparison(ispp_batch):
    pos = [t for t in ispp_batch if t.final_t_alpha > 0]
    neg = [t for t in ispp_batch if t.final_t_alpha < 0]
    pulses_pos = np.array([t.pulses_to_target for t in pos])
    pulses_neg = np.array([t.pulses_to_target for t in neg])
    fluct_pos = np.array([t.fluctuation_std for t in pos])
    fluct_neg = np.array([t.fluctuation_std for t in neg])
    # one-sided Welch tests in the claimed directions
    p_pulses = scipy.stats.ttest_ind(
        pulses_neg, pulses_pos, equal_var=False, alternative="greater"
    ).pvalue
    p_fluct = scipy.stats.ttest_ind(
        fluct_pos, fluct_neg, equal_var=False, alternative="greater"
    ).pvalue
    ok = (
        len(ispp_batch) >= 50
        and len(pos) >= 10
        and len(neg) >= 10
        and pulses_neg.mean() > pulses_pos.mean()
        and p_pulses < 0.05
        and fluct_pos.mean() > fluct_neg.mean()
        and p_fluct < 0.05
    )
    _report(
        6,
        ok,
        f"{len(ispp_batch)} runs reached target ({len(pos)} pos / {len(neg)} neg); "
        f"pulses neg {pulses_neg.mean():.1f} > pos {pulses_pos.mean():.1f} "
        f"(p={p_pulses:.2e}); fluctuation pos {fluct_pos.mean() * 1e6:.2f} > "
        f"neg {fluct_neg.mean() * 1e6:.2f} uS (p={p_fluct:.2e})",
    )


def test_07_perturbation_direction(perturbed):
    pos_before = float(np.mean([p.before.t_alpha > 0 for p in perturbed]))
    pos_after = float(np.mean([p.after.t_alpha > 0 for p in perturbed]))
    order_before = float(np.mean([p.before.order_param for p in perturbed]))
    order_after = float(np.mean([p.after.order_param for p in perturbed]))
    ok = len(perturbed) >= 100 and pos_after < pos_before and order_after < order_before
    _report(
        7,
        ok,
        f"{len(perturbed)} low-resistance cells: positive-coefficient fraction "
        f"{pos_before:.3f} -> {pos_after:.3f}; mean order parameter "
        f"{order_before:.4f} -> {order_after:.4f}",
    )


def test_08_compensation_identity():
    rng = make_rng(88)
    idx = rng.integers(-7, 8, size=(48, 24))
    xbar = map_to_conductance(QuantizedLayer(8, idx, 1.0), "full")
    uniform = parametric_thermal_stats(
        anchor_t_alpha=-0.004, slope_per_decade=0.0, cv_percents=(0.0, 0.0, 0.0)
    )
    xbar = assign_talpha(xbar, uniform, seed=1)
    comp = CompensationConfig(assumed_t_alpha=-0.004)
    worst = 0.0
    for temperature in (325.0, 375.0, 450.0):
        v = rng.uniform(0.0, 1.0, size=(100, 48))
        i_ref = crossbar_matvec(xbar, v, 300.0)
        i_fixed = compensate(crossbar_matvec(xbar, v, temperature), comp, temperature)
        worst = max(worst, float(np.abs(i_fixed - i_ref).max() / np.abs(i_ref).max()))
    ok = worst < 1e-12
    _report(8, ok, f"uniform-coefficient compensation: max rel deviation {worst:.2e} (<1e-12)")


def test_09_end_to_end_accuracy(pipeline):
    test = pipeline["test"]
    float_acc = pipeline["mlp"].accuracy(test.images, test.labels)
    quant_acc = pipeline["qmlp"].to_mlp().accuracy(test.images, test.labels)
    full, low = pipeline["sweeps"]["full"], pipeline["sweeps"]["low"]

    t0_analog = float(full.accuracies(300.0, False).mean())
    hot_uncomp = float(full.accuracies(400.0, False).mean())
    hot_low_comp = float(low.accuracies(400.0, True).mean())
    drop = quant_acc - hot_uncomp
    recovery = (hot_low_comp - hot_uncomp) / drop if drop > 0 else 0.0
    cool_gap = max(
        abs(float(low.accuracies(t, True).mean()) - float(low.accuracies(t, False).mean()))
        for t in (300.0, 325.0, 350.0)
    )

    checks = {
        "a": abs(t0_analog - quant_acc) <= 0.002,
        "b": float_acc - quant_acc <= 0.03,
        "c": drop >= 0.05,
        "d": recovery >= 0.50,
        "e": cool_gap < 0.01,
        "time": pipeline["elapsed"] < 900.0,
    }
    _report(
        9,
        all(checks.values()),
        f"float {float_acc:.3f}, quantized {quant_acc:.3f} (gap {float_acc - quant_acc:.3f} "
        f"<=0.03 [{checks['b']}]); T0 analog {t0_analog:.3f} (|diff| "
        f"{abs(t0_analog - quant_acc):.4f} <=0.002 [{checks['a']}]); 400K full-range "
        f"uncompensated {hot_uncomp:.3f}, drop {drop * 100:.1f} pts >=5 [{checks['c']}]; "
        f"low+compensation {hot_low_comp:.3f} recovers {recovery:.0%} >=50% [{checks['d']}]; "
        f"<=350K comp gap {cool_gap * 100:.2f} pts <1 [{checks['e']}]; "
        f"{pipeline['elapsed']:.0f}s (<900s) [{checks['time']}]",
    )


def test_10_worker_determinism(tmp_path_factory):
    root = tmp_path_factory.mktemp("determinism")

    def run_cli(*argv) -> int:
        return cli_main([str(a) for a in argv])

    ens_dir = root / "ensemble-w1"
    train_dir = root / "train-w1"
    jobs = [
        (
            "ensemble",
            ["--seed", "3", "--cv", "0.5,0.55", "--trials", "4", "--rows", "12",
             "--cols", "10"],
            ["ensemble.csv", "stats.json"],
        ),
        (
            "set-sim",
            ["--seed", "7", "--runs", "4", "--rows", "10", "--cols", "8",
             "--start-cv", "0.35", "--target-g", "60e-6", "--max-pulses", "120"],
            ["traces.csv", "summary.csv", "current_density.csv"],
        ),
        (
            "perturb",
            ["--seed", "5", "--from-ensemble", ens_dir / "ensemble.csv",
             "--rows", "12", "--cols", "10", "--steps", "50"],
            ["perturb.csv", "stats_before.json", "stats_after.json"],
        ),
        (
            "calibrate",
            ["--seed", "9", "--target", "-0.004", "--cv", "0.5,0.55", "--trials", "4",
             "--rows", "12", "--cols", "10", "--coarse-points", "3",
             "--refine-steps", "1"],
            ["calibration.csv"],
        ),
        (
            "train",
            ["--seed", "11", "--train-per-class", "5", "--test-per-class", "3",
             "--noise", "0.5", "--epochs", "2", "--hidden", "12"],
            ["weights.json", "history.csv"],
        ),
        (
            "map",
            ["--seed", "13", "--weights", train_dir / "weights.json", "--range", "full"],
            ["quantized.json", "crossbar_layer1.csv", "crossbar_layer2.csv"],
        ),
        (
            "infer",
            ["--seed", "13", "--weights", train_dir / "weights.json",
             "--test-per-class", "3", "--noise", "0.5", "--temperature", "375",
             "--chips", "3", "--compensate"],
            ["infer.csv"],
        ),
        (
            "sweep",
            ["--seed", "13", "--weights", train_dir / "weights.json",
             "--test-per-class", "3", "--noise", "0.5", "--temps", "300,375",
             "--chips", "3", "--compensate"],
            ["sweep.csv", "summary.csv"],
        ),
    ]

    failures = []
    for sub, args, files in jobs:
        outputs = {}
        codes = set()
        for tag, workers in (("w1", 1), ("w1b", 1), ("w4", 4), ("w8", 8)):
            out = root / f"{sub}-{tag}"
            codes.add(run_cli(sub, "--out", out, "--workers", workers, "--no-plots", *args))
            outputs[tag] = {f: (out / f).read_bytes() for f in files if (out / f).exists()}
        if len(codes) != 1:
            failures.append(f"{sub}: exit codes differ {codes}")
            continue
        ref = outputs["w1"]
        if set(ref) != set(files):
            failures.append(f"{sub}: missing outputs {sorted(set(files) - set(ref))}")
            continue
        for tag in ("w1b", "w4", "w8"):
            for f in files:
                if outputs[tag].get(f) != ref[f]:
                    failures.append(f"{sub}: {f} differs between w1 and {tag}")
    ok = not failures
    _report(
        10,
        ok,
        "all 8 subcommands byte-identical across re-runs at 1/4/8 workers"
        if ok
        else "; ".join(failures),
    )


def test_11_trainer_gradient_check():
    rng = make_rng(7)
    x = rng.uniform(0.0, 1.0, size=(12, 6))
    labels = rng.integers(0, 3, size=12)
    mlp = init_mlp(6, 4, 3, seed=1)
    _, grads = loss_and_grads(mlp, x, labels)

    eps = 1e-6
    worst = 0.0
    for name in ("w1", "b1", "w2", "b2"):
        arr = getattr(mlp, name)
        numeric = np.zeros_like(arr)
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = arr[i]
            arr[i] = old + eps
            up, _ = loss_and_grads(mlp, x, labels)
            arr[i] = old - eps
            down, _ = loss_and_grads(mlp, x, labels)
            arr[i] = old
            numeric[i] = (up - down) / (2 * eps)
        scale = max(float(np.abs(numeric).max()), 1e-12)
        worst = max(worst, float(np.abs(grads[name] - numeric).max()) / scale)
    ok = worst < 1e-5
    _report(11, ok, f"max relative gradient error {worst:.2e} (<1e-5)")
