"""One check per acceptance criterion; each prints a PASS/FAIL line (see the terminal summary)."""

import math
import os
import time
from pathlib import Path

import numpy as np
import pytest

import test_cggd as hand
import test_constraints as directions
from cghi.cggd import TrainConfig, cggd_toy_demo, train
from cghi.data import load_pronostia_run, prepare_runs, synthetic_runs
from cghi.metrics import consistency, loess_smooth, robustness, trendability
from cghi.models import ArchitectureSpec, build
from cghi.nnet import BatchNorm1d, Conv1d, ConvTranspose1d, Dense, ReLU, Reshape
from cghi.softrank import project_permutahedron, soft_rank
from gradcheck import check_layer, numeric_grad, rel_err
from oracles import permutahedron_projection
from pipeline import run_pipeline

# tolerances and budgets
FD_TOL = 1e-4
N_MICRO = 24
ORACLE_BUDGET_S = 60.0
HAND_TOL = 1e-10
PROJ_TOL = 1e-8
LIMIT_TOL = 1e-3
DESK_BUDGET_S = 600.0
IN_RANGE_MIN = 0.95
TREND_MAX = -0.85
HI_RANGE = (-0.02, 1.02)
NOISE_CONS_MAX = 0.15


# ------------------------------------------------------------------ 1: gradients

def _bn(rng, c):
    layer = BatchNorm1d(c)
    layer.params["gamma"] = rng.uniform(0.5, 1.5, c)
    layer.params["beta"] = rng.standard_normal(c)
    layer.buffers["running_mean"] = rng.standard_normal(c)
    layer.buffers["running_var"] = rng.uniform(0.5, 2.0, c)
    return layer


def _micro_config_error(k: int) -> float:
    rng = np.random.default_rng(1000 + k)
    b = int(rng.integers(2, 5))
    cin, cout = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    L = int(rng.integers(4, 9))
    stride = int(rng.integers(1, 3))
    errs = [
        check_layer(Conv1d(cin, cout, 3, stride, 1, rng=rng), rng.standard_normal((b, cin, L)), False, rng),
        check_layer(ConvTranspose1d(cin, cout, 3, stride, 1, output_padding=stride - 1, rng=rng),
                    rng.standard_normal((b, cin, L)), False, rng),
        check_layer(Dense(L, cout, rng=rng), rng.standard_normal((b, L)), False, rng),
        check_layer(_bn(rng, cin), rng.standard_normal((b, cin, L)), bool(k % 2 == 0), rng),
        check_layer(_bn(rng, cin), rng.standard_normal((b + 1, cin)), True, rng),
        check_layer(Reshape((cin, L)), rng.standard_normal((b, cin * L)), False, rng),
    ]
    # keep ReLU inputs away from the kink
    x = rng.standard_normal((b, cin, L))
    errs.append(check_layer(ReLU(), np.sign(x) * (0.1 + np.abs(x)), False, rng))

    spec = ArchitectureSpec(input_length=8, in_channels=int(rng.integers(1, 3)),
                            enc_filters=(int(rng.integers(2, 4)), 2), latent=int(rng.integers(2, 4)),
                            dec_filters=(2, int(rng.integers(2, 4))), head_units=(3,))
    xs = rng.standard_normal((4, 8, spec.in_channels))
    times = rng.uniform(size=4)
    for variant, loss in (("ccae", lambda m: m.reconstruction_loss(xs)),
                          ("sr_cae", lambda m: m.total_loss_sr(xs, times, 1.0))):
        model = build(variant, k, spec)
        grads = {n: g.copy() for n, g in loss(model)[1].items()}
        for name, p in model.named_parameters().items():
            errs.append(rel_err(grads[name], numeric_grad(lambda: loss(model)[0], p)))
    return max(errs)


def test_c01_gradient_integrity(accept):
    t0 = time.perf_counter()
    worst = max(_micro_config_error(k) for k in range(N_MICRO))
    dt = time.perf_counter() - t0
    accept(1, "gradient integrity", worst < FD_TOL and dt < 60,
           f"{N_MICRO} micro-configs, worst rel err {worst:.2e} (< {FD_TOL:g}), {dt:.1f}s (< 60s)")


# ------------------------------------------------------------------ 2: direction oracles

def test_c02_direction_oracles(accept):
    t0 = time.perf_counter()
    try:
        directions.test_direction_oracles_on_1000_batches()
        ok, msg = True, "exact match"
    except AssertionError as exc:
        ok, msg = False, f"mismatch: {exc}"
    dt = time.perf_counter() - t0
    accept(2, "direction oracles", ok and dt < ORACLE_BUDGET_S, f"1000 batches, {msg}, {dt:.1f}s")


# ------------------------------------------------------------------ 3: hand-derived update

def test_c03_update_micro_oracle(accept):
    try:
        hand.test_update_matches_hand_derivation()
        ok, msg = True, f"all terms within {HAND_TOL:g}, zero-coupling holds"
    except AssertionError as exc:
        ok, msg = False, str(exc)
    accept(3, "update micro-oracle", ok, msg)


# ------------------------------------------------------------------ 4: permutahedron projection

def test_c04_permutahedron_projection(accept):
    rng = np.random.default_rng(4)
    worst = 0.0
    for k in range(200):
        n = 1 + k % 6
        z = rng.normal(0, n, n)
        worst = max(worst, float(np.max(np.abs(project_permutahedron(z)[0] - permutahedron_projection(z)))))
    x = rng.standard_normal(6)
    hard = np.argsort(np.argsort(x)) + 1.0
    lim0 = float(np.max(np.abs(soft_rank(x, eps=1e-6) - hard)))
    lim_inf = float(np.max(np.abs(soft_rank(x, eps=1e9) - 3.5)))
    ok = worst < PROJ_TOL and lim0 < LIMIT_TOL and lim_inf < LIMIT_TOL
    accept(4, "permutahedron projection", ok,
           f"max diff {worst:.1e} on 200 vectors (n<=6); eps->0 {lim0:.1e}, eps->inf {lim_inf:.1e}")


# ------------------------------------------------------------------ 5: toy demo

def test_c05_toy_demo(accept):
    path = cggd_toy_demo((3.0, 1.0), 0.5)
    gaps = path[:, 0] - path[:, 1]
    steps = len(path) - 1
    shrink = np.diff(gaps)
    ok = steps <= 3 and gaps[-1] <= 0 and np.allclose(shrink, -0.5 * math.sqrt(2), atol=1e-12)
    accept(5, "toy CGGD demo", ok, f"satisfied after {steps} steps, gap shrink per step {shrink.tolist()}")


# ------------------------------------------------------------------ 6, 7: desk-scale training

DESK_VARIANTS = ("ccae", "sr_cae", "ccae_eb", "ccae_me")
DESK_SEEDS = (0, 1, 2)


@pytest.fixture(scope="module")
def desk():
    runs, _ = prepare_runs(synthetic_runs(4, 200, 0), 1)
    cfg = TrainConfig(max_epochs=30)
    out = {}
    for variant in DESK_VARIANTS:
        t0 = time.perf_counter()
        his = []
        for seed in DESK_SEEDS:
            model = train(variant, runs, cfg, seed).model
            his.append([model.predict_hi(r.values) for r in runs])
        out[variant] = {"his": his, "time": time.perf_counter() - t0}
    return out


def _in_range(his) -> float:
    allh = np.concatenate([h for seed in his for h in seed])
    return float(np.mean((allh >= HI_RANGE[0]) & (allh <= HI_RANGE[1])))


def _mean_metric(his, fn) -> float:
    return float(np.mean([fn(h) for seed in his for h in seed]))


@pytest.mark.slow
def test_c06_desk_ccae(accept, desk):
    c, s = desk["ccae"], desk["sr_cae"]
    inr = _in_range(c["his"])
    tr = _mean_metric(c["his"], trendability)
    rob_c, rob_s = _mean_metric(c["his"], robustness), _mean_metric(s["his"], robustness)
    dt = c["time"] + s["time"]
    ok = inr >= IN_RANGE_MIN and tr <= TREND_MAX and rob_c >= rob_s and dt < DESK_BUDGET_S
    accept(6, "desk-scale CCAE", ok,
           f"in range {inr:.3f} (>= {IN_RANGE_MIN}), trendability {tr:.3f} (<= {TREND_MAX}), "
           f"robustness CCAE {rob_c:.3f} vs SR-CAE {rob_s:.3f}, {dt:.0f}s")


@pytest.mark.slow
def test_c07_ablation_directions(accept, desk):
    tr_c = _mean_metric(desk["ccae"]["his"], trendability)
    tr_eb = _mean_metric(desk["ccae_eb"]["his"], trendability)
    oor_c, oor_me = 1 - _in_range(desk["ccae"]["his"]), 1 - _in_range(desk["ccae_me"]["his"])
    dt = desk["ccae_eb"]["time"] + desk["ccae_me"]["time"]
    ok = tr_eb > tr_c and oor_me > oor_c and dt < DESK_BUDGET_S
    accept(7, "ablation directions", ok,
           f"trendability CCAE {tr_c:.3f} vs no-mono {tr_eb:.3f}; out of range CCAE {oor_c:.3f} "
           f"vs no-bounds {oor_me:.3f}; {dt:.0f}s")


# ------------------------------------------------------------------ 8: metric identities

def test_c08_metric_identities(accept):
    rng = np.random.default_rng(8)
    t_dec = trendability(np.sort(rng.standard_normal(100))[::-1])
    line = 2.0 - 0.01 * np.arange(100)
    fixed = loess_smooth(line)
    rob = robustness(line, smoothed=fixed)
    a = rng.standard_normal(500)
    con_same = consistency(a, a)
    con_noise = max(consistency(rng.standard_normal(1000), rng.standard_normal(1000)) for _ in range(5))
    ok = (t_dec == -1.0 and np.allclose(fixed, line, rtol=0, atol=1e-12) and rob == 1.0 and abs(con_same - 1) < 1e-12
          and con_noise < NOISE_CONS_MAX)
    accept(8, "metric identities", ok,
           f"trend {t_dec!r}, robustness {rob!r}, self-consistency {con_same!r}, noise consistency {con_noise:.3f}")


# ------------------------------------------------------------------ 9: determinism

def test_c09_determinism(accept, tmp_path):
    a = run_pipeline(tmp_path / "a")
    b = run_pipeline(tmp_path / "b")
    same = [(a / n).read_bytes() == (b / n).read_bytes() for n in ("metrics.csv", "hi_curves.csv")]
    nonempty = len((a / "metrics.csv").read_text().splitlines()) > 1
    accept(9, "determinism", all(same) and nonempty,
           f"metrics.csv identical: {same[0]}, hi_curves.csv identical: {same[1]}")


# ------------------------------------------------------------------ 10: optional Pronostia check

def test_c10_pronostia(accept):
    root = os.environ.get("CGHI_PRONOSTIA_ROOT")
    if not root or not (Path(root) / "Bearing1_1").is_dir():
        pytest.skip("set CGHI_PRONOSTIA_ROOT to a directory holding Bearing1_1")
    raw = load_pronostia_run(Path(root) / "Bearing1_1")
    run = prepare_runs([raw], 1)[0][0]
    n = len(run)
    # CAE training draws only from each run's healthy section (first 10 %)
    model = train("cae", [run], TrainConfig(max_epochs=30), 0).model
    n_healthy = int(0.10 * n)
    err = model.per_sample_error(run.values)
    ratio = float(np.mean(err[-max(n // 20, 1):]) / np.mean(err[:n_healthy]))
    accept(10, "Pronostia spot check", ratio >= 3.0, f"{n} frames, late/healthy error ratio {ratio:.2f} (>= 3)")
