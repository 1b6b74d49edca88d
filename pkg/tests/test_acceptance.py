"""Acceptance criteria 1-9, each at its stated tolerance.

Every test records one PASS/FAIL line (shown in the terminal summary and,
with ``-s``, inline) before asserting. These runs take roughly half an hour
on one core.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from spatial_iva import metrics
from spatial_iva.config import build_run
from spatial_iva.experiments import (
    best_permutation_sir,
    dominant_source,
    evaluate_channel,
    interior,
    random_scene,
    run_trial,
    separate_audio,
)
from spatial_iva.geometry import ArrayGeometry, BackgroundPrior, ChannelPrior, PriorSpec, build_priors
from spatial_iva.mixsim import measured_snr, preset_geometry, preset_paper_scene, scene_signals, simulate
from spatial_iva.models import EPS_NMF, SourceModel, normalize_ilrma
from spatial_iva.solver import cost, run, weighted_covariance
from spatial_iva.stft import StftConfig, analyze, num_frames, synthesize
from spatial_iva.types import DemixingState
from spatial_iva.variants import get_variant, solver_config

from conftest import crandn, record
from oracles import brute_cost, brute_covariance, normal_equations

STFT = StftConfig()
MM_VARIANTS = (2, 3, 4, 5, 6, 7)


def monotone(trace, tol=1e-6) -> tuple[bool, float]:
    j = np.array([c.j_total for c in trace])
    if not np.all(np.isfinite(j)):
        return False, math.inf
    rel = np.diff(j) / np.abs(j[:-1])
    return bool(rel.max() <= tol), float(rel.max())


# --- criteria 1 and 2 share the same runs ------------------------------------


@pytest.fixture(scope="module")
def mm_runs():
    geom = preset_geometry()
    runs = []
    for i in range(10):
        scene = random_scene(np.random.default_rng(1000 + i), geom, 4 + i % 5, 10.0, min_separation_deg=15, seed=1000 + i)
        sim = simulate(scene, scene_signals(scene))
        doa = scene.sources[scene.target].doa
        t0 = time.perf_counter()
        per_variant = {}
        for vid in MM_VARIANTS:
            _, res = separate_audio(sim.mix, solver_config(vid, geom, doa, max_iters=100), STFT)
            per_variant[vid] = res
        runs.append((time.perf_counter() - t0, per_variant))
    return runs


def test_criterion_1_mm_monotonicity(mm_runs):
    bad, worst, slowest = [], 0.0, 0.0
    for i, (elapsed, per_variant) in enumerate(mm_runs):
        slowest = max(slowest, elapsed)
        for vid, res in per_variant.items():
            assert len(res.trace) == 101
            ok, inc = monotone(res.trace)
            worst = max(worst, inc)
            if not ok:
                bad.append((i, vid))
    failing = sorted({v for _, v in bad})
    passed = not bad and slowest <= 120.0
    record(
        1,
        passed,
        f"{60 - len(bad)}/60 runs non-increasing (max rel. step {worst:.2e}); "
        f"failing variants {failing}; slowest scene {slowest:.0f} s for all 6 variants",
    )
    assert passed


def test_criterion_2_stationarity(mm_runs):
    worst = {}
    for _, per_variant in mm_runs:
        for vid, res in per_variant.items():
            d = res.diagnostics
            v = get_variant(vid)
            vals = [max(d.euclidean) if v.soi_prior == "euclidean_one" else max(d.normalization)]
            if v.extraction:
                vals.append(max(d.background))
            worst[vid] = max(worst.get(vid, 0.0), *vals)
    failing = [v for v, r in worst.items() if not r <= 1e-8]
    passed = not failing
    detail = ", ".join(f"v{v}={r:.1e}" for v, r in sorted(worst.items()))
    record(2, passed, f"worst residual per variant: {detail}")
    assert passed


# --- criterion 3 ------------------------------------------------------------


def test_criterion_3_determined_separation():
    geom = ArrayGeometry.uniform_linear(2, 0.042)
    scores = []
    for seed in range(10):
        scene = random_scene(np.random.default_rng(seed), geom, 2, 10.0, seed=seed)
        trial = run_trial(scene, solver_config(0, geom, None, max_iters=100, beta=1.0), STFT)
        _, dsir = best_permutation_sir(trial, interior(trial.sim.mix, STFT))
        scores.append(float(np.mean(dsir)))
    med = float(np.median(scores))
    passed = med >= 15.0
    record(3, passed, f"median dSIR {med:.1f} dB over 10 seeds (min {min(scores):.1f} dB)")
    assert passed


# --- criterion 4 ------------------------------------------------------------

# chosen on scenes 200-209 (scripts/extraction_sweep.py); evaluated here on unseen seeds
EXTRACTION_PARAMS = {
    5: dict(),
    6: dict(gamma=10.0, lambda_1=0.24),
    7: dict(input_scale=0.1),
}


def test_criterion_4_outer_permutation():
    geom = preset_geometry()
    lines, passed = [], True
    for vid, params in EXTRACTION_PARAMS.items():
        hits, dsir = 0, []
        for seed in range(300, 310):
            scene = random_scene(np.random.default_rng(seed), geom, 4, 10.0, seed=seed)
            cfg = solver_config(vid, geom, scene.sources[scene.target].doa, max_iters=100, **params)
            trial = run_trial(scene, cfg, STFT)
            sl = interior(trial.sim.mix, STFT)
            hits += dominant_source(trial.estimates[0, sl], trial.sim.references[:, sl]) == scene.target
            dsir.append(float(evaluate_channel(trial, 0, scene.target, sl=sl).sir[0]))
        med = float(np.median(dsir))
        ok = hits >= 8 and med >= 5.0
        passed &= ok
        lines.append(f"v{vid} {hits}/10 hits, median dSIR {med:.1f} dB{'' if ok else ' (fail)'}")
    record(4, passed, "; ".join(lines))
    assert passed


# --- criterion 5 ------------------------------------------------------------


def test_criterion_5_nmf_health():
    geom = preset_geometry()
    problems = []
    for vid in range(8, 14):
        scene = random_scene(np.random.default_rng(400 + vid), geom, 4, 6.0, seed=400 + vid)
        sim = simulate(scene, scene_signals(scene))
        cfg = solver_config(vid, geom, scene.sources[scene.target].doa, max_iters=100)
        low = []

        def check(it, W, model):
            healthy = np.all(np.isfinite(W)) and np.all(np.isfinite(model.T)) and np.all(np.isfinite(model.V))
            low.append(not healthy or model.T.min() < EPS_NMF or model.V.min() < EPS_NMF)

        res = run(analyze(sim.mix, STFT), cfg, callback=check)
        ok, inc = monotone(res.trace)
        if any(low) or not np.all(np.isfinite(res.soi.data)):
            problems.append(f"v{vid} unhealthy")
        if not ok:
            problems.append(f"v{vid} cost rises ({inc:.1e})")
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        X = crandn(rng, 4, 5, 3)
        W = DemixingState(crandn(rng, 4, 3, 3) * rng.uniform(0.1, 10), 3)
        m = SourceModel("nmf", float(rng.choice([0.5, 1.0, 2.0])), 2)
        m.init_nmf(3, 4, 5, rng)
        before = cost(W, X, m).j_bss
        normalize_ilrma(m, W, np.einsum("kmc,knc->knm", W.W, X))
        after = cost(W, X, m).j_bss
        worst = max(worst, abs(after - before) / max(abs(before), 1.0))
    if worst > 1e-9:
        problems.append(f"normalisation changes the cost by {worst:.1e}")
    passed = not problems
    record(5, passed, f"variants 8-13, 100 iterations; normalisation drift {worst:.1e}" + ("; " + "; ".join(problems) if problems else ""))
    assert passed


# --- criterion 6 ------------------------------------------------------------


def _rel(a, b) -> float:
    a, b = np.asarray(a), np.asarray(b)
    return float(np.abs(a - b).max() / max(np.abs(b).max(), 1e-300))


def test_criterion_6_oracle_equivalence():
    worst = {"cost": 0.0, "covariance": 0.0, "decompose": 0.0}
    for seed in range(100):
        rng = np.random.default_rng(seed)
        K, N, M = int(rng.integers(1, 5)), int(rng.integers(1, 6)), int(rng.integers(1, 4))
        S = int(rng.integers(1, M + 1))
        beta = float(rng.choice([0.5, 1.0, 2.0]))
        X = crandn(rng, K, N, M)
        W = DemixingState(crandn(rng, K, M, M), S)
        geom = ArrayGeometry.uniform_linear(M, 0.05)
        freqs = np.linspace(0.0, 4000.0, K)
        chans = [ChannelPrior("quadratic_null", [rng.uniform(0, np.pi)], [1.0], 0.5, 0.7)]
        if S > 1:
            chans.append(ChannelPrior("euclidean_one", [rng.uniform(0, np.pi)], gamma=1.3))
        bg = BackgroundPrior([rng.uniform(0, np.pi)], [2.0], 0.1, 0.9) if S < M else None
        built = build_priors(PriorSpec(chans, bg), geom, freqs)
        c = cost(W, X, SourceModel(beta=beta), built)
        b = brute_cost(W, X, beta, P={0: built.precisions[0]}, gammas={0: 0.7, 1: 1.3}, targets=built.targets,
                       Pbg=built.bg_precision, gbg=0.9)
        worst["cost"] = max(worst["cost"], _rel([c.j_bss, c.j_bg, c.j_prior], b))

        phi = rng.uniform(0.0, 3.0, (K, N))
        eps = float(rng.uniform(0.0, 0.1))
        worst["covariance"] = max(worst["covariance"], _rel(weighted_covariance(X, phi, eps), brute_covariance(X, phi, eps)))

        Q = int(rng.integers(1, 4))
        R = rng.standard_normal((Q, 20))
        est = rng.standard_normal(20)
        t = int(rng.integers(Q))
        d = metrics.decompose(est, R, t)
        o = normal_equations(est, R, t)
        scale = np.abs(est).max()
        for got, ref in zip((d.s_target, d.e_interf, d.e_artif), o):
            worst["decompose"] = max(worst["decompose"], float(np.abs(got - ref).max() / scale))
    passed = all(v <= 1e-10 for v in worst.values())
    record(6, passed, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + " (max relative error, 100 seeds)")
    assert passed


# --- criterion 7 ------------------------------------------------------------


def test_criterion_7_registry_smoke():
    scene = preset_paper_scene(1, 1, 2, duration=10.0)
    sim = simulate(scene, scene_signals(scene))
    doa = math.degrees(scene.sources[scene.target].doa)
    failed = []
    for vid in range(2, 14):
        doc = {"variant": vid, "prior": {"target_doa_deg": doa}, "solver": {"max_iters": 5},
               "io": {"input": "mix.wav", "output_dir": "out"}}
        try:
            resolved = build_run(doc)
            est, res = separate_audio(sim.mix, resolved.solver, resolved.stft)
            if len(res.trace) != 6 or not np.all(np.isfinite(est)):
                failed.append(vid)
        except Exception as err:  # noqa: BLE001 - any error fails the criterion
            failed.append(f"{vid} ({err})")
    passed = not failed
    record(7, passed, "variants 2-13 ran 5 iterations on the preset scene" if passed else f"failed: {failed}")
    assert passed


# --- criterion 8 ------------------------------------------------------------


def test_criterion_8_beta_sweep():
    geom = preset_geometry()
    scenes = [random_scene(np.random.default_rng(500 + i), geom, 4, 6.0, seed=500 + i) for i in range(10)]
    sims = [simulate(s, scene_signals(s)) for s in scenes]
    med = {}
    for vid in MM_VARIANTS:
        for beta in (1.0, 2.0):
            vals = []
            for scene, sim in zip(scenes, sims):
                cfg = solver_config(vid, geom, scene.sources[scene.target].doa, max_iters=100, beta=beta)
                est, _ = separate_audio(sim.mix, cfg, STFT)
                sl = interior(sim.mix, STFT)
                refs = sim.references[:, sl]
                d = metrics.improvement(metrics.evaluate(est[0, sl], refs, scene.target),
                                        metrics.evaluate(sim.mix[0, sl], refs, scene.target))
                vals.append(float(d.sdr[0]))
            med[vid, beta] = float(np.median(vals))
    wins = [v for v in MM_VARIANTS if med[v, 1.0] >= med[v, 2.0]]
    passed = len(wins) >= 4
    table = ", ".join(f"v{v} {med[v, 1.0]:.1f}/{med[v, 2.0]:.1f}" for v in MM_VARIANTS)
    record(8, passed, f"beta=1 >= beta=2 for {len(wins)}/6 variants (median dSDR dB, beta 1/2: {table})")
    assert passed


# --- criterion 9 ------------------------------------------------------------


def test_criterion_9_stft_and_snr():
    worst_rec = 0.0
    for seed, (fft, hop) in enumerate([(2048, 1024), (1024, 256), (512, 256), (256, 64)]):
        cfg = StftConfig(fft, hop)
        x = np.random.default_rng(seed).standard_normal((3, 9 * fft + 17))
        y = synthesize(analyze(x, cfg), cfg, x.shape[1])
        last = (num_frames(x.shape[1], cfg) - 1) * hop + fft
        worst_rec = max(worst_rec, float(np.abs(y[:, fft : last - fft] - x[:, fft : last - fft]).max()))
    worst_snr = 0.0
    geom = preset_geometry()
    for i, snr in enumerate([0.0, 10.0, 20.0, 30.0, 45.0]):
        scene = random_scene(np.random.default_rng(600 + i), geom, 3, 2.0, snr_db=snr, seed=600 + i)
        worst_snr = max(worst_snr, abs(measured_snr(simulate(scene, scene_signals(scene))) - snr))
    passed = worst_rec <= 1e-10 and worst_snr <= 0.01
    record(9, passed, f"interior reconstruction error {worst_rec:.1e}; SNR calibration error {worst_snr:.1e} dB")
    assert passed
