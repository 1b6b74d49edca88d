"""Parameter sweep for single-source extraction on anechoic 4-mic scenes.

Example::

    python3 scripts/extraction_sweep.py --variant 7 --gamma 50 500 --seeds 200 205
"""

from __future__ import annotations

import argparse
import itertools
import logging

import numpy as np

from spatial_iva.experiments import dominant_source, evaluate_channel, interior, random_scene, run_trial
from spatial_iva.geometry import ArrayGeometry
from spatial_iva.mixsim import preset_geometry
from spatial_iva.stft import StftConfig
from spatial_iva.variants import solver_config


def trial(vid: int, seed: int, duration: float, iters: int, spacing: float | None = None, **params) -> tuple[bool, float]:
    geom = preset_geometry() if spacing is None else ArrayGeometry.uniform_linear(4, spacing)
    stft = StftConfig()
    scene = random_scene(np.random.default_rng(seed), geom, 4, duration, seed=seed)
    cfg = solver_config(vid, geom, scene.sources[scene.target].doa, max_iters=iters, **params)
    tr = run_trial(scene, cfg, stft)
    sl = interior(tr.sim.mix, stft)
    hit = dominant_source(tr.estimates[0, sl], tr.sim.references[:, sl]) == scene.target
    return hit, float(evaluate_channel(tr, 0, scene.target, sl=sl).sir[0])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--variant", type=int, required=True)
    ap.add_argument("--gamma", type=float, nargs="*", default=[None])
    ap.add_argument("--lambda-1", type=float, nargs="*", default=[None])
    ap.add_argument("--lambda-tik", type=float, nargs="*", default=[None])
    ap.add_argument("--scale", type=float, nargs="*", default=[None])
    ap.add_argument("--spacing", type=float, default=None, help="ULA spacing in m (default: preset array)")
    ap.add_argument("--seeds", type=int, nargs=2, default=(200, 205))
    ap.add_argument("--duration", type=float, default=6.0)
    ap.add_argument("--iters", type=int, default=100)
    args = ap.parse_args()
    logging.basicConfig(level=logging.ERROR)

    print("scale,gamma,lambda_1,lambda_tik,hits,trials,median_dsir")
    grid = itertools.product(args.scale, args.gamma, args.lambda_1, args.lambda_tik)
    for sc, g, l1, lt in grid:
        named = (("input_scale", sc), ("gamma", g), ("lambda_1", l1), ("lambda_tik", lt))
        params = {k: v for k, v in named if v is not None}
        res = [trial(args.variant, s, args.duration, args.iters, args.spacing, **params) for s in range(*args.seeds)]
        hits = sum(h for h, _ in res)
        print(f"{sc},{g},{l1},{lt},{hits},{len(res)},{np.median([d for _, d in res]):.2f}", flush=True)


if __name__ == "__main__":
    main()
