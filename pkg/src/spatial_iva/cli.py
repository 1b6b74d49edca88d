"""Command line: ``separate``, ``simulate``, ``evaluate`` and ``sweep``.

Exit codes: 0 success, 1 configuration error, 2 I/O error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, metrics
from .audio import read_wav, write_wav
from .config import (
    RUN_SCHEMA,
    SIMULATE_SCHEMA,
    SWEEP_SCHEMA,
    ConfigError,
    build_run,
    load_json,
    resolve_scenario,
    resolve_stft,
    scenario_manifest,
    validate,
    write_json_atomic,
)
from .experiments import separate_audio
from .mixsim import scene_signals, simulate
from .solver import SingularUpdateError, write_trace_csv
from .variants import DEFAULTS, get_variant, solver_config

logger = logging.getLogger("spatial_iva")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_SOLVER = 0, 1, 2, 3


class IOFailure(Exception):
    pass


def _read(path) -> tuple[np.ndarray, float]:
    try:
        return read_wav(path)
    except (OSError, ValueError) as err:
        raise IOFailure(f"cannot read {path}: {err}") from None


def _outdir(path) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as err:
        raise IOFailure(f"cannot create {p}: {err}") from None
    return p


def _load(path, schema) -> dict:
    try:
        doc = load_json(path)
    except OSError as err:
        raise IOFailure(f"cannot read {path}: {err}") from None
    validate(doc, schema)
    return doc


# ----------------------------------------------------------------------------
# separate


def cmd_separate(args) -> int:
    run = build_run(_load(args.config, RUN_SCHEMA))
    io = run.doc["io"]
    audio, fs = _read(io["input"])
    if audio.shape[0] != run.geometry.num_mics:
        raise ConfigError(f"input has {audio.shape[0]} channels, the array has {run.geometry.num_mics}")
    if fs != run.stft.sample_rate:
        raise ConfigError(f"input sample rate {fs:g} Hz differs from the configured {run.stft.sample_rate:g} Hz")
    out = _outdir(io["output_dir"])
    est, res = separate_audio(audio, run.solver, run.stft)
    outputs = []
    try:
        for q, sig in enumerate(est, start=1):
            name = f"soi_{q}.wav"
            write_wav(out / name, sig, fs)
            outputs.append(name)
        write_trace_csv(out / "trace.csv", res.trace)
        manifest = dict(run.doc)
        manifest["manifest"] = {"version": __version__, "outputs": outputs + ["trace.csv"]}
        write_json_atomic(out / "manifest.json", manifest)
    except OSError as err:
        raise IOFailure(str(err)) from None
    logger.info("wrote %d SOI file(s) to %s", len(outputs), out)
    return EXIT_OK


# ----------------------------------------------------------------------------
# simulate


def _signals(spec, paths):
    if not paths:
        return scene_signals(spec)
    if len(paths) != len(spec.sources):
        raise ConfigError(f"{len(paths)} signal files for {len(spec.sources)} sources")
    sig = []
    for p in paths:
        a, fs = _read(p)
        if fs != spec.sample_rate:
            raise ConfigError(f"{p}: sample rate {fs:g} Hz differs from the scene's {spec.sample_rate:g} Hz")
        sig.append(a[0])
    n = min(len(s) for s in sig)
    return np.stack([s[:n] for s in sig])


def cmd_simulate(args) -> int:
    doc = _load(args.config, SIMULATE_SCHEMA)
    spec, paths = resolve_scenario(doc["scenario"])
    sim = simulate(spec, _signals(spec, paths))
    out = _outdir(doc["io"]["output_dir"])
    try:
        write_wav(out / "mix.wav", sim.mix, spec.sample_rate)
        for i, img in enumerate(sim.images, start=1):
            write_wav(out / f"image_{i}.wav", img, spec.sample_rate)
        # the input document with its seed pinned reruns bit-exactly; the expanded
        # scene is stored alongside for reference
        scen = dict(doc["scenario"], seed=spec.seed)
        info = {"version": __version__, "num_sources": len(spec.sources), "scene": scenario_manifest(spec)}
        write_json_atomic(out / "scenario.json", {"scenario": scen, "io": doc["io"], "manifest": info})
    except OSError as err:
        raise IOFailure(str(err)) from None
    return EXIT_OK


# ----------------------------------------------------------------------------
# evaluate


def _sorted_wavs(d: Path, prefix: str) -> list[Path]:
    files = sorted(d.glob(f"{prefix}_*.wav"), key=lambda p: int(p.stem.split("_")[-1]))
    if not files:
        raise IOFailure(f"no {prefix}_*.wav files in {d}")
    return files


def evaluate_dirs(est_dir, ref_dir, target: int, mix_path=None, ref_mic: int = 1) -> list[dict]:
    est_dir, ref_dir = Path(est_dir), Path(ref_dir)
    refs = np.stack([_read(p)[0][ref_mic - 1] for p in _sorted_wavs(ref_dir, "image")])
    if not 1 <= target <= len(refs):
        raise ConfigError(f"target must be in 1..{len(refs)}")
    mix = _read(mix_path or ref_dir / "mix.wav")[0][ref_mic - 1]
    variant = ""
    man = est_dir / "manifest.json"
    if man.exists():
        variant = load_json(man).get("variant", "")
    rows = []
    unproc = metrics.evaluate(mix[: refs.shape[1]], refs, target - 1)
    for ch, p in enumerate(_sorted_wavs(est_dir, "soi"), start=1):
        est = _read(p)[0][0]
        n = min(len(est), refs.shape[1])
        proc = metrics.evaluate(est[:n], refs[:, :n], target - 1)
        d = metrics.improvement(proc, unproc)
        rows.append(
            dict(trial=0, variant=variant, channel=ch, sdr=proc.sdr[0], sir=proc.sir[0], sar=proc.sar[0],
                 dsdr=d.sdr[0], dsir=d.sir[0], dsar=d.sar[0])
        )
    return rows


def cmd_evaluate(args) -> int:
    rows = evaluate_dirs(args.est, args.ref, args.target, args.mix, args.ref_mic)
    out = Path(args.out) if args.out else Path(args.est) / "metrics.csv"
    tmp = out.with_name(f".{out.name}.tmp")
    try:
        metrics.write_eval_csv(tmp, rows)
        os.replace(tmp, out)
    except OSError as err:
        raise IOFailure(str(err)) from None
    for r in rows:
        print(f"channel {r['channel']}: dSDR {r['dsdr']:.2f} dB  dSIR {r['dsir']:.2f} dB  dSAR {r['dsar']:.2f} dB")
    return EXIT_OK


# ----------------------------------------------------------------------------
# sweep

GRID_KEYS = ("variant", "beta", "gamma", "lambda_tik", "lambda_1", "num_bases", "seed", "input_scale")


def grid_points(grid: dict) -> list[dict]:
    """Cross product of the grid; parameters a variant does not use are dropped and duplicates removed."""
    keys = [k for k in GRID_KEYS if k in grid]
    points, seen = [], set()
    for values in itertools.product(*(grid[k] for k in keys)):
        p = dict(zip(keys, values))
        v = get_variant(p["variant"])
        d = DEFAULTS[p["variant"]]
        if v.soi_prior == "none" and not v.bg_prior:
            for k in ("gamma", "lambda_tik", "lambda_1"):
                p.pop(k, None)
        if v.soi_prior == "euclidean_one":
            p.pop("lambda_tik", None)
            p.pop("lambda_1", None)
        if not v.nmf:
            p.pop("num_bases", None)
        if d is None:
            continue
        key = tuple(sorted(p.items()))
        if key not in seen:
            seen.add(key)
            points.append(p)
    return points


def _sweep_task(task):
    scen_doc, trial, point, base_solver, stft_doc = task
    spec, paths = resolve_scenario(scen_doc, seed=trial)
    sim = simulate(spec, _signals(spec, paths))
    stft = resolve_stft(stft_doc)
    p = dict(point)
    vid = p.pop("variant")
    kw = dict(base_solver)
    kw.update(p)
    if "seed" in kw:
        kw["seed"] = int(kw["seed"])
    cfg = solver_config(vid, spec.geometry, spec.sources[spec.target].doa, **kw)
    est, _ = separate_audio(sim.mix, cfg, stft)
    refs = sim.references
    unproc = metrics.evaluate(sim.mix[0], refs, spec.target)
    proc = metrics.evaluate(est[0], refs, spec.target)
    d = metrics.improvement(proc, unproc)
    return dict(trial=trial, variant=vid, channel=1, sdr=proc.sdr[0], sir=proc.sir[0], sar=proc.sar[0],
                dsdr=d.sdr[0], dsir=d.sir[0], dsar=d.sar[0])


def median_summary(rows: list[dict], points: list[dict]) -> list[dict]:
    out = []
    for i, p in enumerate(points):
        mine = [r for r in rows if r["point"] == i]
        s = {"point": i, **{k: p.get(k, "") for k in GRID_KEYS}, "n": len(mine)}
        for m in ("dsdr", "dsir", "dsar"):
            s[f"median_{m}"] = float(np.median([r[m] for r in mine])) if mine else math.nan
        out.append(s)
    return out


def cmd_sweep(args) -> int:
    doc = _load(args.config, SWEEP_SCHEMA)
    try:
        points = grid_points(doc["grid"])
    except ValueError as err:
        raise ConfigError(f"grid: {err}") from None
    trials = doc.get("trials", [0])
    base = dict(doc.get("solver", {}))
    for k in ("beta", "num_bases", "seed", "input_scale"):
        if k in doc["grid"]:
            base.pop(k, None)
    resolve_stft(doc.get("stft"))
    resolve_scenario(doc["scenario"], seed=trials[0])
    tasks = [(doc["scenario"], t, p, base, doc.get("stft")) for t in trials for p in points]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            results = list(ex.map(_sweep_task, tasks))
    else:
        results = [_sweep_task(t) for t in tasks]
    rows = []
    for (_, t, p, _, _), r in zip(tasks, results):
        r["point"] = points.index(p)
        rows.append(r)
    out = _outdir(doc["io"]["output_dir"])
    try:
        _write_csv(out / "results.csv", metrics.EVAL_COLUMNS + ["point"], rows)
        summary = median_summary(rows, points)
        cols = ["point", *GRID_KEYS, "n", "median_dsdr", "median_dsir", "median_dsar"]
        _write_csv(out / "summary.csv", cols, summary)
        write_json_atomic(out / "manifest.json", {**doc, "manifest": {"version": __version__, "points": points}})
    except OSError as err:
        raise IOFailure(str(err)) from None
    return EXIT_OK


def _write_csv(path: Path, columns, rows) -> None:
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns)
        w.writeheader()
        for r in rows:
            w.writerow({k: r.get(k, "") for k in columns})
    os.replace(tmp, path)


# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spatial-iva", description="Informed IVA source separation and extraction.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("separate", help="separate a multichannel WAV")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_separate)
    p = sub.add_parser("simulate", help="render a synthetic scene")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("evaluate", help="SDR/SIR/SAR of separated signals")
    p.add_argument("--est", required=True, help="directory with soi_*.wav")
    p.add_argument("--ref", required=True, help="directory with image_*.wav and mix.wav")
    p.add_argument("--target", type=int, required=True, help="1-based target source")
    p.add_argument("--mix", default=None, help="unprocessed mixture (default: REF/mix.wav)")
    p.add_argument("--ref-mic", type=int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_evaluate)
    p = sub.add_parser("sweep", help="grid of simulate -> separate -> evaluate runs")
    p.add_argument("--config", required=True)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except IOFailure as err:
        print(f"io error: {err}", file=sys.stderr)
        return EXIT_IO
    except SingularUpdateError as err:
        print(f"solver error: {err}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
