"""JSON run configuration: schema validation and resolution into solver objects.

Angles are given in degrees in every document and converted to radians here.
Parameters that a variant does not use (for example ``lambda_1`` for the
Euclidean-prior variants) are rejected instead of silently ignored.
"""

from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import jsonschema

from .geometry import ArrayGeometry, BackgroundPrior, ChannelPrior, PriorSpec
from .mixsim import ScenarioSpec, SourceSpec, preset_geometry, preset_paper_scene
from .solver import SolverConfig
from .stft import StftConfig
from .variants import DEFAULTS, RESERVED, VARIANTS, get_variant, solver_config

SEED_ENV = "SPATIAL_IVA_SEED"


class ConfigError(ValueError):
    pass


_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nonneg = {"type": "number", "minimum": 0}

GEOMETRY = {
    "oneOf": [
        {"const": "preset"},
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["num_mics", "spacing"],
            "properties": {
                "num_mics": {"type": "integer", "minimum": 1},
                "spacing": _pos,
                "speed_of_sound": _pos,
            },
        },
        {
            "type": "object",
            "additionalProperties": False,
            "required": ["positions"],
            "properties": {
                "positions": {"type": "array", "minItems": 1, "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 3}},
                "speed_of_sound": _pos,
            },
        },
    ]
}

STFT = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "fft_size": {"type": "integer", "minimum": 2},
        "hop": {"type": "integer", "minimum": 1},
        "window": {"enum": ["vonhann"]},
        "sample_rate": _pos,
    },
}

SOLVER = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "max_iters": {"type": "integer", "minimum": 1},
        "beta": _pos,
        "num_bases": {"type": "integer", "minimum": 1},
        "eps_cov": _nonneg,
        "seed": {"type": "integer", "minimum": 0},
        "input_scale": _pos,
    },
}

_CHANNEL = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["none", "quadratic_one", "quadratic_null", "euclidean_one"]},
        "doas_deg": {"type": "array", "items": _num},
        "weights": {"type": "array", "items": _nonneg},
        "lambda_tik": _pos,
        "gamma": _nonneg,
    },
}

PRIOR = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "target_doa_deg": _num,
        "gamma": _nonneg,
        "lambda_tik": _pos,
        "lambda_1": _nonneg,
        "channels": {"type": "array", "items": _CHANNEL},
        "background": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "doas_deg": {"type": "array", "items": _num},
                "weights": {"type": "array", "items": _nonneg},
                "lambda_tik": _pos,
                "gamma": _nonneg,
            },
        },
    },
}

RUN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["variant", "io"],
    "properties": {
        "variant": {"type": "integer"},
        "solver": SOLVER,
        "prior": PRIOR,
        "geometry": GEOMETRY,
        "stft": STFT,
        "io": {
            "type": "object",
            "additionalProperties": False,
            "required": ["input", "output_dir"],
            "properties": {"input": {"type": "string"}, "output_dir": {"type": "string"}},
        },
        "manifest": {"type": "object"},
    },
}

SCENARIO = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "preset": {
            "type": "object",
            "additionalProperties": False,
            "required": ["room", "permutation", "target"],
            "properties": {
                "room": {"enum": [1, 2]},
                "permutation": {"type": "integer", "minimum": 1, "maximum": 20},
                "target": {"type": "integer", "minimum": 1, "maximum": 8},
            },
        },
        "geometry": GEOMETRY,
        "sources": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["doa_deg"],
                "properties": {"doa_deg": _num, "distance": _pos, "signal": {"type": "integer", "minimum": 0}},
            },
        },
        "target": {"type": "integer", "minimum": 1},
        "snr_db": {"oneOf": [_num, {"const": "inf"}]},
        "t60": {"oneOf": [_pos, {"type": "null"}]},
        "reverb_seed": {"type": "integer"},
        "seed": {"type": "integer", "minimum": 0},
        "duration": _pos,
        "sample_rate": _pos,
        "signals": {"type": "array", "items": {"type": "string"}},
    },
}

SIMULATE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["scenario", "io"],
    "properties": {
        "scenario": SCENARIO,
        "io": {
            "type": "object",
            "additionalProperties": False,
            "required": ["output_dir"],
            "properties": {"output_dir": {"type": "string"}},
        },
        "manifest": {"type": "object"},
    },
}

_list = lambda item: {"type": "array", "minItems": 1, "items": item}  # noqa: E731

SWEEP_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["scenario", "grid", "io"],
    "properties": {
        "scenario": SCENARIO,
        "trials": _list({"type": "integer", "minimum": 0}),
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "required": ["variant"],
            "properties": {
                "variant": _list({"type": "integer"}),
                "beta": _list(_pos),
                "gamma": _list(_nonneg),
                "lambda_tik": _list(_pos),
                "lambda_1": _list(_nonneg),
                "num_bases": _list({"type": "integer", "minimum": 1}),
                "seed": _list({"type": "integer", "minimum": 0}),
                "input_scale": _list(_pos),
            },
        },
        "solver": SOLVER,
        "stft": STFT,
        "io": {
            "type": "object",
            "additionalProperties": False,
            "required": ["output_dir"],
            "properties": {"output_dir": {"type": "string"}},
        },
    },
}


def load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON ({err})") from None


def validate(doc: dict, schema: dict) -> None:
    try:
        jsonschema.validate(doc, schema)
    except jsonschema.ValidationError as err:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {err.message}") from None


def default_seed() -> int:
    val = os.environ.get(SEED_ENV)
    if val is None:
        return 0
    try:
        return int(val)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {val!r}") from None


def resolve_geometry(doc) -> ArrayGeometry:
    if doc is None or doc == "preset":
        return preset_geometry()
    c = doc.get("speed_of_sound", 343.0)
    try:
        if "positions" in doc:
            return ArrayGeometry(doc["positions"], c)
        return ArrayGeometry.uniform_linear(doc["num_mics"], doc["spacing"], c)
    except ValueError as err:
        raise ConfigError(f"geometry: {err}") from None


def resolve_stft(doc: dict | None) -> StftConfig:
    doc = dict(doc or {})
    try:
        return StftConfig(**doc)
    except ValueError as err:
        raise ConfigError(f"stft: {err}") from None


_INAPPLICABLE = {
    "euclidean_one": ("lambda_tik", "lambda_1"),
}


def _check_variant(vid: int) -> None:
    if vid in RESERVED or vid not in VARIANTS:
        known = ", ".join(str(v) for v in VARIANTS)
        raise ConfigError(f"variant {vid} is not available (choose from {known})")


def _explicit_priors(prior: dict) -> PriorSpec:
    chans = []
    for c in prior.get("channels", []):
        doas = [math.radians(a) for a in c.get("doas_deg", [])]
        weights = c.get("weights", [1.0] * len(doas))
        try:
            chans.append(ChannelPrior(c["kind"], doas, weights, c.get("lambda_tik", 1.0), c.get("gamma", 0.0)))
        except ValueError as err:
            raise ConfigError(f"prior/channels: {err}") from None
    bg = None
    if "background" in prior:
        b = prior["background"]
        doas = [math.radians(a) for a in b.get("doas_deg", [])]
        bg = BackgroundPrior(tuple(doas), tuple(b.get("weights", [1.0] * len(doas))), b.get("lambda_tik", 1.0), b.get("gamma", 0.0))
    return PriorSpec(chans, bg)


def resolve_run(doc: dict) -> dict:
    """Fill every default so the returned document fully describes the run."""
    validate(doc, RUN_SCHEMA)
    out = copy.deepcopy(doc)
    out.pop("manifest", None)
    vid = out["variant"]
    _check_variant(vid)
    v = get_variant(vid)
    d = DEFAULTS[vid]
    solver = out.setdefault("solver", {})
    solver.setdefault("max_iters", d.max_iters)
    solver.setdefault("beta", d.beta)
    solver.setdefault("num_bases", d.num_bases or 2)
    solver.setdefault("eps_cov", 1e-9)
    solver.setdefault("seed", default_seed())
    solver.setdefault("input_scale", 1.0)
    out.setdefault("geometry", "preset")
    st = out.setdefault("stft", {})
    for k, val in (("fft_size", 2048), ("hop", 1024), ("window", "vonhann"), ("sample_rate", 16000.0)):
        st.setdefault(k, val)
    prior = out.setdefault("prior", {})
    if "channels" in prior or "background" in prior:
        if any(k in prior for k in ("gamma", "lambda_tik", "lambda_1", "target_doa_deg")):
            raise ConfigError("prior: give either explicit channels/background or variant parameters, not both")
        return out
    uses_prior = v.soi_prior != "none" or v.bg_prior
    if not uses_prior:
        extra = [k for k in ("gamma", "lambda_tik", "lambda_1", "target_doa_deg") if k in prior]
        if extra:
            raise ConfigError(f"prior: variant {vid} takes no spatial prior, got {extra}")
        return out
    if "target_doa_deg" not in prior:
        raise ConfigError(f"prior: variant {vid} needs target_doa_deg")
    for k in _INAPPLICABLE.get(v.soi_prior, ()):
        if k in prior:
            raise ConfigError(f"prior: {k} is not applicable to variant {vid}")
    prior.setdefault("gamma", d.gamma)
    if v.soi_prior != "euclidean_one":
        prior.setdefault("lambda_tik", d.lambda_tik)
        prior.setdefault("lambda_1", d.lambda_1)
    return out


@dataclass
class ResolvedRun:
    doc: dict
    solver: SolverConfig
    stft: StftConfig
    geometry: ArrayGeometry


def build_run(doc: dict) -> ResolvedRun:
    doc = resolve_run(doc)
    geom = resolve_geometry(doc["geometry"])
    stft = resolve_stft(doc["stft"])
    s = doc["solver"]
    prior = doc["prior"]
    vid = doc["variant"]
    v = get_variant(vid)
    common = dict(
        max_iters=s["max_iters"],
        beta=s["beta"],
        num_bases=s["num_bases"],
        eps_cov=s["eps_cov"],
        seed=s["seed"],
        input_scale=s["input_scale"],
    )
    try:
        if "channels" in prior or "background" in prior:
            spec = _explicit_priors(prior)
            cfg = SolverConfig(
                num_soi=1 if v.extraction else geom.num_mics,
                model_kind="nmf" if v.nmf else "ggd",
                priors=spec,
                geometry=geom,
                variant=vid,
                **common,
            )
        else:
            target = math.radians(prior["target_doa_deg"]) if "target_doa_deg" in prior else None
            params = {k: prior[k] for k in ("gamma", "lambda_tik", "lambda_1") if k in prior}
            cfg = solver_config(vid, geom, target, **params, **common)
    except ValueError as err:
        raise ConfigError(str(err)) from None
    return ResolvedRun(doc, cfg, stft, geom)


def resolve_scenario(doc: dict, seed: int | None = None) -> tuple[ScenarioSpec, list[str] | None]:
    """Scenario block -> spec. ``seed`` overrides the document's seed (sweeps)."""
    seed = doc.get("seed", default_seed()) if seed is None else seed
    duration = doc.get("duration", 10.0)
    snr = doc.get("snr_db", 30.0)
    snr = math.inf if snr == "inf" else float(snr)
    fs = doc.get("sample_rate", 16000.0)
    try:
        if "preset" in doc:
            if "sources" in doc or "geometry" in doc:
                raise ConfigError("scenario: preset excludes sources and geometry")
            p = doc["preset"]
            spec = preset_paper_scene(p["room"], p["permutation"], p["target"], duration, snr, seed, fs)
            if "t60" in doc:
                spec.reverb_tail = None if doc["t60"] is None else (doc["t60"], doc.get("reverb_seed", seed))
        else:
            if "sources" not in doc:
                raise ConfigError("scenario: needs either preset or sources")
            geom = resolve_geometry(doc.get("geometry", "preset"))
            sources = [
                SourceSpec(math.radians(s["doa_deg"]), s.get("distance", 1.0), s.get("signal", i))
                for i, s in enumerate(doc["sources"])
            ]
            t60 = doc.get("t60")
            spec = ScenarioSpec(
                geom,
                sources,
                snr_db=snr,
                reverb_tail=None if t60 is None else (t60, doc.get("reverb_seed", seed)),
                seed=seed,
                duration=duration,
                sample_rate=fs,
                target=doc.get("target", 1) - 1,
            )
    except ValueError as err:
        raise ConfigError(f"scenario: {err}") from None
    return spec, doc.get("signals")


def scenario_manifest(spec: ScenarioSpec) -> dict:
    """Scenario block (degrees) that reproduces ``spec`` exactly."""
    pos = spec.geometry.mic_positions.tolist()
    return {
        "geometry": {"positions": pos, "speed_of_sound": spec.geometry.speed_of_sound},
        "sources": [
            {"doa_deg": math.degrees(s.doa), "distance": s.distance, "signal": s.signal} for s in spec.sources
        ],
        "target": spec.target + 1,
        "snr_db": "inf" if spec.snr_db == math.inf else spec.snr_db,
        "t60": None if spec.reverb_tail is None else spec.reverb_tail[0],
        "reverb_seed": 0 if spec.reverb_tail is None else spec.reverb_tail[1],
        "seed": spec.seed,
        "duration": spec.duration,
        "sample_rate": spec.sample_rate,
    }


def write_json_atomic(path, obj) -> None:
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
