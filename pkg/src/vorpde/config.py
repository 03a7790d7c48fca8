"""Experiment configuration: flat key = value files, CLI overrides, validation.

The file format is deliberately plain: one `key = value` per line, `#` starts
a comment, keys are experiment-specific and unknown keys are rejected by name.
CLI flags override file values; generic overrides come as `key=value` pairs.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .geometry import Rect, SiteSet

EXPERIMENTS = ("voronoi", "colonize", "heat", "eikonal", "transport", "harmonic")

OUT_ENV_VAR = "VORPDE_OUT"


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


def _as_int(key, raw):
    try:
        return int(str(raw).strip())
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {raw!r}")


def _as_float(key, raw):
    try:
        return float(str(raw).strip())
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {raw!r}")


def _as_str(key, raw):
    return str(raw).strip()


def _as_bool(key, raw):
    val = str(raw).strip().lower()
    if val in ("1", "true", "yes", "on"):
        return True
    if val in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}")


def _as_floats(key, raw):
    if isinstance(raw, (list, tuple, np.ndarray)):
        return [float(v) for v in raw]
    try:
        return [float(v) for v in str(raw).replace(";", ",").split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {raw!r}")


def _as_points(key, raw):
    if isinstance(raw, np.ndarray):
        return raw
    try:
        pts = []
        for chunk in str(raw).split(";"):
            chunk = chunk.strip()
            if not chunk:
                continue
            x, y = (float(v) for v in chunk.split(","))
            pts.append((x, y))
        if not pts:
            raise ValueError
        return np.asarray(pts, dtype=float)
    except ValueError:
        raise ConfigError(f"{key}: expected 'x,y; x,y; ...', got {raw!r}")


# key -> (caster, default); None default means "computed later"
_COMMON = {
    "seed": (_as_int, 0),
    "grid": (_as_int, 256),
    "out": (_as_str, None),
    "domain": (_as_floats, [0.0, 2.0, 0.0, 2.0]),
    "sites": (_as_points, None),
    "weights": (_as_floats, None),
}

_SCHEMAS = {
    "voronoi": {"n_sites": (_as_int, 4), "mode": (_as_str, "voronoi")},
    "colonize": {
        "n_sources": (_as_int, 4),
        "particles": (_as_int, 100),
        "iterations": (_as_int, 500),
        "step": (_as_float, 0.1),
        "epsilon": (_as_float, 0.01),
        "warmup": (_as_int, 5),
        "min_fraction": (_as_float, 0.8),
    },
    "heat": {
        "n_sites": (_as_int, 4),
        "t": (_as_float, 1e-3),
        "heat_weights": (_as_floats, None),
        "delta": (_as_float, 0.02),
        "eps": (_as_float, 0.05),
        "ds": (_as_float, 0.005),
        "rays": (_as_int, 64),
    },
    "eikonal": {"n_sites": (_as_int, 4), "tau": (_as_float, None), "snapshots": (_as_floats, None)},
    "transport": {
        "n_sites": (_as_int, 3),
        "lambda": (_as_float, 0.5),
        "samples": (_as_int, 100_000),
        "csv_samples": (_as_int, 10_000),
    },
    "harmonic": {
        "n_sites": (_as_int, 3),
        "eps_disk": (_as_float, 0.1),
        "tol": (_as_float, 1e-8),
        "omega": (_as_float, None),
    },
}


@dataclass
class ExperimentConfig:
    experiment: str
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def echo(self) -> dict:
        """Deterministic config snapshot for the manifest (paths excluded)."""
        out = {}
        for key in sorted(self.values):
            if key == "out":
                continue
            val = self.values[key]
            if isinstance(val, np.ndarray):
                val = val.tolist()
            out[key] = val
        return out


def _schema_for(experiment: str) -> dict:
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment: unknown experiment {experiment!r}")
    schema = dict(_COMMON)
    schema.update(_SCHEMAS[experiment])
    return schema


def read_config_file(path) -> dict:
    raw = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        raw[key] = val
    return raw


def _validate(experiment: str, values: dict) -> dict:
    v = values
    if v["grid"] < 2:
        raise ConfigError("grid: needs at least 2 nodes per axis")
    dom = v["domain"]
    if len(dom) != 4:
        raise ConfigError("domain: expected x0,x1,y0,y1")
    if not (dom[1] > dom[0] and dom[3] > dom[2]):
        raise ConfigError("domain: empty rectangle")
    if experiment == "transport" and not (0.0 < v["lambda"] < 1.0):
        raise ConfigError(f"lambda: must lie in (0, 1), got {v['lambda']}")
    if experiment == "colonize":
        if v["n_sources"] < 2:
            raise ConfigError("n_sources: colonization needs at least 2 sources")
        for key in ("step", "epsilon"):
            if v[key] <= 0:
                raise ConfigError(f"{key}: must be positive")
        if not (0.0 <= v["min_fraction"] <= 1.0):
            raise ConfigError("min_fraction: must lie in [0, 1]")
    if experiment == "heat":
        if v["t"] <= 0:
            raise ConfigError("t: diffusion time must be positive")
        for key in ("delta", "eps", "ds"):
            if v[key] <= 0:
                raise ConfigError(f"{key}: must be positive")
    if experiment == "harmonic" and v["eps_disk"] <= 0:
        raise ConfigError("eps_disk: must be positive")
    if experiment == "voronoi" and v["mode"] not in ("voronoi", "power"):
        raise ConfigError(f"mode: expected voronoi or power, got {v['mode']!r}")
    return v


def parse_config(
    experiment: str,
    config_path=None,
    flag_values: dict = None,
    overrides: list = None,
) -> ExperimentConfig:
    """Merge defaults < file < --override pairs < dedicated flags, validating
    every key against the experiment schema."""
    schema = _schema_for(experiment)
    values = {key: default for key, (_, default) in schema.items()}

    def apply(key: str, raw, source: str):
        if key == "experiment":
            named = _as_str(key, raw)
            if named != experiment:
                raise ConfigError(
                    f"experiment: config file names {named!r} but {experiment!r} was requested"
                )
            return
        if key not in schema:
            raise ConfigError(f"{key}: unknown key for experiment {experiment!r} ({source})")
        caster, _ = schema[key]
        values[key] = caster(key, raw)

    if config_path is not None:
        if not Path(config_path).exists():
            raise ConfigError(f"config: file not found: {config_path}")
        for key, raw in read_config_file(config_path).items():
            apply(key, raw, "config file")
    for pair in overrides or []:
        if "=" not in pair:
            raise ConfigError(f"override: expected key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        apply(key.strip(), raw, "--override")
    for key, raw in (flag_values or {}).items():
        if raw is not None:
            apply(key, raw, "flag")
    if values.get("out") is None:
        values["out"] = os.environ.get(OUT_ENV_VAR, "out")
    return ExperimentConfig(experiment=experiment, values=_validate(experiment, values))


def random_sites(seed: int, n: int, domain: Rect, margin: float = 0.25, min_sep: float = None):
    """Seeded site draws with a domain margin and optional minimum separation
    (rejection sampling with restart, so tight packings cannot deadlock)."""
    rng = np.random.default_rng(seed)
    if min_sep is None:
        min_sep = 0.35 * min(domain.width, domain.height) / max(np.sqrt(n), 1.0)
    for _ in range(500):
        pts = []
        for _ in range(300):
            c = np.array(
                [
                    rng.uniform(domain.x0 + margin, domain.x1 - margin),
                    rng.uniform(domain.y0 + margin, domain.y1 - margin),
                ]
            )
            if all(np.hypot(*(c - p)) >= min_sep for p in pts):
                pts.append(c)
                if len(pts) == n:
                    return np.asarray(pts)
    raise ConfigError(
        f"sites: could not place {n} sites with separation {min_sep:g} in the domain"
    )


def build_siteset(cfg: ExperimentConfig, n_key: str = "n_sites", min_sep: float = None) -> SiteSet:
    """SiteSet from explicit config sites or the seeded generator."""
    dom = Rect(*cfg["domain"])
    if cfg.values.get("sites") is not None:
        sites = cfg["sites"]
    else:
        sites = random_sites(cfg["seed"], cfg[n_key], dom, min_sep=min_sep)
    weights = cfg.values.get("weights")
    return SiteSet(sites=sites, weights=weights, domain=dom)
