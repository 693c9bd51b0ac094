"""Run configuration: flat typed INI files, one per leg.

Example::

    [flow]
    kind = ricci

    [geometry]
    backend = grid
    extents = 32, 32
    lengths = 6.283185307179586
    fd_order = 4

    [initial]
    recipe = conformal
    amplitude = 0.05
    modes = 1 0, 0 1

    [time]
    t_end = 0.01
    dt = auto
    sample_every = 10

Arrays are comma lists; a single ``lengths`` value applies to every axis.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import corpus
from .errors import ConfigError
from .flows import FlowSpec
from .grid import ChartGrid, MetricField
from .homogeneous import PRESETS, FrameMetric
from .snapshot import read_array

__all__ = ["RunConfig", "load_config", "parse_config", "initial_metric"]

RECIPES = {
    "grid": ("flat", "conformal", "perturbed", "snapshot"),
    "frame": ("berger", "snapshot"),
}
# keys owned by one recipe; their presence under another recipe is an error
RECIPE_KEYS = {
    "amplitude": ("conformal", "perturbed"),
    "modes": ("conformal",),
    "coeffs": ("berger",),
    "path": ("snapshot",),
    "seed": ("perturbed",),
}
KNOWN = {
    "flow": {"kind", "k", "alpha", "beta", "sigma", "lambda_preset"},
    "geometry": {"backend", "extents", "lengths", "fd_order", "preset", "volume_norm"},
    "initial": {"recipe"} | set(RECIPE_KEYS),
    "time": {"t_end", "dt", "safety", "sample_every", "static_only"},
    "perturbation": {"delta", "mode", "seed"},
    "audit": {"floor"},
    "output": {"dir"},
}


@dataclass
class RunConfig:
    spec: FlowSpec = field(default_factory=FlowSpec)
    backend: str = "grid"
    extents: tuple = (16, 16)
    lengths: tuple = (2.0 * math.pi, 2.0 * math.pi)
    fd_order: int = 4
    preset: str = "su2"
    volume_norm: float = 2.0 * math.pi**2
    recipe: str = "flat"
    amplitude: float = 0.0
    modes: tuple | None = None
    coeffs: tuple = (1.0, 1.0, 1.0)
    path: str | None = None
    recipe_seed: int = 0
    t_end: float = 0.01
    dt: float | None = None
    safety: float = 0.5
    sample_every: int = 1
    static_only: bool = False
    delta: float = 0.0
    perturb_mode: str = "smooth"
    perturb_seed: int = 0
    floor: float | None = None
    out: str | None = None
    source: str = "<string>"

    def grid(self):
        if self.backend == "frame":
            return FrameMetric(structure=PRESETS[self.preset], volume_norm=self.volume_norm).grid
        return ChartGrid(self.extents, self.lengths, self.fd_order)

    def record(self) -> dict:
        d = asdict(self)
        d["spec"] = asdict(self.spec)
        return d


def _get(cp, sec, key, conv, default, fld=None):
    fld = fld or f"{sec}.{key}"
    if not cp.has_option(sec, key):
        return default
    raw = cp.get(sec, key).strip()
    try:
        return conv(raw)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"cannot parse {raw!r} ({exc})", field=fld) from None


def _floats(raw: str) -> tuple:
    return tuple(float(x) for x in raw.split(",") if x.strip())


def _ints(raw: str) -> tuple:
    return tuple(int(x) for x in raw.split(",") if x.strip())


def _bool(raw: str) -> bool:
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _modes(raw: str) -> tuple:
    return tuple(tuple(int(v) for v in m.split()) for m in raw.split(",") if m.strip())


def _finite(x: float, fld: str, lo=None, hi=None, lo_open=False) -> float:
    if not math.isfinite(x):
        raise ConfigError("must be finite", field=fld)
    if lo is not None and (x < lo or (lo_open and x == lo)):
        raise ConfigError(f"must be {'>' if lo_open else '>='} {lo}, got {x}", field=fld)
    if hi is not None and x > hi:
        raise ConfigError(f"must be <= {hi}, got {x}", field=fld)
    return x


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], field="file") from None
    for sec in cp.sections():
        if sec not in KNOWN:
            raise ConfigError("unknown section", field=sec)
        for key in cp.options(sec):
            if key not in KNOWN[sec]:
                raise ConfigError("unknown key", field=f"{sec}.{key}")

    kind = _get(cp, "flow", "kind", str, "ricci")
    try:
        spec = FlowSpec(
            kind=kind,
            k=_get(cp, "flow", "k", int, 1 if kind == "l2" else 0),
            alpha=_finite(_get(cp, "flow", "alpha", float, 0.0), "flow.alpha"),
            beta=_finite(_get(cp, "flow", "beta", float, 0.0), "flow.beta"),
            sigma=_get(cp, "flow", "sigma", int, 1),
            lambda_preset=_get(cp, "flow", "lambda_preset", str, "zero"),
        )
    except ValueError as exc:
        raise ConfigError(str(exc), field="flow") from None

    cfg = RunConfig(spec=spec, source=source)
    cfg.backend = _get(cp, "geometry", "backend", str, "grid")
    if cfg.backend not in RECIPES:
        raise ConfigError(f"must be one of {sorted(RECIPES)}", field="geometry.backend")
    if cfg.backend == "grid":
        cfg.extents = _get(cp, "geometry", "extents", _ints, (16, 16))
        if len(cfg.extents) not in (2, 3, 4) or any(n < 8 for n in cfg.extents):
            raise ConfigError("need 2 to 4 axes with at least 8 nodes each", field="geometry.extents")
        lengths = _get(cp, "geometry", "lengths", _floats, (2.0 * math.pi,))
        if len(lengths) == 1:
            lengths = lengths * len(cfg.extents)
        if len(lengths) != len(cfg.extents):
            raise ConfigError("one period per axis (or a single shared value)", field="geometry.lengths")
        for L in lengths:
            _finite(L, "geometry.lengths", 0.0, lo_open=True)
        cfg.lengths = lengths
        cfg.fd_order = _get(cp, "geometry", "fd_order", int, 4)
        if cfg.fd_order not in (2, 4):
            raise ConfigError("must be 2 or 4", field="geometry.fd_order")
        if cp.has_option("geometry", "preset"):
            raise ConfigError("frame presets need backend = frame", field="geometry.preset")
    else:
        cfg.preset = _get(cp, "geometry", "preset", str, "su2")
        if cfg.preset not in PRESETS:
            raise ConfigError(f"must be one of {sorted(PRESETS)}", field="geometry.preset")
        cfg.volume_norm = _finite(_get(cp, "geometry", "volume_norm", float, 2.0 * math.pi**2),
                                  "geometry.volume_norm", 0.0, lo_open=True)
        for key in ("extents", "lengths", "fd_order"):
            if cp.has_option("geometry", key):
                raise ConfigError("grid settings need backend = grid", field=f"geometry.{key}")

    cfg.recipe = _get(cp, "initial", "recipe", str, "flat" if cfg.backend == "grid" else "berger")
    if cfg.recipe not in RECIPES[cfg.backend]:
        raise ConfigError(f"backend {cfg.backend} accepts {', '.join(RECIPES[cfg.backend])}", field="initial.recipe")
    for key, owners in RECIPE_KEYS.items():
        if cp.has_option("initial", key) and cfg.recipe not in owners:
            raise ConfigError(f"belongs to recipe {' or '.join(owners)}, not {cfg.recipe}", field=f"initial.{key}")
    cfg.amplitude = _finite(_get(cp, "initial", "amplitude", float, 0.05), "initial.amplitude", 0.0, 0.5)
    cfg.modes = _get(cp, "initial", "modes", _modes, None)
    if cfg.modes is not None and any(len(m) != len(cfg.extents) for m in cfg.modes):
        raise ConfigError("each mode needs one integer per axis", field="initial.modes")
    cfg.coeffs = _get(cp, "initial", "coeffs", _floats, (1.0, 1.0, 1.0))
    if len(cfg.coeffs) != 3 or not all(math.isfinite(c) and c > 0 for c in cfg.coeffs):
        raise ConfigError("need three positive coefficients", field="initial.coeffs")
    cfg.path = _get(cp, "initial", "path", str, None)
    if cfg.recipe == "snapshot" and not cfg.path:
        raise ConfigError("snapshot recipe needs a path", field="initial.path")
    cfg.recipe_seed = _get(cp, "initial", "seed", int, 0)

    cfg.t_end = _finite(_get(cp, "time", "t_end", float, 0.01), "time.t_end", 0.0, lo_open=True)
    dt = _get(cp, "time", "dt", str, "auto")
    if dt != "auto":
        try:
            cfg.dt = _finite(float(dt), "time.dt", 0.0, lo_open=True)
        except ValueError:
            raise ConfigError(f"expected 'auto' or a number, got {dt!r}", field="time.dt") from None
    cfg.safety = _finite(_get(cp, "time", "safety", float, 0.5), "time.safety", 0.0, 1.0, lo_open=True)
    cfg.sample_every = _get(cp, "time", "sample_every", int, 1)
    if cfg.sample_every < 1:
        raise ConfigError("must be a positive integer", field="time.sample_every")
    cfg.static_only = _get(cp, "time", "static_only", _bool, False)

    cfg.delta = _finite(_get(cp, "perturbation", "delta", float, 0.0), "perturbation.delta", 0.0, 0.5)
    default_mode = "smooth" if cfg.backend == "grid" else "coeffs"
    cfg.perturb_mode = _get(cp, "perturbation", "mode", str, default_mode)
    allowed = ("smooth", "conformal") if cfg.backend == "grid" else ("coeffs",)
    if cfg.perturb_mode not in allowed:
        raise ConfigError(f"must be one of {', '.join(allowed)}", field="perturbation.mode")
    cfg.perturb_seed = _get(cp, "perturbation", "seed", int, 0)
    floor = _get(cp, "audit", "floor", float, None)
    cfg.floor = None if floor is None else _finite(floor, "audit.floor", 0.0)
    cfg.out = _get(cp, "output", "dir", str, None)
    return cfg


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"no such file {str(p)!r}", field="--config")
    return parse_config(p.read_text(), source=str(p))


def initial_metric(cfg: RunConfig):
    """Initial data of one leg (``FrameMetric`` on frames, ``MetricField`` on grids)."""
    if cfg.backend == "frame":
        coeffs = np.array(cfg.coeffs, dtype=float)
        if cfg.recipe == "snapshot":
            data = read_array(cfg.path)[0]
            coeffs = np.diag(data.reshape(3, 3)).copy()
        if cfg.delta > 0:
            u = np.random.default_rng(cfg.perturb_seed).standard_normal(3)
            coeffs = coeffs * (1.0 + cfg.delta * u / np.linalg.norm(u))
        return FrameMetric(tuple(coeffs), PRESETS[cfg.preset], cfg.volume_norm)
    grid = cfg.grid()
    if cfg.recipe == "flat":
        g = corpus.flat(grid)
    elif cfg.recipe == "conformal":
        g = corpus.conformal(grid, cfg.amplitude, cfg.modes)
    elif cfg.recipe == "perturbed":
        g = corpus.perturbed(grid, cfg.amplitude, cfg.recipe_seed)
    else:
        data, dim, p, q, extents = read_array(cfg.path)
        if (p, q) != (0, 2) or tuple(extents) != grid.shape:
            raise ConfigError(f"snapshot holds a ({p},{q}) field on {extents}, expected a metric on {grid.shape}",
                              field="initial.path")
        g = MetricField(grid, data)
    if cfg.delta > 0:
        g = corpus.perturb_pair(g, cfg.delta, cfg.perturb_mode, cfg.perturb_seed)
    return g
