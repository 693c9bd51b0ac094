"""Initial-condition recipes and smooth random test fields."""

from __future__ import annotations

import math

import numpy as np

from .grid import ChartGrid, MetricField, TensorField

__all__ = [
    "flat",
    "conformal",
    "perturbed",
    "smooth_symmetric",
    "smooth_vector",
    "default_modes",
    "perturb_pair",
]


def default_modes(dim: int) -> tuple[tuple[int, ...], ...]:
    e = np.eye(dim, dtype=int)
    return (tuple(e[0]), tuple(e[1]), tuple(e[0] + e[1]))


def _phases(grid: ChartGrid) -> list[np.ndarray]:
    return [2.0 * math.pi * x / L for x, L in zip(grid.coords(), grid.lengths)]


def flat(grid: ChartGrid, scale: float = 1.0) -> MetricField:
    return MetricField.flat(grid, scale)


def conformal_factor(grid: ChartGrid, amplitude: float, modes=None) -> np.ndarray:
    """``phi = amplitude * sum_m cos(2 pi m.x / L + 0.7 j)`` over the listed integer modes."""
    modes = default_modes(grid.dim) if modes is None else modes
    th = _phases(grid)
    phi = np.zeros(grid.shape)
    for j, m in enumerate(modes):
        if len(m) != grid.dim:
            raise ValueError(f"mode {m} does not match dimension {grid.dim}")
        phi += np.cos(sum(mi * t for mi, t in zip(m, th)) + 0.7 * j)
    return amplitude * phi


def conformal(grid: ChartGrid, amplitude: float, modes=None) -> MetricField:
    """``g = exp(2 phi) delta``."""
    phi = conformal_factor(grid, amplitude, modes)
    return MetricField(grid, np.exp(2.0 * phi)[..., None, None] * np.eye(grid.dim))


def _smooth_scalars(grid: ChartGrid, rng: np.random.Generator, count: int, kmax: int = 1) -> np.ndarray:
    th = _phases(grid)
    ks = [k for k in np.ndindex(*(2 * kmax + 1,) * grid.dim)]
    ks = [np.array(k) - kmax for k in ks]
    out = np.zeros((count,) + grid.shape)
    for c in range(count):
        for k in ks:
            arg = sum(ki * t for ki, t in zip(k, th))
            a, b = rng.standard_normal(2) / (1.0 + float(np.dot(k, k)))
            out[c] += a * np.cos(arg) + b * np.sin(arg)
    return out


def smooth_symmetric(grid: ChartGrid, seed: int = 0, scale: float = 1.0) -> TensorField:
    """Random band-limited symmetric 2-tensor normalized to sup-norm ``scale``."""
    rng = np.random.default_rng(seed)
    n = grid.dim
    comps = _smooth_scalars(grid, rng, n * (n + 1) // 2)
    h = np.zeros(grid.shape + (n, n))
    for c, (i, j) in enumerate((i, j) for i in range(n) for j in range(i, n)):
        h[..., i, j] = comps[c]
        h[..., j, i] = comps[c]
    h *= scale / max(np.max(np.abs(h)), 1e-300)
    return TensorField(grid, h, "dd")


def smooth_vector(grid: ChartGrid, seed: int = 0, scale: float = 1.0) -> TensorField:
    rng = np.random.default_rng(seed)
    v = np.moveaxis(_smooth_scalars(grid, rng, grid.dim), 0, -1)
    v *= scale / max(np.max(np.abs(v)), 1e-300)
    return TensorField(grid, v, "u")


def perturbed(grid: ChartGrid, amplitude: float = 0.1, seed: int = 0) -> MetricField:
    """Flat metric plus a random smooth symmetric perturbation of sup-norm ``amplitude``."""
    return MetricField(grid, np.eye(grid.dim) + smooth_symmetric(grid, seed, amplitude).data)


def perturb_pair(g: MetricField, delta: float, mode: str = "smooth", seed: int = 0) -> MetricField:
    """Second leg ``g + delta h`` (``mode='smooth'``) or ``exp(2 delta psi) g`` (``mode='conformal'``)."""
    if mode == "smooth":
        return MetricField(g.grid, g.data + smooth_symmetric(g.grid, seed, delta).data)
    if mode == "conformal":
        psi = _smooth_scalars(g.grid, np.random.default_rng(seed), 1)[0]
        psi /= max(np.max(np.abs(psi)), 1e-300)
        return MetricField(g.grid, np.exp(2.0 * delta * psi)[..., None, None] * g.data)
    raise ValueError(f"unknown perturbation mode {mode!r}")


__all__ += ["conformal_factor"]
