"""Left-invariant diagonal metrics on 3D unimodular Lie groups (Milnor frames).

A metric ``g = diag(a, b, c)`` in a frame with ``[e2,e3] = c1 e1`` (cyclic) has, in
the orthonormal frame ``f_i = e_i / sqrt(a_i)``, structure constants
``mu_i = c_i a_i / sqrt(abc)``.  With ``m_i = (mu_1 + mu_2 + mu_3)/2 - mu_i`` the
principal Ricci curvatures are ``r_i = 2 m_j m_k`` and the sectional curvature of the
plane orthogonal to ``f_i`` is ``K_i = (r_j + r_k - r_i) / 2``.  In dimension three
``E = Rc - S g / 2`` is diagonal with ``E(f_i, f_i) = -K_i``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DefinitenessViolated
from .flows import FlowSpec
from .grid import FrameGrid, MetricField

__all__ = [
    "PRESETS",
    "FrameMetric",
    "FrameCurvature",
    "frame_curvature",
    "frame_flow_rhs",
    "berger",
]

# Nil and Sol ship for Ricci flow only; their Einstein tensors are indefinite.
PRESETS = {
    "su2": (2.0, 2.0, 2.0),
    "nil": (1.0, 0.0, 0.0),
    "sol": (1.0, -1.0, 0.0),
}


@dataclass(frozen=True)
class FrameMetric:
    coeffs: tuple[float, float, float] = (1.0, 1.0, 1.0)
    structure: tuple[float, float, float] = PRESETS["su2"]
    volume_norm: float = 2.0 * math.pi**2

    def __post_init__(self):
        coeffs = tuple(float(x) for x in self.coeffs)
        object.__setattr__(self, "coeffs", coeffs)
        object.__setattr__(self, "structure", tuple(float(x) for x in self.structure))
        if len(coeffs) != 3:
            raise ValueError("a diagonal frame metric has three coefficients")
        if not all(math.isfinite(x) and x > 0 for x in coeffs):
            raise ValueError(f"metric coefficients must be positive, got {coeffs}")

    @property
    def grid(self) -> FrameGrid:
        return FrameGrid(self.structure, self.volume_norm)

    def with_coeffs(self, coeffs) -> "FrameMetric":
        return FrameMetric(tuple(coeffs), self.structure, self.volume_norm)

    def to_metric(self) -> MetricField:
        """Lift to a constant-component field on the frame geometry."""
        return MetricField(self.grid, np.diag(self.coeffs))

    @property
    def volume(self) -> float:
        return self.volume_norm * math.sqrt(math.prod(self.coeffs))


def berger(a: float = 1.0, b: float = 1.0, c: float = 1.0) -> FrameMetric:
    return FrameMetric((a, b, c), PRESETS["su2"])


class FrameCurvature(NamedTuple):
    sectional: np.ndarray  # K of the plane orthogonal to e_i
    ricci: np.ndarray  # Rc(e_i, e_i)
    scalar: float
    einstein: np.ndarray  # E(e_i, e_i)
    ricci_orthonormal: np.ndarray
    einstein_orthonormal: np.ndarray


def frame_curvature(F: FrameMetric) -> FrameCurvature:
    a = np.asarray(F.coeffs)
    if np.any(a <= 0):
        raise ValueError("metric coefficients must be positive")
    mu = np.asarray(F.structure) * a / math.sqrt(float(np.prod(a)))
    m = 0.5 * mu.sum() - mu
    r = 2.0 * np.array([m[1] * m[2], m[2] * m[0], m[0] * m[1]])
    K = 0.5 * (r.sum() - 2.0 * r)
    S = float(r.sum())
    e_hat = -K
    return FrameCurvature(K, a * r, S, a * e_hat, r, e_hat)


def frame_flow_rhs(F: FrameMetric, spec: FlowSpec) -> np.ndarray:
    """``d(a, b, c)/dt`` for Ricci flow or cross-curvature flow."""
    cur = frame_curvature(F)
    a = np.asarray(F.coeffs)
    if spec.kind == "ricci" or (spec.kind == "family" and spec.k == 0 and spec.alpha == 0.0):
        return -2.0 * a * cur.ricci_orthonormal
    if spec.kind == "xcf":
        E = cur.einstein_orthonormal
        worst = int(np.argmax(spec.sigma * E))
        if spec.sigma * E[worst] >= 0.0:
            raise DefinitenessViolated(
                f"sigma*E is not negative definite (frame direction {worst}, eigenvalue {spec.sigma * E[worst]:.3e})",
                node=(worst,),
                eigenvalue=float(spec.sigma * E[worst]),
            )
        X = np.array([E[1] * E[2], E[2] * E[0], E[0] * E[1]])
        return -2.0 * spec.sigma * a * X
    raise ValueError(f"the frame backend integrates ricci and xcf flows, not {spec.kind!r}")


def einstein_margin(F: FrameMetric, sigma: int = 1) -> float:
    """Smallest eigenvalue of ``-sigma E`` relative to ``g``."""
    return float(np.min(-sigma * frame_curvature(F).einstein_orthonormal))


def write_frame_csv(path, times, coeffs, structure=PRESETS["su2"], sigma: int = 1) -> None:
    """Columns ``t, a, b, c, S, E_margin`` with round-trip float formatting."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "a", "b", "c", "S", "E_margin"])
        for t, co in zip(times, coeffs):
            F = FrameMetric(tuple(co), structure)
            row = [t, *F.coeffs, frame_curvature(F).scalar, einstein_margin(F, sigma)]
            w.writerow([repr(float(x)) for x in row])


__all__ += ["einstein_margin", "write_frame_csv"]
