"""Difference systems of two solutions, their energies and the Grönwall audit.

For two metrics ``g`` and ``g~`` the prolonged system collects

    h = g - g~,   A = Gamma(g) - Gamma(g~),
    X_l = nabla^l Rm - nabla~^l Rm~   (l = 0 .. 2k),
    Z_l = nabla^l S - nabla~^l S~     (l in {0, 2k}),

and all norms are taken with ``g`` as the reference metric.  The energy
``E = G + H + r K`` with

    G = |h|^2 + |nabla^k A|^2,   H = |X_0|^2 + |X_2k|^2,   K = |Z_2k|^2

satisfies ``E(t2) <= exp(C (t2 - t1)) E(t1)`` along pairs of solutions, which is
what ``gronwall_audit`` checks.  When ``k = 0`` the two orders in ``H`` coincide
and the term is counted once.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np

from .errors import GridMismatch, OutOfRange
from .flows import xcf_algebra
from .grid import MetricField, TensorField, l2_norm_sq, pointwise_inner
from .tensor_calc import christoffel, covariant_derivative, curvature

__all__ = [
    "DifferencePack",
    "XcfPack",
    "EnergySeries",
    "GronwallResult",
    "build_differences",
    "energies",
    "choose_weights",
    "xcf_pack",
    "gronwall_audit",
    "abstract_energy_audit",
    "nabla_iter",
    "SCHEMA_VERSION",
]

SCHEMA_VERSION = 1
VIOLATION_TOL = 1e-9
LOG_FLOOR = 1e-300
ROUNDOFF = 1e-24


def nabla_iter(T: TensorField, g: MetricField, l: int) -> TensorField:
    """``nabla^l T`` with new slots prepended."""
    conn = christoffel(g)
    for _ in range(l):
        T = covariant_derivative(T, conn)
    return T


def _check_same_grid(g: MetricField, gt: MetricField):
    if g.grid != gt.grid:
        raise GridMismatch("the two metrics live on different grids")


@dataclass(frozen=True, eq=False)
class DifferencePack:
    reference: MetricField
    h: TensorField
    A: TensorField
    X: list
    Z: dict
    k: int

    def fields(self) -> list[TensorField]:
        return [self.h, self.A, *self.X, *self.Z.values()]

    def max_abs(self) -> float:
        return max(F.max_abs() for F in self.fields())


def build_differences(g: MetricField, gt: MetricField, k: int) -> DifferencePack:
    if k < 0:
        raise ValueError("k must be non-negative")
    _check_same_grid(g, gt)
    cb, cbt = curvature(g), curvature(gt)
    h = g - gt
    A = cb.conn.gamma - cbt.conn.gamma
    X = []
    D, Dt = cb.Rm, cbt.Rm
    for l in range(2 * k + 1):
        if l:
            D, Dt = covariant_derivative(D, cb.conn), covariant_derivative(Dt, cbt.conn)
        X.append(D - Dt)
    Z = {l: nabla_iter(cb.S, g, l) - nabla_iter(cbt.S, gt, l) for l in sorted({0, 2 * k})}
    return DifferencePack(g, TensorField(g.grid, h.data, "dd"), A, X, Z, k)


class Energies(NamedTuple):
    G: float
    H: float
    K: float
    E: float


def energies(pack: DifferencePack, r: float) -> Energies:
    if not r >= 0:
        raise ValueError("r must be non-negative")
    g, k = pack.reference, pack.k
    G = l2_norm_sq(pack.h, g) + l2_norm_sq(nabla_iter(pack.A, g, k), g)
    H = sum(l2_norm_sq(pack.X[l], g) for l in sorted({0, 2 * k}))
    K = l2_norm_sq(pack.Z[2 * k], g)
    return Energies(G, H, K, G + H + r * K)


class Weights(NamedTuple):
    r: float
    eps: float
    a: float
    b: float


def choose_weights(alpha: float, n: int) -> Weights:
    """Deterministic admissible weights: ``r`` twice the lower bound, ``eps`` half its bound."""
    if n < 2:
        raise ValueError("dimension must be at least 2")
    edge = -1.0 / (2.0 * (n - 1))
    if not alpha > edge:
        raise OutOfRange(f"alpha = {alpha} violates alpha > -1/(2(n-1)) = {edge}")
    denom = 1.0 + 2.0 * alpha * (n - 1)
    r = max(0.0, -4.0 * alpha / denom)
    eps = 1.0 / (2.0 * (r + 2.0))
    a = -2.0 * (1.0 - eps * (r + 2.0))
    b = -2.0 * (2.0 * alpha + r * denom) + 0.0  # no negative zero
    return Weights(r, eps, a, b)


@dataclass(frozen=True, eq=False)
class XcfPack:
    W: TensorField
    h: TensorField
    A: TensorField
    U: TensorField
    reference: MetricField
    C_ratio: float


def _pointwise_norm(T: TensorField, g: MetricField) -> np.ndarray:
    return np.sqrt(np.maximum(pointwise_inner(T, T, g).data, 0.0))


def xcf_pack(g: MetricField, gt: MetricField) -> XcfPack:
    """``W = V - V~``, ``h``, ``A`` and the flux
    ``U^a_ij = (E^ab - E~^ab) nabla~_b V~_ij - E^ab A^p_bi V~_pj - E^ab A^p_bj V~_ip``."""
    _check_same_grid(g, gt)
    alg, algt = xcf_algebra(g), xcf_algebra(gt)
    A = christoffel(g).gamma - christoffel(gt).gamma
    W = alg.V - algt.V
    Eup, Eup_t = alg.E_raised.data, algt.E_raised.data
    Vt = algt.V.data
    DVt = covariant_derivative(algt.V, gt).data  # [b, i, j]
    U = (
        np.einsum("...ab,...bij->...aij", Eup - Eup_t, DVt)
        - np.einsum("...ab,...pbi,...pj->...aij", Eup, A.data, Vt)
        - np.einsum("...ab,...pbj,...ip->...aij", Eup, A.data, Vt)
    )
    U = TensorField(g.grid, U, "udd")
    nU = _pointwise_norm(U, g)
    denom = _pointwise_norm(A, g) + _pointwise_norm(W, g)
    live = denom > 1e-300
    C = float(np.max(nU[live] / denom[live])) if np.any(live) else 0.0
    return XcfPack(W, TensorField(g.grid, (g - gt).data, "dd"), A, U, g, C)


@dataclass(frozen=True)
class EnergySeries:
    times: np.ndarray
    G: np.ndarray
    H: np.ndarray
    K: np.ndarray
    E: np.ndarray
    r: float = 0.0
    eps: float = 0.0
    scale: float = 1.0
    C_fit: float = math.nan
    max_violation: float = math.nan
    C_running: np.ndarray = field(default=None)

    def __post_init__(self):
        for name in ("times", "G", "H", "K", "E"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        n = len(self.times)
        if any(len(getattr(self, s)) != n for s in ("G", "H", "K", "E")):
            raise ValueError("energy columns and times differ in length")
        if n > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    @classmethod
    def from_samples(cls, times, samples: Sequence[Energies], r: float = 0.0, eps: float = 0.0, scale: float = 1.0):
        cols = np.array([tuple(s) for s in samples], dtype=float).reshape(-1, 4)
        return cls(np.asarray(times, float), cols[:, 0], cols[:, 1], cols[:, 2], cols[:, 3], r, eps, scale)

    def with_audit(self, res: "GronwallResult") -> "EnergySeries":
        return replace(self, C_fit=res.C_fit, max_violation=res.max_violation, C_running=res.running)

    def write_csv(self, path) -> None:
        running = self.C_running if self.C_running is not None else np.full(len(self.times), math.nan)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "G", "H", "K", "E", "C_fit_running"])
            for row in zip(self.times, self.G, self.H, self.K, self.E, running):
                w.writerow([repr(float(x)) for x in row])


class GronwallResult(NamedTuple):
    C_fit: float
    max_violation: float
    verdict: str
    running: np.ndarray


def gronwall_audit(series: EnergySeries, identical: bool = False, floor: float | None = None) -> GronwallResult:
    """Fit ``C`` as the largest consecutive log-slope and test ``E(t2) <= e^{C(t2-t1)} E(t1)``.

    With ``identical=True`` the legs started from the same data and the verdict
    instead requires ``E`` to stay below ``floor`` (default: the roundoff floor
    ``1e-24 * scale**2``); an explicit floor yields ``pass-with-floor``.
    """
    t, E = series.times, series.E
    if len(t) < 3:
        raise ValueError(f"the audit needs at least 3 samples, got {len(t)}")
    if np.any(E < 0) or not np.all(np.isfinite(E)):
        raise ValueError("energies must be finite and non-negative")
    live = np.flatnonzero(E > LOG_FLOOR)
    running = np.zeros(len(t))
    C, worst = 0.0, 0.0
    if len(live) >= 2:
        lt, lE = t[live], np.log(E[live])
        slopes = np.diff(lE) / np.diff(lt)
        C = float(np.max(slopes))
        run = np.maximum.accumulate(slopes)
        running[live[1:]] = run
        running = np.maximum.accumulate(running)
        gap = lE[None, :] - lE[:, None] - C * (lt[None, :] - lt[:, None])
        worst = float(np.max(gap[np.triu_indices(len(lt), 1)]))
    if identical:
        zero = ROUNDOFF * series.scale**2 if floor is None else floor
        ok = float(np.max(E)) <= zero
        verdict = ("pass" if floor is None else "pass-with-floor") if ok else "fail"
    else:
        verdict = "pass" if worst <= VIOLATION_TOL else "fail"
    return GronwallResult(C, worst, verdict, running)


def verdict_record(series: EnergySeries, res: GronwallResult, flow: str, k: int, alpha: float, beta: float) -> dict:
    return {
        "schema": SCHEMA_VERSION,
        "flow": flow,
        "k": int(k),
        "alpha": float(alpha),
        "beta": float(beta),
        "r": float(series.r),
        "eps": float(series.eps),
        "C_fit": float(res.C_fit),
        "max_violation": float(res.max_violation),
        "verdict": res.verdict,
    }


def write_verdict(path, record: dict) -> None:
    with open(path, "w") as fh:
        json.dump(record, fh, indent=2)
        fh.write("\n")


def abstract_energy_audit(times, X_parts: Sequence[Sequence[TensorField]], Y_parts: Sequence[Sequence[TensorField]],
                          reference: Sequence[MetricField]) -> EnergySeries:
    """``E(t) = sum |X_i|^2 + sum |Y_j|^2`` on a shared time grid (``H`` holds the X sum, ``G`` the Y sum)."""
    times = np.asarray(times, dtype=float)
    n = len(times)
    if len(reference) != n or any(len(p) != n for p in (*X_parts, *Y_parts)):
        raise ValueError("all trajectories must share the audit time grid")
    H = np.array([sum(l2_norm_sq(p[i], reference[i]) for p in X_parts) for i in range(n)], dtype=float)
    G = np.array([sum(l2_norm_sq(p[i], reference[i]) for p in Y_parts) for i in range(n)], dtype=float)
    return EnergySeries(times, G, H, np.zeros(n), G + H)


__all__ += ["Energies", "Weights", "verdict_record", "write_verdict"]
