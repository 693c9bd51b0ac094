"""Right-hand sides of the curvature flows and the cross-curvature algebra."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DefinitenessViolated, NonInvertibleEinstein
from .grid import MetricField, TensorField, integrate, l2_inner
from .tensor_calc import curvature, obstruction_leading

__all__ = [
    "FlowSpec",
    "XcfAlgebra",
    "ricci_rhs",
    "l2_quadratics",
    "l2_rhs",
    "family_rhs",
    "xcf_algebra",
    "xcf_rhs",
    "cross_curvature_defect",
    "curvature_functional",
    "flow_rhs",
    "rm_norm_sq",
]

KINDS = ("ricci", "l2", "family", "xcf")
PRESETS = ("zero", "l2_quadratics")


@dataclass(frozen=True)
class FlowSpec:
    kind: str = "ricci"
    k: int = 0
    alpha: float = 0.0
    beta: float = 0.0
    sigma: int = 1
    lambda_preset: str = "zero"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown flow kind {self.kind!r}")
        if self.lambda_preset not in PRESETS:
            raise ValueError(f"unknown lower-order preset {self.lambda_preset!r}")
        if self.sigma not in (1, -1):
            raise ValueError("sigma must be +1 or -1")
        if self.kind == "family":
            if self.k < 0:
                raise ValueError("k must be non-negative")
            if self.k == 0 and self.beta != 0.0:
                raise ValueError("family flow with k = 0 requires beta = 0")
            if self.lambda_preset == "l2_quadratics" and self.k != 1:
                raise ValueError("the l2_quadratics preset is defined for k = 1 only")

    @property
    def audit_k(self) -> int:
        """Order index of the prolonged system for this flow."""
        return {"ricci": 0, "l2": 1, "xcf": 0}.get(self.kind, self.k)

    @property
    def audit_alpha(self) -> float:
        return self.alpha if self.kind == "family" else 0.0

    @property
    def operator_order(self) -> int:
        return 2 * self.audit_k + 2

    def check_audit_hypothesis(self, n: int) -> bool:
        """Warn when the uniqueness hypothesis ``alpha > -1/(2(n-1))`` fails."""
        ok = self.audit_alpha > -1.0 / (2.0 * (n - 1))
        if not ok:
            warnings.warn(
                f"alpha = {self.audit_alpha} is outside the admissible range for n = {n}",
                stacklevel=2,
            )
        return ok


def ricci_rhs(g: MetricField) -> TensorField:
    return curvature(g).Rc * (-2.0)


def rm_norm_sq(g: MetricField) -> TensorField:
    """``|Rm|^2`` with all eight indices contracted by the inverse metric."""
    R = curvature(g).Rm.data
    gi = g.inverse.data
    Ru = np.einsum("...ia,...jb,...kc,...ld,...abcd->...ijkl", gi, gi, gi, gi, R, optimize=True)
    return TensorField(g.grid, np.einsum("...ijkl,...ijkl->...", Ru, R), "")


def l2_quadratics(g: MetricField) -> TensorField:
    """``2 R^pq R_ipqj - 2 R_i^p R_pj + R_i^pqr R_jpqr - |Rm|^2 g / 4``.

    The Ricci-square coefficient is 2: with it the flow is the L^2 gradient
    flow of ``int |Rm|^2`` (checked against a finite-difference oracle).
    """
    cb = curvature(g)
    gi = g.inverse.data
    R, Rc = cb.Rm.data, cb.Rc.data
    Rc_up = np.einsum("...pa,...qb,...ab->...pq", gi, gi, Rc)
    t1 = np.einsum("...pq,...ipqj->...ij", Rc_up, R)
    t2 = np.einsum("...ia,...ap,...pj->...ij", Rc, gi, Rc)
    R_up = np.einsum("...ijkl,...pj,...qk,...rl->...ipqr", R, gi, gi, gi, optimize=True)
    t3 = np.einsum("...ipqr,...jpqr->...ij", R_up, R)
    norm = rm_norm_sq(g).data
    out = 2.0 * t1 - 2.0 * t2 + t3 - 0.25 * norm[..., None, None] * g.data
    out = 0.5 * (out + np.swapaxes(out, -1, -2))
    return TensorField(g.grid, out, "dd")


def l2_rhs(g: MetricField) -> TensorField:
    return obstruction_leading(g, 1, 0.0, -0.5) + l2_quadratics(g)


def family_rhs(g: MetricField, spec: FlowSpec) -> TensorField:
    if spec.kind != "family":
        raise ValueError("family_rhs needs a family FlowSpec")
    out = obstruction_leading(g, spec.k, spec.alpha, spec.beta)
    if spec.lambda_preset == "l2_quadratics":
        out = out + l2_quadratics(g)
    return out


@dataclass(frozen=True, eq=False)
class XcfAlgebra:
    E: TensorField
    E_raised: TensorField
    V: TensorField
    P: TensorField
    X: TensorField
    X_alt: TensorField
    sigma: int
    lambda_margin: float
    ellipticity: float
    discrepancy: float


def _adjugate3(M: np.ndarray) -> np.ndarray:
    cof = np.empty_like(M)
    for i in range(3):
        for j in range(3):
            i1, i2, j1, j2 = (i + 1) % 3, (i + 2) % 3, (j + 1) % 3, (j + 2) % 3
            cof[..., i, j] = M[..., i1, j1] * M[..., i2, j2] - M[..., i1, j2] * M[..., i2, j1]
    return np.swapaxes(cof, -1, -2)


def _x_contracted(g: MetricField) -> np.ndarray:
    cb = curvature(g)
    gi = g.inverse.data
    Eup = np.einsum("...pa,...qb,...ab->...pq", gi, gi, cb.E.data)
    return -0.5 * np.einsum("...pq,...pijq->...ij", Eup, cb.Rm.data), Eup


def cross_curvature_defect(g: MetricField) -> float:
    """Max-abs gap between ``P V`` (via the adjugate, no inversion) and ``-E^pq R_pijq / 2``."""
    if g.grid.dim != 3:
        raise ValueError("the cross-curvature tensor is defined in dimension 3")
    Xc, Eup = _x_contracted(g)
    PV = g.det[..., None, None] * _adjugate3(Eup)
    return float(np.max(np.abs(PV - Xc)))


def _einstein_eigs(E: np.ndarray, g: MetricField) -> np.ndarray:
    # generalized eigenvalues of E relative to g
    L = np.linalg.cholesky(g.data)
    Li = np.linalg.inv(L)
    return np.linalg.eigvalsh(Li @ E @ np.swapaxes(Li, -1, -2))


def xcf_algebra(g: MetricField, sigma: int | None = None) -> XcfAlgebra:
    if g.grid.dim != 3:
        raise ValueError("the cross-curvature tensor is defined in dimension 3")
    cb = curvature(g)
    Xc, Eup = _x_contracted(g)
    detE = np.linalg.det(cb.E.data)
    P = detE / g.det
    if np.any(np.abs(P) < 1e-12) or not np.all(np.isfinite(P)):
        bad = np.abs(P) < 1e-12
        node = tuple(int(i) for i in np.argwhere(bad)[0]) if bad.ndim else ()
        raise NonInvertibleEinstein(f"Einstein tensor is not invertible at node {node}", node=node)
    V = np.linalg.inv(Eup)
    V = 0.5 * (V + np.swapaxes(V, -1, -2))
    X = P[..., None, None] * V
    eig = _einstein_eigs(cb.E.data, g)
    if sigma is None:
        sigma = 1 if np.all(eig < 0) else -1
    adj = -sigma * eig
    margin = float(np.min(adj))
    ellipticity = min(margin, 1.0 / float(np.max(adj))) if margin > 0 else margin
    grid = g.grid
    return XcfAlgebra(
        E=cb.E,
        E_raised=TensorField(grid, Eup, "uu"),
        V=TensorField(grid, V, "dd"),
        P=TensorField(grid, P, ""),
        X=TensorField(grid, X, "dd"),
        X_alt=TensorField(grid, Xc, "dd"),
        sigma=sigma,
        lambda_margin=margin,
        ellipticity=ellipticity,
        discrepancy=float(np.max(np.abs(X - Xc))),
    )


def xcf_rhs(g: MetricField, sigma: int = 1, lambda_min: float = 0.0) -> TensorField:
    """``-2 sigma X``; requires ``sigma E`` negative definite with margin above ``lambda_min``."""
    if sigma not in (1, -1):
        raise ValueError("sigma must be +1 or -1")
    if g.grid.dim != 3:
        raise ValueError("the cross-curvature flow is defined in dimension 3")
    eig = sigma * _einstein_eigs(curvature(g).E.data, g)
    worst = eig[..., -1]
    if np.max(worst) >= -lambda_min:
        idx = int(np.argmax(worst))
        node = np.unravel_index(idx, worst.shape) if worst.ndim else ()
        raise DefinitenessViolated(
            f"sigma*E is not negative definite at node {node} (eigenvalue {float(np.max(worst)):.3e})",
            node=node,
            eigenvalue=float(np.max(worst)),
        )
    alg = xcf_algebra(g, sigma)
    return alg.X * (-2.0 * sigma)


def curvature_functional(g: MetricField) -> float:
    """``int |Rm|^2 dmu``."""
    return integrate(rm_norm_sq(g), g)


def flow_rhs(g: MetricField, spec: FlowSpec) -> TensorField:
    if spec.kind == "ricci":
        return ricci_rhs(g)
    if spec.kind == "l2":
        return l2_rhs(g)
    if spec.kind == "family":
        return family_rhs(g, spec)
    return xcf_rhs(g, spec.sigma)


def gradient_constants(g: MetricField, directions, s: float = 1e-4) -> np.ndarray:
    """Fitted ``c`` in ``dF_g(h) = -c (l2_rhs(g), h)`` for each direction ``h``.

    ``F = int |Rm|^2``; the directional derivative is a central difference in
    ``s``.  A gradient flow gives the same ``c`` for every direction.
    """
    rhs = l2_rhs(g)
    out = []
    for h in directions:
        plus = MetricField(g.grid, g.data + s * h.data)
        minus = MetricField(g.grid, g.data - s * h.data)
        dF = (curvature_functional(plus) - curvature_functional(minus)) / (2.0 * s)
        out.append(-dF / l2_inner(rhs, h, g))
    return np.array(out)


__all__ += ["gradient_constants"]
