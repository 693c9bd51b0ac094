"""Levi-Civita calculus on chart and frame geometries.

Convention sheet (every identity test pins these):

* ``nabla_{e_a} e_b = Gamma^c_ab e_c``; ``Connection.gamma[..., c, a, b] = Gamma^c_ab`` and
  ``Connection.first[..., a, b, c] = g(nabla_a e_b, e_c)``.
* ``R(X, Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z`` and
  ``R_ijkl = g(R(e_i, e_j) e_k, e_l)``, so sectional curvature is ``R_ijji``.
* ``Rc_jk = g^il R_ijkl``; the unit round S^3 has ``Rc = 2g`` and ``S = +6``.
* ``(b (.) g)_abcd = b_ad g_bc + b_bc g_ad - b_ac g_bd - b_bd g_ac``; a space form of
  curvature ``kappa`` has ``Rm = (kappa / 2) g (.) g``.
* Derivative slots are prepended: ``hessian(T)[..., a, b, I] = nabla_a nabla_b T_I``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import GridMismatch, RankMismatch
from .grid import MetricField, TensorField, integrate, l2_inner, l2_norm_sq

__all__ = [
    "Connection",
    "CurvatureBundle",
    "christoffel",
    "covariant_derivative",
    "hessian",
    "laplacian",
    "laplacian_iter",
    "riemann",
    "riemann_general",
    "ricci",
    "scalar_curv",
    "einstein",
    "schouten",
    "weyl",
    "curvature",
    "kulkarni_nomizu",
    "bach",
    "obstruction_leading",
    "lie_derivative",
    "linearized_riemann",
    "curvature_action",
    "commutator_defect",
    "divergence",
    "identity_record",
]


@dataclass(frozen=True, eq=False)
class Connection:
    g: MetricField
    gamma: TensorField  # 'udd'
    first: TensorField  # 'ddd'

    @property
    def grid(self):
        return self.g.grid


def _stack_partials(T: TensorField) -> np.ndarray:
    nn = len(T.grid.shape)
    return np.stack([T.grid.diff(T.data, a) for a in range(T.grid.dim)], axis=nn)


def christoffel(g: MetricField) -> Connection:
    cached = g.__dict__.get("_connection")
    if cached is not None:
        return cached
    dg = _stack_partials(g)  # dg[a, b, c] = d_a g_bc
    first = 0.5 * (dg + np.einsum("...bac->...abc", dg) - np.einsum("...cab->...abc", dg))
    if g.grid.is_frame:
        # Koszul formula with constant components: 2 G_abc = C_abc - C_bca + C_cab
        Cl = np.einsum("eab,...ec->...abc", g.grid.structure_constants, g.data)
        first = first + 0.5 * (Cl - np.einsum("...bca->...abc", Cl) + np.einsum("...cab->...abc", Cl))
    gamma = np.einsum("...kc,...abc->...kab", g.inverse.data, first)
    conn = Connection(g, TensorField(g.grid, gamma, "udd"), TensorField(g.grid, first, "ddd"))
    g.__dict__["_connection"] = conn
    return conn


def _as_connection(c) -> Connection:
    return christoffel(c) if isinstance(c, MetricField) else c


def covariant_derivative(T: TensorField, conn) -> TensorField:
    """``nabla T`` with the new covariant slot first."""
    conn = _as_connection(conn)
    if T.grid != conn.grid:
        raise GridMismatch("tensor and connection live on different grids")
    G = conn.gamma.data
    n = T.grid.dim
    nn = len(T.grid.shape)
    out = _stack_partials(T)
    for s, kind in enumerate(T.index):
        Tm = np.moveaxis(T.data, nn + s, -1)
        rest = Tm.shape[nn:-1]
        Tm = Tm.reshape(Tm.shape[:nn] + (-1, n))
        if kind == "d":
            corr = -np.einsum("...mp,...pai->...ami", Tm, G)
        else:
            corr = np.einsum("...mp,...iap->...ami", Tm, G)
        corr = corr.reshape(corr.shape[:nn] + (n,) + rest + (n,))
        out = out + np.moveaxis(corr, -1, nn + 1 + s)
    return TensorField(T.grid, out, "d" + T.index)


def hessian(T: TensorField, conn) -> TensorField:
    conn = _as_connection(conn)
    return covariant_derivative(covariant_derivative(T, conn), conn)


def laplacian(T: TensorField, g: MetricField) -> TensorField:
    """Rough Laplacian ``g^ab nabla_a nabla_b T``."""
    H = hessian(T, g).data
    nn = len(T.grid.shape)
    flat = H.reshape(H.shape[: nn + 2] + (-1,))
    out = np.einsum("...ab,...abm->...m", g.inverse.data, flat)
    return TensorField(T.grid, out.reshape(T.data.shape), T.index)


def laplacian_iter(T: TensorField, g: MetricField, k: int) -> TensorField:
    if k < 0:
        raise ValueError("k must be non-negative")
    for _ in range(k):
        T = laplacian(T, g)
    return T


def riemann_general(g: MetricField) -> TensorField:
    """Frame-general curvature: ``R_abc^d = e_a G^d_bc - e_b G^d_ac + G^e_bc G^d_ae - G^e_ac G^d_be - C^e_ab G^d_ec``."""
    conn = christoffel(g)
    G = conn.gamma.data
    dG = _stack_partials(conn.gamma)  # dG[a, d, b, c] = e_a G^d_bc
    R = (
        np.einsum("...adbc->...abcd", dG)
        - np.einsum("...bdac->...abcd", dG)
        + np.einsum("...ebc,...dae->...abcd", G, G)
        - np.einsum("...eac,...dbe->...abcd", G, G)
    )
    if g.grid.is_frame:
        R = R - np.einsum("eab,...dec->...abcd", g.grid.structure_constants, G)
    return TensorField(g.grid, np.einsum("...abcm,...md->...abcd", R, g.data), "dddd")


def riemann(g: MetricField) -> TensorField:
    """(4,0)-curvature; on chart grids the second-derivative form keeps the algebraic symmetries exact."""
    if g.grid.is_frame:
        return riemann_general(g)
    conn = christoffel(g)
    nn = len(g.grid.shape)
    dg = _stack_partials(g)
    ddg = np.stack([g.grid.diff(dg, b) for b in range(g.grid.dim)], axis=nn)  # ddg[b, a, c, d]
    second = -0.5 * (
        np.einsum("...iljk->...ijkl", ddg)
        + np.einsum("...jkil->...ijkl", ddg)
        - np.einsum("...jlik->...ijkl", ddg)
        - np.einsum("...ikjl->...ijkl", ddg)
    )
    F, G = conn.first.data, conn.gamma.data
    quad = np.einsum("...jlm,...mik->...ijkl", F, G) - np.einsum("...ilm,...mjk->...ijkl", F, G)
    return TensorField(g.grid, second + quad, "dddd")


def _ricci_from(Rm: TensorField, g: MetricField) -> TensorField:
    Rc = np.einsum("...il,...ijkl->...jk", g.inverse.data, Rm.data)
    return TensorField(g.grid, 0.5 * (Rc + np.swapaxes(Rc, -1, -2)), "dd")


def _scalar_from(Rc: TensorField, g: MetricField) -> TensorField:
    return TensorField(g.grid, np.einsum("...jk,...jk->...", g.inverse.data, Rc.data), "")


def kulkarni_nomizu(b: TensorField, g: TensorField) -> TensorField:
    if b.index != "dd" or g.index != "dd":
        raise RankMismatch("Kulkarni-Nomizu product takes two covariant 2-tensors")
    if b.grid != g.grid:
        raise GridMismatch("factors live on different grids")
    scale = max(b.max_abs(), 1e-300)
    if b.symmetry_defect(0, 1) > 1e-12 * scale:
        raise ValueError("Kulkarni-Nomizu product requires a symmetric first factor")
    B, Gm = b.data, g.data
    out = (
        np.einsum("...ad,...bc->...abcd", B, Gm)
        + np.einsum("...bc,...ad->...abcd", B, Gm)
        - np.einsum("...ac,...bd->...abcd", B, Gm)
        - np.einsum("...bd,...ac->...abcd", B, Gm)
    )
    return TensorField(b.grid, out, "dddd")


@dataclass(frozen=True, eq=False)
class CurvatureBundle:
    g: MetricField
    conn: Connection
    Rm: TensorField
    Rc: TensorField
    S: TensorField
    E: TensorField
    schouten: Optional[TensorField]
    weyl: Optional[TensorField]


def curvature(g: MetricField) -> CurvatureBundle:
    """Curvature package of ``g``, computed once and cached on the metric."""
    cached = g.__dict__.get("_curvature")
    if cached is not None:
        return cached
    conn = christoffel(g)
    Rm = riemann(g)
    Rc = _ricci_from(Rm, g)
    S = _scalar_from(Rc, g)
    E = Rc - g * (S * 0.5)
    n = g.grid.dim
    P = W = None
    if n >= 3:
        P = (Rc - g * (S * (1.0 / (2.0 * (n - 1))))) / (n - 2)
        W = Rm - kulkarni_nomizu(P.symmetrized(), g)
    bundle = CurvatureBundle(g, conn, Rm, Rc, S, E, P, W)
    g.__dict__["_curvature"] = bundle
    return bundle


def ricci(g: MetricField) -> TensorField:
    return curvature(g).Rc


def scalar_curv(g: MetricField) -> TensorField:
    return curvature(g).S


def einstein(g: MetricField) -> TensorField:
    return curvature(g).E


def schouten(g: MetricField) -> TensorField:
    if g.grid.dim < 3:
        raise ValueError("the Schouten tensor needs dimension >= 3")
    return curvature(g).schouten


def weyl(g: MetricField) -> TensorField:
    if g.grid.dim < 3:
        raise ValueError("the Weyl tensor needs dimension >= 3")
    return curvature(g).weyl


def bach(g: MetricField) -> TensorField:
    """Bach tensor ``Delta P - nabla nabla tr P - 2 P^kl W_kijl + |P|^2 g - 4 P^2`` in dimension four."""
    if g.grid.dim != 4:
        raise ValueError("the Bach tensor is implemented in dimension 4 only")
    cb = curvature(g)
    P = cb.schouten
    ginv = g.inverse.data
    trP = TensorField(g.grid, np.einsum("...ij,...ij->...", ginv, P.data), "")
    Praised = np.einsum("...ka,...lb,...ab->...kl", ginv, ginv, P.data)
    PW = np.einsum("...kl,...kijl->...ij", Praised, cb.weyl.data)
    Psq = np.einsum("...ik,...kl,...lj->...ij", P.data, ginv, P.data)
    normP = np.einsum("...kl,...kl->...", Praised, P.data)
    out = (
        laplacian(P, g).data
        - hessian(trP, g).data
        - 2.0 * PW
        + normP[..., None, None] * g.data
        - 4.0 * Psq
    )
    return TensorField(g.grid, out, "dd")


def obstruction_leading(g: MetricField, k: int, alpha: float, beta: float) -> TensorField:
    """``(-1)^(k+1) 2 (Delta^k Rc + alpha (Delta^k S) g + beta Delta^(k-1) nabla nabla S)``."""
    if k < 0:
        raise ValueError("k must be non-negative")
    if k == 0 and beta != 0.0:
        raise ValueError("k = 0 requires beta = 0")
    cb = curvature(g)
    out = laplacian_iter(cb.Rc, g, k)
    if alpha != 0.0:
        out = out + g * (laplacian_iter(cb.S, g, k) * alpha)
    if beta != 0.0:
        out = out + laplacian_iter(hessian(cb.S, g), g, k - 1) * beta
    return out * ((-1.0) ** (k + 1) * 2.0)


def lie_derivative(T: TensorField, X: TensorField, g: MetricField) -> TensorField:
    """``L_X T`` through the (torsion-free) Levi-Civita connection of ``g``."""
    if X.index != "u":
        raise RankMismatch("the Lie derivative takes a vector field")
    if T.grid != X.grid or T.grid != g.grid:
        raise GridMismatch("fields live on different grids")
    conn = christoffel(g)
    nn = len(T.grid.shape)
    n = T.grid.dim
    out = np.einsum("...a,...aM->...M", X.data, covariant_derivative(T, conn).data.reshape(
        T.data.shape[:nn] + (n, -1))).reshape(T.data.shape)
    DX = covariant_derivative(X, conn).data  # DX[i, a] = nabla_i X^a
    for s, kind in enumerate(T.index):
        Tm = np.moveaxis(T.data, nn + s, -1)
        shp = Tm.shape
        Tm = Tm.reshape(shp[:nn] + (-1, n))
        if kind == "d":
            term = np.einsum("...ma,...ia->...mi", Tm, DX)
        else:
            term = -np.einsum("...ma,...ai->...mi", Tm, DX)
        out = out + np.moveaxis(term.reshape(shp), -1, nn + s)
    return TensorField(T.grid, out, T.index)


def linearized_riemann(g: MetricField, h: TensorField) -> TensorField:
    """``DR_g[h]``: second-derivative part plus ``(R * h)_ijkl = (R_ijk^m h_ml - R_ijl^m h_mk) / 2``."""
    if h.index != "dd":
        raise RankMismatch("direction must be a covariant 2-tensor")
    scale = max(h.max_abs(), 1e-300)
    if h.symmetry_defect(0, 1) > 1e-12 * scale:
        raise ValueError("direction must be symmetric")
    H = hessian(h, g).data  # H[a, b, j, k] = nabla_a nabla_b h_jk
    second = -0.5 * (
        np.einsum("...iljk->...ijkl", H)
        + np.einsum("...jkil->...ijkl", H)
        - np.einsum("...ikjl->...ijkl", H)
        - np.einsum("...jlik->...ijkl", H)
    )
    R = curvature(g).Rm.data
    Hm = np.einsum("...pm,...ml->...pl", g.inverse.data, h.data)
    rh = 0.5 * (np.einsum("...ijkp,...pl->...ijkl", R, Hm) - np.einsum("...ijlp,...pk->...ijkl", R, Hm))
    return TensorField(g.grid, second + rh, "dddd")


def curvature_action(W: TensorField, g: MetricField) -> TensorField:
    """``(R(e_a, e_b) W)`` with slots ``(a, b) + W.index``."""
    R = curvature(g).Rm.data
    R13 = np.einsum("...abcp,...pd->...abcd", R, g.inverse.data)  # R_abc^d
    nn = len(W.grid.shape)
    n = W.grid.dim
    out = np.zeros(W.data.shape[:nn] + (n, n) + W.data.shape[nn:])
    for s, kind in enumerate(W.index):
        Wm = np.moveaxis(W.data, nn + s, -1)
        shp = Wm.shape
        Wm = Wm.reshape(shp[:nn] + (-1, n))
        if kind == "u":
            term = np.einsum("...abmc,...Mm->...abMc", R13, Wm)
        else:
            term = -np.einsum("...abcm,...Mm->...abMc", R13, Wm)
        term = term.reshape(shp[:nn] + (n, n) + shp[nn:])
        out = out + np.moveaxis(term, -1, nn + 2 + s)
    return TensorField(W.grid, out, "dd" + W.index)


def commutator_defect(W: TensorField, g: MetricField) -> float:
    """Max-abs of ``[nabla_a, nabla_b] W - R(e_a, e_b) W`` over nodes and components."""
    if W.order > 2 or W.rank[0] > 1 or W.rank[1] > 1:
        raise RankMismatch("commutator check supports ranks up to (1,1)")
    H = hessian(W, g)
    comm = H.data - H.transpose(1, 0, *range(2, H.order)).data
    return float(np.max(np.abs(comm - curvature_action(W, g).data)))


def divergence(T: TensorField, g: MetricField, slot: int = 0) -> TensorField:
    """``nabla_a T^{..a..}`` on index ``slot`` (covariant slots are raised first)."""
    if T.order == 0:
        raise RankMismatch("divergence of a scalar is undefined")
    if T.index[slot] == "d":
        T = g.raise_slot(T, slot)
    D = covariant_derivative(T, g)
    nn = len(T.grid.shape)
    data = np.trace(D.data, axis1=nn, axis2=nn + 1 + slot)
    return TensorField(T.grid, data, T.index[:slot] + T.index[slot + 1:])


# --- identity defects ---------------------------------------------------------


def riemann_symmetry_defect(Rm: TensorField) -> float:
    """Relative defect of the algebraic symmetries and first Bianchi identity."""
    scale = max(Rm.max_abs(), 1e-300)
    d = max(
        Rm.symmetry_defect(0, 1, anti=True),
        Rm.symmetry_defect(2, 3, anti=True),
        float(np.max(np.abs(Rm.data - Rm.transpose(2, 3, 0, 1).data))),
    )
    return d / scale


def first_bianchi_defect(Rm: TensorField) -> float:
    scale = max(Rm.max_abs(), 1e-300)
    cyc = Rm.data + Rm.transpose(1, 2, 0, 3).data + Rm.transpose(2, 0, 1, 3).data
    return float(np.max(np.abs(cyc))) / scale


def contracted_bianchi_defect(g: MetricField) -> float:
    """Max-abs of ``div Rc - dS / 2``."""
    cb = curvature(g)
    divRc = divergence(cb.Rc, g).data
    dS = covariant_derivative(cb.S, g).data
    return float(np.max(np.abs(divRc - 0.5 * dS)))


def metric_compatibility_defect(g: MetricField) -> float:
    return covariant_derivative(g, g).max_abs()


def einstein_divergence_defect(g: MetricField) -> float:
    E = curvature(g).E
    Eup = g.all_raised(E)
    return divergence(Eup, g).max_abs()


def ibp_defect(W: TensorField, g: MetricField) -> float:
    """``|(Delta W, W) + ||nabla W||^2|``."""
    return abs(l2_inner(laplacian(W, g), W, g) + l2_norm_sq(covariant_derivative(W, g), g))


def identity_record(check: str, grid, defect: float, tolerance: float, **extra) -> dict:
    rec = {
        "check": check,
        "grid": list(grid.extents) if not grid.is_frame else {"frame": list(grid.structure)},
        "fd_order": grid.fd_order,
        "defect": float(defect),
        "tolerance": float(tolerance),
        "pass": bool(np.isfinite(defect) and defect <= tolerance),
    }
    rec.update(extra)
    return rec


def dumps_records(records) -> str:
    return json.dumps(records, indent=2, allow_nan=True)


__all__ += [
    "riemann_symmetry_defect",
    "first_bianchi_defect",
    "contracted_bianchi_defect",
    "metric_compatibility_defect",
    "einstein_divergence_defect",
    "ibp_defect",
    "dumps_records",
    "integrate",
]
