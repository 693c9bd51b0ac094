"""Registered identity checks over a built-in corpus of metrics.

Each check returns one or more records (see ``tensor_calc.identity_record``).
Exact identities are gated on a roundoff tolerance; discretization-limited ones
are gated on their refinement ratio, which must lie within 20% of
``2**fd_order`` when the grid spacing halves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import corpus
from .flows import FlowSpec, cross_curvature_defect, gradient_constants, xcf_algebra, xcf_rhs
from .grid import ChartGrid, MetricField, TensorField
from .homogeneous import PRESETS, FrameMetric, berger, frame_curvature
from .runtime import evolution_identity_check, identity_orders, run_flow
from .tensor_calc import (
    commutator_defect,
    contracted_bianchi_defect,
    curvature,
    einstein_divergence_defect,
    first_bianchi_defect,
    ibp_defect,
    identity_record,
    lie_derivative,
    linearized_riemann,
    metric_compatibility_defect,
    riemann,
    riemann_symmetry_defect,
)

__all__ = ["Check", "REGISTRY", "run_identities", "scopes"]

TWO_PI = 2.0 * math.pi
EXACT_TOL = 1e-11
RATIO_SLACK = 0.2


@dataclass(frozen=True)
class Check:
    name: str
    scopes: tuple[str, ...]
    run: Callable[["Context"], list]


@dataclass
class Context:
    fd_order: int = 4
    corrupt: bool = False
    seed: int = 0

    def __post_init__(self):
        self._cache = {}

    def metric3(self, n: int) -> MetricField:
        key = ("m3", n)
        if key not in self._cache:
            grid = ChartGrid.cube(3, n, TWO_PI, self.fd_order)
            self._cache[key] = corpus.perturbed(grid, 0.1, self.seed)
        return self._cache[key]

    def metric2(self, n: int) -> MetricField:
        key = ("m2", n)
        if key not in self._cache:
            self._cache[key] = corpus.conformal(ChartGrid.cube(2, n, TWO_PI, self.fd_order), 0.1)
        return self._cache[key]

    def rm(self, g: MetricField) -> TensorField:
        Rm = curvature(g).Rm
        # negative control: a wrong slot convention R_ikjl
        return Rm.transpose(0, 2, 1, 3) if self.corrupt else Rm


def _refinement(check: str, grids, defects, fd_order: int, **extra) -> dict:
    ratio = defects[0] / defects[1] if defects[1] > 0 else math.inf
    target = 2.0**fd_order
    ok = math.isfinite(ratio) and abs(ratio / target - 1.0) <= RATIO_SLACK
    rec = identity_record(check, grids[-1], defects[-1], defects[0], kind="refinement",
                          defects=[float(d) for d in defects], ratio=float(ratio), expected_ratio=target, **extra)
    rec["pass"] = bool(ok)
    return rec


def _exact(check: str, grid, defect: float, tol: float = EXACT_TOL, **extra) -> dict:
    return identity_record(check, grid, defect, tol, kind="exact", **extra)


# --- checks ---------------------------------------------------------------------


def _symmetry(ctx: Context):
    out = []
    for g in (ctx.metric2(16), ctx.metric3(16)):
        out.append(_exact("riemann_symmetry", g.grid, riemann_symmetry_defect(ctx.rm(g))))
    return out


def _first_bianchi(ctx: Context):
    return [_exact("first_bianchi", g.grid, first_bianchi_defect(ctx.rm(g))) for g in (ctx.metric2(16), ctx.metric3(16))]


def _refine3(ctx: Context, name: str, f) -> dict:
    gs = [ctx.metric3(16), ctx.metric3(32)]
    return _refinement(name, [g.grid for g in gs], [f(g) for g in gs], ctx.fd_order)


def _contracted_bianchi(ctx: Context):
    return [_refine3(ctx, "contracted_bianchi", contracted_bianchi_defect)]


def _einstein_divergence(ctx: Context):
    return [_refine3(ctx, "einstein_divergence", einstein_divergence_defect)]


def _commutator(ctx: Context):
    def f(g):
        W = corpus.smooth_vector(g.grid, ctx.seed + 1)
        return commutator_defect(W, g)

    return [_refine3(ctx, "commutator", f)]


def _compatibility(ctx: Context):
    return [_exact("metric_compatibility", g.grid, metric_compatibility_defect(g)) for g in (ctx.metric2(16), ctx.metric3(16))]


def _ibp(ctx: Context):
    def f(g):
        return ibp_defect(corpus.smooth_symmetric(g.grid, ctx.seed + 2), g)

    gs = [ctx.metric2(32), ctx.metric2(64)]
    return [_refinement("ibp_base_case", [g.grid for g in gs], [f(g) for g in gs], ctx.fd_order)]


def _linearization(ctx: Context):
    def lin(g):
        h = corpus.smooth_symmetric(g.grid, ctx.seed + 3)
        s = 1e-4
        fd = (riemann(MetricField(g.grid, g.data + s * h.data)).data
              - riemann(MetricField(g.grid, g.data - s * h.data)).data) / (2.0 * s)
        return float(np.max(np.abs(linearized_riemann(g, h).data - fd)))

    def cov(g):
        X = corpus.smooth_vector(g.grid, ctx.seed + 4)
        Lg = lie_derivative(g, X, g).symmetrized()
        return float(np.max(np.abs(linearized_riemann(g, Lg).data - lie_derivative(curvature(g).Rm, X, g).data)))

    return [_refine3(ctx, "linearization", lin), _refine3(ctx, "diffeo_covariance", cov)]


def _xcf_frames(ctx: Context):
    out = []
    rng = np.random.default_rng(ctx.seed)
    for _ in range(4):
        F = berger(*(1.0 + 0.1 * rng.uniform(-1, 1, 3)))
        g = F.to_metric()
        out.append(_exact("cross_curvature_berger", g.grid, cross_curvature_defect(g), coeffs=list(F.coeffs)))
    g = berger().to_metric()
    alg = xcf_algebra(g, 1)
    I = np.eye(3)
    d = max(
        float(np.max(np.abs(xcf_rhs(g, 1).data + 2.0 * I))),
        float(np.max(np.abs(alg.E.data + I))),
        float(np.max(np.abs(alg.V.data + I))),
        abs(float(alg.P.data) + 1.0),
        float(np.max(np.abs(alg.X.data - I))),
    )
    out.append(_exact("xcf_space_form", g.grid, d, 1e-10))
    return out


def _xcf_grid(ctx: Context):
    # metric varying in x, y only, so refining those axes is enough
    def build(n):
        grid = ChartGrid((n, n, 8), (TWO_PI,) * 3, ctx.fd_order)
        x, y, _ = grid.coords()
        d = np.zeros(grid.shape + (3, 3))
        d[...] = np.diag([1.0, 1.0, 1.0])
        d[..., 0, 0] += 0.2 * np.cos(y)
        d[..., 1, 1] += 0.2 * np.sin(x)
        d[..., 2, 2] += 0.3 * np.cos(x + y)
        d[..., 0, 2] = d[..., 2, 0] = 0.1 * np.sin(y)
        return MetricField(grid, d)

    gs = [build(n) for n in (16, 32, 64)]
    out = [_exact("cross_curvature_grid", gs[-1].grid, max(cross_curvature_defect(g) for g in gs), 1e-10)]
    X = [xcf_algebra(g).X_alt.data for g in gs]
    d1 = float(np.max(np.abs(X[0] - X[1][::2, ::2])))
    d2 = float(np.max(np.abs(X[1] - X[2][::2, ::2])))
    out.append(_refinement("cross_curvature_grid_convergence", [g.grid for g in gs[1:]], [d1, d2], ctx.fd_order))
    return out


def _frames(ctx: Context):
    out = []
    for name, st in PRESETS.items():
        F = FrameMetric((1.0, 1.3, 0.8), st)
        cb = curvature(F.to_metric())
        fc = frame_curvature(F)
        d = max(float(np.max(np.abs(np.diag(cb.Rc.data) - fc.ricci))), abs(float(cb.S.data) - fc.scalar),
                float(np.max(np.abs(cb.Rc.data - np.diag(np.diag(cb.Rc.data))))))
        out.append(_exact(f"milnor_{name}", F.grid, d, 1e-12))
    return out


def _evolution(ctx: Context):
    out = []
    spec = FlowSpec("xcf")
    F = berger(1.0, 1.1, 0.95)
    trajs = [run_flow(F, spec, 0.03, sample_every=se, dt=1e-4) for se in (40, 20, 10)]
    for which in ("xconnev", "xvev", "einstein_ev"):
        reps = [evolution_identity_check(t, which, at=0.02) for t in trajs]
        order = identity_orders(reps)[-1]
        rec = identity_record(f"{which}_frame", F.grid, reps[-1]["defect"], reps[0]["defect"], kind="time_refinement",
                              defects=[r["defect"] for r in reps], observed_order=order, expected_order=2)
        rec["pass"] = bool(abs(order - 2.0) <= 0.2 * 2.0)
        out.append(rec)
    g0 = corpus.conformal(ChartGrid.cube(2, 16, TWO_PI, ctx.fd_order), 0.1)
    trajs = [run_flow(g0, FlowSpec("ricci"), 0.02, sample_every=se, dt=2.5e-4) for se in (16, 8, 4)]
    reps = [evolution_identity_check(t, "christoffel_ev", at=0.01) for t in trajs]
    order = identity_orders(reps)[-1]
    rec = identity_record("christoffel_ev_grid", g0.grid, reps[-1]["defect"], reps[0]["defect"], kind="time_refinement",
                          defects=[r["defect"] for r in reps], observed_order=order, expected_order=2)
    rec["pass"] = bool(abs(order - 2.0) <= 0.2 * 2.0)
    out.append(rec)
    return out


def _gradient(ctx: Context):
    g = corpus.conformal(ChartGrid.cube(2, 32, TWO_PI, ctx.fd_order), 0.05)
    c = gradient_constants(g, [corpus.smooth_symmetric(g.grid, ctx.seed + s) for s in range(10)])
    spread = float((c.max() - c.min()) / abs(c.mean()))
    return [identity_record("l2_gradient_consistency", g.grid, spread, 0.01, kind="spread", c_mean=float(c.mean()))]


REGISTRY = [
    Check("riemann_symmetry", ("symmetry", "riemann"), _symmetry),
    Check("first_bianchi", ("bianchi", "riemann"), _first_bianchi),
    Check("contracted_bianchi", ("bianchi",), _contracted_bianchi),
    Check("einstein_divergence", ("bianchi", "divergence"), _einstein_divergence),
    Check("commutator", ("commutator",), _commutator),
    Check("metric_compatibility", ("compatibility",), _compatibility),
    Check("ibp_base_case", ("ibp",), _ibp),
    Check("linearization", ("linearization",), _linearization),
    Check("cross_curvature_frames", ("xcf", "frames"), _xcf_frames),
    Check("cross_curvature_grid", ("xcf",), _xcf_grid),
    Check("milnor_frames", ("frames",), _frames),
    Check("evolution", ("evolution",), _evolution),
    Check("l2_gradient", ("flows",), _gradient),
]


def scopes() -> list[str]:
    return sorted({s for c in REGISTRY for s in c.scopes} | {c.name for c in REGISTRY} | {"all"})


def run_identities(scope: str = "all", corrupt_convention: bool = False, fd_order: int = 4, seed: int = 0) -> list[dict]:
    if scope not in scopes():
        raise ValueError(f"unknown scope {scope!r}; choose from {', '.join(scopes())}")
    ctx = Context(fd_order, corrupt_convention, seed)
    records = []
    for check in REGISTRY:
        if scope == "all" or scope == check.name or scope in check.scopes:
            for rec in check.run(ctx):
                rec["group"] = check.name
                records.append(rec)
    return records
