"""Explicit RK4 integration of flows, checkpoints and evolution-identity checks."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import DefinitenessViolated, LostPositivity, NonFinite
from .flows import FlowSpec, flow_rhs, rm_norm_sq, xcf_algebra
from .grid import ChartGrid, FrameGrid, MetricField, TensorField
from .homogeneous import FrameMetric, einstein_margin, frame_curvature, frame_flow_rhs
from .snapshot import read_array, write_field
from .tensor_calc import christoffel, covariant_derivative, curvature, hessian

__all__ = [
    "Trajectory",
    "stable_dt",
    "rk4_step",
    "run_flow",
    "continue_flow",
    "write_checkpoint",
    "load_checkpoint",
    "evolution_identity_check",
    "identity_orders",
    "IDENTITIES",
]

SCHEMA_VERSION = 1
FRAME_DT = 1e-4
IDENTITIES = ("xconnev", "xvev", "christoffel_ev", "einstein_ev")


def stable_dt(grid: ChartGrid, operator_order: int, safety: float) -> float:
    """``safety * min(dx)^order / (4^order * dim)``."""
    if operator_order not in (2, 4, 6):
        raise ValueError(f"unsupported operator order {operator_order}")
    if not 0.0 < safety <= 1.0:
        raise ValueError(f"safety must lie in (0, 1], got {safety}")
    dx = min(grid.spacing)
    return safety * dx**operator_order / (4.0**operator_order * grid.dim)


def _check_state(state: np.ndarray) -> None:
    if not np.all(np.isfinite(state)):
        bad = np.argwhere(~np.isfinite(state))[0]
        raise NonFinite(f"non-finite value at index {tuple(int(i) for i in bad)}")
    if state.ndim >= 2 and state.shape[-1] == state.shape[-2]:
        lam = np.linalg.eigvalsh(state)[..., 0]
        if np.min(lam) <= 0.0:
            node = np.unravel_index(int(np.argmin(lam)), lam.shape) if lam.ndim else ()
            raise LostPositivity(
                f"metric lost positivity at node {node} (eigenvalue {float(np.min(lam)):.3e})",
                node=node,
                eigenvalue=float(np.min(lam)),
            )
    elif np.min(state) <= 0.0:
        i = int(np.argmin(state))
        raise LostPositivity(f"coefficient {i} became {float(state[i]):.3e}", node=(i,), eigenvalue=float(state[i]))


def rk4_step(state: np.ndarray, rhs: Callable[[np.ndarray], np.ndarray], dt: float, k1=None, check: bool = True) -> np.ndarray:
    """One classical RK4 step; ``k1`` may be supplied when already evaluated."""
    k1 = rhs(state) if k1 is None else k1
    k2 = rhs(state + (0.5 * dt) * k1)
    k3 = rhs(state + (0.5 * dt) * k2)
    k4 = rhs(state + dt * k3)
    for k in (k1, k2, k3, k4):
        if not np.all(np.isfinite(k)):
            raise NonFinite("right-hand side produced non-finite values")
    new = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if check:
        _check_state(new)
    return new


@dataclass
class Trajectory:
    spec: FlowSpec
    backend: str
    grid: ChartGrid | FrameGrid
    dt: float
    sample_every: int
    steps: list = field(default_factory=list)
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    status: str = "completed"
    message: str = ""
    curv0: float = math.nan

    def frame(self, i: int) -> FrameMetric:
        if self.backend != "frame":
            raise ValueError("not a frame trajectory")
        return FrameMetric(tuple(self.snapshots[i]), self.grid.structure, self.grid.volume_norm)

    def metric(self, i: int) -> MetricField:
        if self.backend == "frame":
            return self.frame(i).to_metric()
        return MetricField(self.grid, self.snapshots[i])

    def __len__(self) -> int:
        return len(self.times)

    def write_diagnostics(self, path) -> None:
        cols = ["step", "t", "min_eig", "curv_sup", "lambda_margin"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for d in self.diagnostics:
                w.writerow([d["step"]] + [repr(float(d[c])) for c in cols[1:]])


# --- backends -------------------------------------------------------------------


class _GridBackend:
    name = "grid"

    def __init__(self, grid: ChartGrid, spec: FlowSpec):
        self.grid, self.spec = grid, spec

    def rhs(self, state: np.ndarray) -> np.ndarray:
        return flow_rhs(MetricField(self.grid, state, check=False), self.spec).data

    def diagnose(self, state: np.ndarray):
        g = MetricField(self.grid, state)
        margin = math.nan
        if self.spec.kind == "xcf":
            margin = xcf_algebra(g, self.spec.sigma).lambda_margin
        curv = float(np.sqrt(np.max(np.abs(rm_norm_sq(g).data))))
        return g, g.min_eigenvalue(), curv, margin

    def first_stage(self, g) -> np.ndarray:
        return flow_rhs(g, self.spec).data


class _FrameBackend:
    name = "frame"

    def __init__(self, template: FrameMetric, spec: FlowSpec):
        self.template, self.spec = template, spec
        self.grid = template.grid

    def _frame(self, state) -> FrameMetric:
        return FrameMetric(tuple(state), self.template.structure, self.template.volume_norm)

    def rhs(self, state: np.ndarray) -> np.ndarray:
        return frame_flow_rhs(self._frame(state), self.spec)

    def diagnose(self, state: np.ndarray):
        F = self._frame(state)
        r = frame_curvature(F).ricci_orthonormal
        # |Rm|^2 = 4|Rc|^2 - S^2 in dimension three
        curv = math.sqrt(max(4.0 * float(np.sum(r * r)) - float(np.sum(r)) ** 2, 0.0))
        margin = einstein_margin(F, self.spec.sigma) if self.spec.kind == "xcf" else math.nan
        return F, float(np.min(state)), curv, margin

    def first_stage(self, F) -> np.ndarray:
        return frame_flow_rhs(F, self.spec)


def _backend_for(initial, spec: FlowSpec):
    if isinstance(initial, FrameMetric):
        return _FrameBackend(initial, spec), np.array(initial.coeffs, dtype=float)
    if isinstance(initial, MetricField) and initial.grid.is_frame:
        d = initial.data
        if np.max(np.abs(d - np.diag(np.diag(d)))) > 0:
            raise ValueError("the frame backend integrates diagonal metrics")
        F = FrameMetric(tuple(np.diag(d)), initial.grid.structure, initial.grid.volume_norm)
        return _FrameBackend(F, spec), np.diag(d).astype(float)
    if isinstance(initial, MetricField):
        return _GridBackend(initial.grid, spec), np.array(initial.data, dtype=float)
    raise TypeError("initial data must be a MetricField or a FrameMetric")


def _refuse(spec: FlowSpec, backend: str) -> None:
    if spec.kind == "family" and spec.k >= 2:
        raise ValueError("time integration of the k >= 2 obstruction flows is not supported")
    if spec.kind == "xcf" and backend == "grid":
        raise DefinitenessViolated(
            "cross-curvature flow needs sectional curvature of one sign, which no metric on a torus has; "
            "use the frame backend or static_only=True"
        )


def _integrate(traj: Trajectory, backend, state: np.ndarray, step: int, n_total: int, cap: float) -> Trajectory:
    dt = traj.dt
    while True:
        obj, min_eig, curv, margin = backend.diagnose(state)
        t = step * dt
        traj.diagnostics.append({"step": step, "t": t, "min_eig": min_eig, "curv_sup": curv, "lambda_margin": margin})
        if step % traj.sample_every == 0 or step == n_total:
            if not traj.steps or traj.steps[-1] != step:
                traj.steps.append(step)
                traj.times.append(t)
                traj.snapshots.append(state.copy())
        if step >= n_total:
            break
        if cap > 0 and math.isfinite(traj.curv0) and traj.curv0 > 0 and curv > cap * traj.curv0:
            traj.status = "capped"
            traj.message = f"curvature sup-norm grew beyond {cap:g}x its initial value at t = {t!r}"
            _ensure_sampled(traj, step, t, state)
            break
        try:
            k1 = backend.first_stage(obj)
            state = rk4_step(state, backend.rhs, dt, k1=k1)
        except DefinitenessViolated as exc:
            traj.status = "aborted"
            traj.message = str(exc)
            _ensure_sampled(traj, step, t, state)
            break
        step += 1
    return traj


def _ensure_sampled(traj: Trajectory, step: int, t: float, state: np.ndarray) -> None:
    if not traj.steps or traj.steps[-1] != step:
        traj.steps.append(step)
        traj.times.append(t)
        traj.snapshots.append(state.copy())


def run_flow(initial, spec: FlowSpec, t_end: float, sample_every: int = 1, dt: float | None = None,
             safety: float = 0.5, static_only: bool = False, cap: float = 10.0) -> Trajectory:
    """Integrate ``dg/dt = flow_rhs(g)`` from ``initial`` up to ``t_end``.

    ``dt`` defaults to ``stable_dt`` on grids and ``1e-4`` on frames; it is
    shrunk so that a whole number of steps reaches ``t_end``.  Samples are kept
    every ``sample_every`` steps and at the final step.
    """
    backend, state = _backend_for(initial, spec)
    if static_only:
        traj = Trajectory(spec, backend.name, backend.grid, math.nan, 1)
        obj, min_eig, curv, margin = backend.diagnose(state)
        traj.diagnostics.append({"step": 0, "t": 0.0, "min_eig": min_eig, "curv_sup": curv, "lambda_margin": margin})
        traj.steps, traj.times, traj.snapshots = [0], [0.0], [state.copy()]
        traj.curv0, traj.status = curv, "static"
        return traj
    _refuse(spec, backend.name)
    if not (math.isfinite(t_end) and t_end > 0):
        raise ValueError("t_end must be positive")
    if int(sample_every) < 1:
        raise ValueError("sample_every must be a positive integer")
    if dt is None:
        dt = FRAME_DT if backend.name == "frame" else stable_dt(backend.grid, spec.operator_order, safety)
    if not dt > 0:
        raise ValueError("dt must be positive")
    n_total = max(1, int(math.ceil(t_end / dt - 1e-9)))
    dt = t_end / n_total
    traj = Trajectory(spec, backend.name, backend.grid, dt, int(sample_every))
    traj.curv0 = backend.diagnose(state)[2]
    return _integrate(traj, backend, state, 0, n_total, cap)


def continue_flow(traj: Trajectory, t_end: float, cap: float = 10.0) -> Trajectory:
    """Resume from the last stored sample with the original step size and cadence."""
    if traj.status not in ("completed",):
        raise ValueError(f"cannot continue a trajectory with status {traj.status!r}")
    if traj.backend == "frame":
        backend = _FrameBackend(traj.frame(-1), traj.spec)
    else:
        backend = _GridBackend(traj.grid, traj.spec)
    n_total = int(round(t_end / traj.dt))
    if abs(n_total * traj.dt - t_end) > 1e-9 * max(t_end, traj.dt):
        raise ValueError("t_end is not a whole number of steps of the stored dt")
    out = Trajectory(traj.spec, traj.backend, traj.grid, traj.dt, traj.sample_every,
                     list(traj.steps), list(traj.times), [s.copy() for s in traj.snapshots],
                     list(traj.diagnostics[:-1]), curv0=traj.curv0)
    # the last sample is re-diagnosed and not duplicated
    out.steps.pop(), out.times.pop()
    state = out.snapshots.pop()
    return _integrate(out, backend, state, traj.steps[-1], n_total, cap)


# --- checkpoints ----------------------------------------------------------------


def _grid_record(grid) -> dict:
    if grid.is_frame:
        return {"frame": {"structure": list(grid.structure), "volume_norm": grid.volume_norm}}
    return {"extents": list(grid.extents), "lengths": list(grid.lengths), "fd_order": grid.fd_order}


def _grid_from(rec: dict):
    if "frame" in rec:
        return FrameGrid(tuple(rec["frame"]["structure"]), rec["frame"]["volume_norm"])
    return ChartGrid(tuple(rec["extents"]), tuple(rec["lengths"]), rec["fd_order"])


def write_checkpoint(traj: Trajectory, outdir, seed: int | None = None, extra: dict | None = None) -> Path:
    out = Path(outdir)
    (out / "snapshots").mkdir(parents=True, exist_ok=True)
    samples = []
    for i, (step, t) in enumerate(zip(traj.steps, traj.times)):
        name = f"snapshots/sample_{i:05d}.cfld"
        write_field(out / name, traj.metric(i))
        samples.append({"step": step, "t": t, "file": name})
    manifest = {
        "schema": SCHEMA_VERSION,
        "spec": asdict(traj.spec),
        "backend": traj.backend,
        "grid": _grid_record(traj.grid),
        "dt": traj.dt,
        "sample_every": traj.sample_every,
        "seed": seed,
        "status": traj.status,
        "message": traj.message,
        "curv0": traj.curv0,
        "samples": samples,
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    traj.write_diagnostics(out / "diagnostics.csv")
    return path


def load_checkpoint(outdir) -> Trajectory:
    out = Path(outdir)
    man = json.loads((out / "manifest.json").read_text())
    if man.get("schema") != SCHEMA_VERSION:
        raise ValueError(f"unsupported manifest schema {man.get('schema')}")
    grid = _grid_from(man["grid"])
    traj = Trajectory(FlowSpec(**man["spec"]), man["backend"], grid, man["dt"], man["sample_every"],
                      status=man["status"], message=man["message"], curv0=man["curv0"])
    for s in man["samples"]:
        data = read_array(out / s["file"])[0]
        if man["backend"] == "frame":
            data = np.diag(data.reshape(3, 3)).copy()
        traj.steps.append(s["step"])
        traj.times.append(s["t"])
        traj.snapshots.append(data)
    with open(out / "diagnostics.csv", newline="") as fh:
        for row in csv.DictReader(fh):
            traj.diagnostics.append({"step": int(row["step"]), **{k: float(v) for k, v in row.items() if k != "step"}})
    return traj


# --- evolution identities -------------------------------------------------------


def _quantity(g: MetricField, which: str, sigma: int) -> np.ndarray:
    if which in ("christoffel_ev", "xconnev"):
        return christoffel(g).gamma.data
    alg = xcf_algebra(g, sigma)
    return alg.V.data if which == "xvev" else alg.E_raised.data


def _connection_rate(g: MetricField, gdot: TensorField) -> np.ndarray:
    """``1/2 g^mk (nabla_i gdot_jm + nabla_j gdot_im - nabla_m gdot_ij)`` as ``[k, i, j]``."""
    D = covariant_derivative(gdot, g).data  # [a, b, c] = nabla_a gdot_bc
    T = D + np.einsum("...jim->...ijm", D) - np.einsum("...mij->...ijm", D)
    return 0.5 * np.einsum("...km,...ijm->...kij", g.inverse.data, T)


def _predicted(g: MetricField, which: str, spec: FlowSpec, form: str = "corrected") -> np.ndarray:
    """Evolution formula for ``which`` at ``g`` under ``dg/dt = flow_rhs(g)``.

    For cross-curvature flow ``form="corrected"`` uses the algebraic term
    ``4 P g^ij`` in the evolution of ``E^ij`` (and ``4 P V g^-1 V`` for ``V``),
    which is what the flow actually satisfies; ``form="displayed"`` uses
    ``P g^ij + tr_g(X) E^ij``, which agrees only where ``E`` is a multiple of ``g``.
    """
    if which == "christoffel_ev":
        return _connection_rate(g, flow_rhs(g, spec))
    s = spec.sigma
    alg = xcf_algebra(g, s)
    if which == "xconnev":
        # -sigma g^mk {nabla_i (PV)_jm + nabla_j (PV)_im - nabla_m (PV)_ij}
        return _connection_rate(g, alg.X * (-2.0 * s))
    if form not in ("corrected", "displayed"):
        raise ValueError(f"unknown form {form!r}")
    E, P, gi = alg.E_raised.data, alg.P.data, g.inverse.data
    P2 = P[..., None, None]
    if which == "xvev":
        V = alg.V
        DV = covariant_derivative(V, g).data  # [k, a, i]
        box = -s * np.einsum("...ab,...abij->...ij", E, hessian(V, g).data)
        quad = np.einsum("...al,...kb,...kai,...lbj->...ij", E, E, DV, DV, optimize=True) - 2.0 * np.einsum(
            "...ab,...kl,...kai,...lbj->...ij", E, E, DV, DV, optimize=True)
        Vd = V.data
        VgV = np.einsum("...ik,...kl,...lj->...ij", Vd, gi, Vd)
        if form == "corrected":
            zeroth = 4.0 * P2 * VgV
        else:
            trV = np.einsum("...kl,...kl->...", gi, Vd)
            zeroth = P2 * (VgV + trV[..., None, None] * Vd)
        return box - s * (quad + zeroth)
    Eu = alg.E_raised
    DE = covariant_derivative(Eu, g).data  # [k, j, l] = nabla_k E^jl
    box = -s * np.einsum("...ab,...abij->...ij", E, hessian(Eu, g).data)
    quad = np.einsum("...kjl,...lik->...ij", DE, DE)
    if form == "corrected":
        zeroth = 4.0 * P2 * gi
    else:
        trX = np.einsum("...ab,...ab->...", gi, alg.X.data)
        zeroth = P2 * gi + trX[..., None, None] * E
    return box + s * (quad + zeroth)


def evolution_identity_check(traj: Trajectory, which: str, at: float | None = None, form: str = "corrected") -> dict:
    """Centered time difference of a curvature quantity minus its evolution formula.

    ``at`` restricts the check to the interior sample closest to that time;
    otherwise the maximum over all interior samples is reported.
    """
    if which not in IDENTITIES:
        raise ValueError(f"unknown identity {which!r}")
    if which != "christoffel_ev" and traj.spec.kind != "xcf":
        raise ValueError(f"{which} applies to cross-curvature trajectories")
    n = len(traj.times)
    if n < 3:
        raise ValueError("centered differences need at least 3 consecutive samples")
    t = np.asarray(traj.times)
    idx = range(1, n - 1)
    if at is not None:
        idx = [1 + int(np.argmin(np.abs(t[1:-1] - at)))]
    defects, scale = [], 0.0
    for i in idx:
        h1, h2 = t[i] - t[i - 1], t[i + 1] - t[i]
        if abs(h1 - h2) > 1e-9 * max(h1, h2):
            raise ValueError("centered differences need a uniform sample cadence")
        q_minus = _quantity(traj.metric(i - 1), which, traj.spec.sigma)
        q_plus = _quantity(traj.metric(i + 1), which, traj.spec.sigma)
        pred = _predicted(traj.metric(i), which, traj.spec, form)
        rate = (q_plus - q_minus) / (t[i + 1] - t[i - 1])
        defects.append(float(np.max(np.abs(rate - pred))))
        scale = max(scale, float(np.max(np.abs(pred))))
    return {
        "check": which,
        "form": form,
        "defect": max(defects),
        "scale": scale,
        "dt_sample": float(t[1] - t[0]),
        "samples": n,
        "times": [float(t[i]) for i in idx],
    }


def identity_orders(reports: list[dict]) -> list[float]:
    """Observed orders ``log2(d_i / d_{i+1})`` for reports at halving sample spacing."""
    out = []
    for a, b in zip(reports, reports[1:]):
        ratio = a["dt_sample"] / b["dt_sample"]
        out.append(math.log(a["defect"] / b["defect"]) / math.log(ratio) if b["defect"] > 0 else math.inf)
    return out
