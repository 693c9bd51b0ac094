"""Curvature flows on periodic grids and homogeneous 3-manifolds, with energy-method uniqueness audits."""

import os as _os

_threads = _os.environ.get("CURVEFLOW_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .grid import ChartGrid, FrameGrid, MetricField, TensorField  # noqa: E402

__version__ = "0.1.0"

__all__ = ["ChartGrid", "FrameGrid", "MetricField", "TensorField", "__version__"]
