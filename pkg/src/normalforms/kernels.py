"""Backend selection for the numeric hot paths.

The compiled Cython module is used when importable; setting the
environment variable ``NORMALFORMS_PURE=1`` forces the pure-Python
fallback. Both expose ``poly_eval`` and ``dopri_poly`` with identical
semantics.
"""

from __future__ import annotations

import os

import numpy as np

from . import _fallback

__all__ = ["BACKEND", "PackedSystem", "backend_module", "dopri"]


def _select():
    if os.environ.get("NORMALFORMS_PURE", "") not in ("", "0"):
        return _fallback, "python"
    try:
        from . import _kernels
    except ImportError:
        return _fallback, "python"
    return _kernels, "cython"


_backend, BACKEND = _select()
dopri = _fallback.dopri


def backend_module(name=None):
    if name is None:
        return _backend
    if name == "python":
        return _fallback
    if name == "cython":
        from . import _kernels

        return _kernels
    raise ValueError(f"unknown backend {name!r}")


class PackedSystem:
    """A list of polynomials on one chart packed into flat arrays."""

    def __init__(self, polys, chart=None):
        polys = list(polys)
        if chart is None:
            chart = polys[0].chart
        self.chart = chart
        self.polys = polys
        exps, coeffs, offsets = [], [], [0]
        for p in polys:
            if p.chart != chart:
                raise ValueError("packed polynomials must share a chart")
            for e, c in p.terms.items():
                exps.append(e)
                coeffs.append(float(c))
            offsets.append(len(coeffs))
        self.n = len(polys)
        self.dim = chart.dim
        self.exps = np.ascontiguousarray(np.array(exps, dtype=np.int64).reshape(-1, chart.dim))
        self.coeffs = np.ascontiguousarray(np.array(coeffs, dtype=np.float64))
        self.offsets = np.ascontiguousarray(np.array(offsets, dtype=np.int64))

    def __call__(self, z, backend=None):
        out = np.empty(self.n)
        z = np.ascontiguousarray(np.asarray(z, dtype=np.float64))
        backend_module(backend).poly_eval(self.exps, self.coeffs, self.offsets, z, out)
        return out

    def integrate(self, z0, span, rtol=1e-10, atol=None, box=10.0, nbox=None,
                  max_steps=100000, backend=None):
        if self.n != self.dim:
            raise ValueError("vector field systems must be square")
        atol = rtol if atol is None else atol
        nbox = self.n if nbox is None else nbox
        z0 = np.ascontiguousarray(np.asarray(z0, dtype=np.float64))
        return backend_module(backend).dopri_poly(
            self.exps, self.coeffs, self.offsets, z0, float(span), float(rtol),
            float(atol), float(box), int(nbox), int(max_steps),
        )
