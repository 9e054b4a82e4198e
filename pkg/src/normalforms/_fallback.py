"""Pure-Python backend mirroring ``_kernels.pyx`` step for step."""

from __future__ import annotations

import numpy as np

__all__ = ["poly_eval", "dopri_poly", "dopri"]

A21 = 1.0 / 5
A31, A32 = 3.0 / 40, 9.0 / 40
A41, A42, A43 = 44.0 / 45, -56.0 / 15, 32.0 / 9
A51, A52, A53, A54 = 19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729
A61, A62, A63, A64, A65 = 9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656
B1, B3, B4, B5, B6 = 35.0 / 384, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84
E1, E3, E4, E5, E6, E7 = 71.0 / 57600, -71.0 / 16695, 71.0 / 1920, -17253.0 / 339200, 22.0 / 525, -1.0 / 40


def poly_eval(exps, coeffs, offsets, z, out):
    comp = np.repeat(np.arange(len(offsets) - 1), np.diff(offsets))
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = coeffs * np.prod(np.asarray(z, dtype=float) ** exps, axis=1)
    out[:] = np.bincount(comp, weights=vals, minlength=len(offsets) - 1)


def dopri(f, z0, span, rtol, atol, box, nbox, max_steps):
    """Adaptive Dormand-Prince 5(4) for autonomous dz/ds = f(z).

    Same step control and return convention as the compiled ``dopri_poly``.
    """
    y = np.array(z0, dtype=float)
    total = abs(span)
    if total == 0.0:
        return y, 0, 0.0, 0, 0.0
    sgn = 1.0 if span >= 0 else -1.0
    h = min(total / 100.0, 0.05)
    hmin = 1e-12 * max(total, 1.0)
    s = 0.0
    steps = 0
    status = 0
    maxerr = 0.0
    k1 = f(y)
    while s < total:
        if steps >= max_steps:
            status = 3
            break
        last = s + h >= total
        if last:
            h = total - s
        sh = sgn * h
        k2 = f(y + sh * (A21 * k1))
        k3 = f(y + sh * (A31 * k1 + A32 * k2))
        k4 = f(y + sh * (A41 * k1 + A42 * k2 + A43 * k3))
        k5 = f(y + sh * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4))
        k6 = f(y + sh * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5))
        ynew = y + sh * (B1 * k1 + B3 * k3 + B4 * k4 + B5 * k5 + B6 * k6)
        k7 = f(ynew)
        e = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7)
        sc = atol + rtol * np.maximum(np.abs(y), np.abs(ynew))
        err = float(np.max(np.abs(e) / sc)) if len(y) else 0.0
        if err != err:
            err = 1e10
        if err <= 1.0:
            s = s + h
            steps += 1
            maxerr = max(maxerr, err)
            y = ynew
            k1 = k7
            head = y[:nbox]
            if np.any(np.abs(head) > box) or np.any(head != head):
                status = 2
                break
            if last:
                break
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            h = h * fac
        else:
            h = h * min(1.0, max(0.2, 0.9 * err ** -0.2))
        if h < hmin:
            status = 1
            break
    return y, steps, maxerr * rtol, status, sgn * s


def dopri_poly(exps, coeffs, offsets, z0, span, rtol, atol, box, nbox, max_steps):
    comp = np.repeat(np.arange(len(offsets) - 1), np.diff(offsets))
    n = len(offsets) - 1

    def f(z):
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = coeffs * np.prod(z ** exps, axis=1)
        return np.bincount(comp, weights=vals, minlength=n)

    return dopri(f, z0, span, rtol, atol, box, nbox, max_steps)
