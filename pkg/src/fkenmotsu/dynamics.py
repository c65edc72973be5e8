"""Geodesic flow, quadratic first integrals and conformal fits of ``L_X g``.

Geodesics are integrated with classical RK4 on ``(x, xdot)``. Independent
geodesics are stacked along a leading batch axis and advanced together.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import StepTooCoarse
from .geometry import (christoffel, covariant_from_partials, frame_max,
                       lie_metric, metric_derivatives, nabla_lie_metric)
from .soliton import resolve_field

ENERGY_TOL = 1e-6
DEFAULT_T = 10.0
DEFAULT_H = 1e-3


@dataclass(frozen=True)
class GeodesicTrace:
    """Sampled geodesics; arrays are indexed ``[step, geodesic, ...]``.

    After a geodesic leaves the trusted chart its row is frozen at the last
    inside state and ``alive`` is False from then on.
    """

    times: np.ndarray
    x: np.ndarray
    v: np.ndarray
    alive: np.ndarray
    exit_time: np.ndarray
    energy: np.ndarray
    energy_drift: np.ndarray
    qfi: dict = field(default_factory=dict)
    h: float = DEFAULT_H

    @property
    def truncated(self):
        return bool(np.any(~np.isnan(self.exit_time)))

    @property
    def max_energy_drift(self):
        return float(np.max(self.energy_drift))


def _quadratic(a, v):
    return np.einsum("...i,...ij,...j->...", v, a, v)


def _accel(metric, x, v):
    gam = christoffel(metric, x)
    return -np.einsum("...kij,...i,...j->...k", gam, v, v)


def _rk4_step(metric, x, v, h):
    k1x, k1v = v, _accel(metric, x, v)
    x2, v2 = x + 0.5 * h * k1x, v + 0.5 * h * k1v
    k2x, k2v = v2, _accel(metric, x2, v2)
    x3, v3 = x + 0.5 * h * k2x, v + 0.5 * h * k2v
    k3x, k3v = v3, _accel(metric, x3, v3)
    x4, v4 = x + h * k3x, v + h * k3v
    k4x, k4v = v4, _accel(metric, x4, v4)
    return (x + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x),
            v + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v))


def _relative_drift(F, alive):
    F0 = F[0]
    rel = np.abs(F - F0) / np.maximum(np.abs(F0), 1e-12)
    return np.max(np.where(alive, rel, 0.0), axis=0)


def qfi_values(field_, x):
    """Field values at every stored position of a trace."""
    return field_.values(x.reshape(-1, x.shape[-1])).reshape(x.shape[:-1] + field_.shape)


def integrate_geodesic(model, x0, v0, T=DEFAULT_T, h=DEFAULT_H, fields=None,
                       normalize=True, tol=ENERGY_TOL, check=True):
    """Integrate ``x'' + Gamma(x', x') = 0`` from ``(x0, v0)``.

    Parameters
    ----------
    x0, v0 : array_like, shape (m,) or (B, m)
        Start points and initial velocities (one row per geodesic).
    fields : dict, optional
        ``name -> TensorField`` of symmetric (0,2) fields whose quadratic
        integral ``a(x', x')`` is recorded along the trace. The metric is
        always included as ``"g"``.
    normalize : bool
        Rescale ``v0`` to unit g-norm.
    check : bool
        Raise :class:`StepTooCoarse` when the kinetic-energy drift of any
        geodesic exceeds ``tol``.
    """
    if h <= 0:
        raise ValueError("step h must be positive")
    metric = model.metric
    x = np.atleast_2d(np.asarray(x0, dtype=float)).copy()
    v = np.atleast_2d(np.asarray(v0, dtype=float)).copy()
    x, v = np.broadcast_arrays(x, v)
    x, v = x.copy(), v.copy()
    if not np.all(model.chart.inside(x)):
        raise ValueError("start point outside the chart")
    g0 = metric.values(x)
    norm2 = _quadratic(g0, v)
    if np.any(norm2 <= 0):
        raise ValueError("initial velocity must be nonzero")
    if normalize:
        v = v / np.sqrt(norm2)[:, None]
    steps = int(round(T / h))
    B = x.shape[0]
    xs = np.empty((steps + 1,) + x.shape)
    vs = np.empty_like(xs)
    alive = np.ones((steps + 1, B), dtype=bool)
    exit_time = np.full(B, np.nan)
    xs[0], vs[0] = x, v
    live = np.ones(B, dtype=bool)
    for s in range(1, steps + 1):
        with np.errstate(all="ignore"):
            xn, vn = _rk4_step(metric, x[live], v[live], h)
        ok = model.chart.inside(xn) & np.all(np.isfinite(xn), axis=-1) & np.all(np.isfinite(vn), axis=-1)
        idx = np.flatnonzero(live)
        x[idx[ok]], v[idx[ok]] = xn[ok], vn[ok]
        gone = idx[~ok]
        exit_time[gone] = s * h
        live[gone] = False
        xs[s], vs[s] = x, v
        alive[s] = live
        if not live.any():
            xs[s + 1:], vs[s + 1:] = x, v
            alive[s + 1:] = False
            break
    times = h * np.arange(steps + 1)
    energy = _quadratic(qfi_values(metric, xs), vs)
    drift = _relative_drift(energy, alive)
    qfi = {"g": energy}
    for name, a in (fields or {}).items():
        qfi[name] = _quadratic(qfi_values(a, xs), vs)
    trace = GeodesicTrace(times, xs, vs, alive, exit_time, energy, drift, qfi, h)
    if check and not np.all(drift <= tol):
        raise StepTooCoarse(f"kinetic energy drift {float(np.max(drift)):.3e} exceeds {tol:g} "
                            f"at h = {h:g}")
    return trace


def random_initial_data(model, count, rng):
    """Seeded start points in the sampling box and Euclidean-random velocities."""
    x0 = model.chart.sample(count, rng)
    v0 = rng.standard_normal((count, model.m))
    return x0, v0


def qfi_drift(trace, a):
    """Max relative drift of ``a(x', x')`` over the live part of the trace.

    ``a`` is the name of a recorded field or a :class:`TensorField`.
    """
    if isinstance(a, str):
        F = trace.qfi[a]
    else:
        F = _quadratic(qfi_values(a, trace.x), trace.v)
    return float(np.max(_relative_drift(F, trace.alive)))


def energy_convergence(model, x0, v0, T=DEFAULT_T, h=0.1):
    """Ratio of kinetic-energy drift at step ``h`` to that at ``h / 2``."""
    coarse = integrate_geodesic(model, x0, v0, T, h, check=False)
    fine = integrate_geodesic(model, x0, v0, T, h / 2, check=False)
    if fine.max_energy_drift == 0.0:
        return float("nan")
    return coarse.max_energy_drift / fine.max_energy_drift


@dataclass
class KillingTypeReport:
    killing: float   # cyclic sum a_{ij;k} + a_{jk;i} + a_{ki;j}
    sqfi: float      # max |a_{ij;k}|


def killing_type_residual(model, a, samples=100, seed=0):
    """Frame-component residuals of the Killing-type and parallel conditions for ``a``."""
    pts = model.chart.sample(samples, np.random.default_rng(seed))
    aj = a.jets(pts, 1)
    g = metric_derivatives(model.metric, pts, 0)[0]
    D = covariant_from_partials(aj[0], aj[1], christoffel(model.metric, pts), "dd")
    # D[c, a, b] = a_{ab;c}
    K = np.einsum("...kij->...ijk", D) + D + np.einsum("...jki->...ijk", D)
    return KillingTypeReport(frame_max(K, g, "ddd"), frame_max(D, g, "ddd"))


@dataclass
class ConformalFitReport:
    c: float
    residual: float
    affine_residual: float
    c_xi: float = float("nan")     # mean (L_X g)(xi, xi)
    killing_implies_zero: object = None


def conformal_fit(model, X, samples=100, seed=0, tol=1e-8):
    """Least-squares constant ``c`` with ``L_X g ~ c g``.

    On beta-Kenmotsu models, when both the fit and the affine residual
    ``nabla(L_X g)`` vanish, ``killing_implies_zero`` records whether
    ``|c| < tol``; elsewhere it is None.
    """
    Xf = resolve_field(model, X)
    pts = model.chart.sample(samples, np.random.default_rng(seed))
    g = model.metric.values(pts)
    L = lie_metric(Xf, model.metric, pts)
    tr = np.einsum("...ij,...ji->...", np.linalg.inv(g), L)
    c = float(np.mean(tr) / model.m) + 0.0
    residual = frame_max(L - c * g, g, "dd")
    affine = frame_max(nabla_lie_metric(Xf, model.metric, pts), g, "ddd")
    c_xi = float("nan")
    verdict = None
    if model.structure is not None:
        xi = model.structure.xi.values(pts)
        c_xi = float(np.mean(_quadratic(L, xi))) + 0.0
    kf = getattr(model, "kfun", None)
    if kf is not None and kf.family == "constant" and residual < tol and affine < tol:
        verdict = abs(c) < tol
    return ConformalFitReport(c, residual, affine, c_xi, verdict)
