"""Charts, tensor fields and the Levi-Civita kernel.

Array conventions (every array may carry leading batch axes):

* ``gamma[..., k, i, j]`` is the Christoffel symbol with upper index ``k``.
* ``R[..., i, j, k, l]`` is the ``l``-th component of ``R(e_i, e_j) e_k`` with
  ``R(X, Y) = [nabla_X, nabla_Y] - nabla_[X, Y]``.
* ``R_low[..., i, j, k, l] = g(R(e_i, e_j) e_k, e_l)``.
* ``S[..., j, k] = sum_i R[..., i, j, k, i]``, i.e. ``S(X, Y) = tr(Z -> R(Z, X) Y)``.
* ``Q[..., i, j]`` is the Ricci operator ``Q^i_j``.
* Covariant derivatives put the differentiation index first:
  ``nabla_T[..., a, ...] = (nabla_{e_a} T)[...]``.
* Partial-derivative arrays put the differentiation indices last.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .errors import DimensionError, SingularMetric, StepTooCoarse


# --------------------------------------------------------------------------
# charts and fields

@dataclass(frozen=True)
class Chart:
    """Coordinate chart ``(t, x1, ..., x2n)``.

    ``box`` is the sampling box. ``bounds`` is the region where the model's
    expressions are trusted; integrators stop when they leave it.
    """

    names: tuple
    box: np.ndarray
    bounds: np.ndarray = None

    def __post_init__(self):
        box = np.asarray(self.box, dtype=float)
        m = len(self.names)
        if m < 3 or m % 2 == 0:
            raise DimensionError(f"chart dimension must be odd and >= 3, got {m}")
        if box.shape != (m, 2) or np.any(box[:, 0] > box[:, 1]):
            raise ValueError("domain box must be a nonempty (m, 2) array of intervals")
        bounds = box if self.bounds is None else np.asarray(self.bounds, dtype=float)
        if bounds.shape != (m, 2):
            raise ValueError("bounds must have shape (m, 2)")
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "bounds", bounds)

    @property
    def m(self):
        return len(self.names)

    @property
    def n(self):
        return (self.m - 1) // 2

    @property
    def center(self):
        return self.box.mean(axis=1)

    def sample(self, count, rng):
        lo, hi = self.box[:, 0], self.box[:, 1]
        return lo + (hi - lo) * rng.random((count, self.m))

    def inside(self, pts):
        pts = np.asarray(pts)
        return np.all((pts >= self.bounds[:, 0]) & (pts <= self.bounds[:, 1]), axis=-1)


class TensorField:
    """Array of scalar expressions with a valence string.

    ``kinds`` has one character per array axis: ``'u'`` for a contravariant
    index, ``'d'`` for a covariant one.
    """

    def __init__(self, components, kinds, name=None):
        comps = np.empty(np.shape(np.asarray(components, dtype=object)), dtype=object)
        src = np.asarray(components, dtype=object)
        for idx in np.ndindex(src.shape):
            comps[idx] = ex._wrap(src[idx])
        if len(kinds) != comps.ndim:
            raise ValueError(f"valence {kinds!r} does not match component shape {comps.shape}")
        self.components = comps
        self.kinds = kinds
        self.name = name
        self._constant_part = np.zeros(comps.shape)
        self._live = []
        for idx, e in np.ndenumerate(comps):
            if e.is_const:
                self._constant_part[idx] = e.value
            else:
                self._live.append((idx, e))

    @property
    def shape(self):
        return self.components.shape

    def jets(self, pts, order):
        """Values and partials: list ``[T, dT, d2T, ...]`` up to ``order``."""
        pts = np.asarray(pts, dtype=float)
        batch = pts.shape[:-1]
        m = pts.shape[-1]
        out = [np.zeros(batch + self.shape + (m,) * q) for q in range(order + 1)]
        out[0][...] = self._constant_part
        live = self._live
        jets = ex.eval_jets([e for _, e in live], pts, order)
        for (idx, _), jet in zip(live, jets):
            for q in range(order + 1):
                out[q][(Ellipsis,) + idx + (slice(None),) * q] = jet.derivative(q)
        return out

    def values(self, pts):
        return self.jets(pts, 0)[0]

    def __add__(self, other):
        if self.kinds != other.kinds:
            raise ValueError("valence mismatch")
        return TensorField(self.components + other.components, self.kinds)

    def scaled(self, c):
        comps = np.empty(self.shape, dtype=object)
        for idx in np.ndindex(self.shape):
            comps[idx] = ex.mul(c, self.components[idx])
        return TensorField(comps, self.kinds)


class MetricField(TensorField):
    """Symmetric positive definite (0,2) field."""

    def __init__(self, components, name="g"):
        super().__init__(components, "dd", name)
        m = self.shape[0]
        if self.shape != (m, m):
            raise ValueError("metric must be square")
        for i in range(m):
            for j in range(i + 1, m):
                if not self.components[i, j].same_as(self.components[j, i]):
                    raise ValueError(f"metric entries ({i},{j}) and ({j},{i}) differ")

    @property
    def m(self):
        return self.shape[0]


def vector_field(comps, name=None):
    return TensorField(comps, "u", name)


def one_form(comps, name=None):
    return TensorField(comps, "d", name)


def tensor11(comps, name=None):
    return TensorField(comps, "ud", name)


def sym_tensor2(comps, name=None):
    field_ = TensorField(comps, "dd", name)
    m = field_.shape[0]
    for i in range(m):
        for j in range(i + 1, m):
            if not field_.components[i, j].same_as(field_.components[j, i]):
                raise ValueError("symmetric tensor field has asymmetric components")
    return field_


@dataclass
class Model:
    """A coordinate Riemannian model plus whatever structure it carries."""

    name: str
    chart: Chart
    metric: MetricField
    structure: object = None
    fields: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    @property
    def m(self):
        return self.chart.m

    @property
    def n(self):
        return self.chart.n


# --------------------------------------------------------------------------
# pointwise linear algebra

def _check_pd(g):
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError as err:
        raise SingularMetric("metric is not positive definite at a sampled point") from err
    if not np.all(np.isfinite(g)):
        raise SingularMetric("metric has non-finite entries")


def orthonormal_frame(g):
    """Frame ``F`` (columns are vectors) with ``F^T g F = I``."""
    g = np.asarray(g)
    try:
        L = np.linalg.cholesky(g)
    except np.linalg.LinAlgError as err:
        raise SingularMetric("metric is not positive definite") from err
    eye = np.broadcast_to(np.eye(g.shape[-1]), g.shape)
    return np.swapaxes(np.linalg.solve(L, eye), -1, -2)


def to_frame(T, F, kinds):
    """Components of ``T`` in the frame ``F`` (coframe ``F^{-1}`` for upper indices)."""
    Finv = np.linalg.inv(F)
    idx = _LETTERS[:len(kinds)]
    out = T
    for pos, kind in enumerate(kinds):
        src = idx[:pos] + "z" + idx[pos + 1:]
        if kind == "d":
            out = np.einsum(f"...{src},...z{idx[pos]}->...{idx}", out, F)
        elif kind == "u":
            out = np.einsum(f"...{src},...{idx[pos]}z->...{idx}", out, Finv)
    return out


def frame_max(T, g, kinds):
    """Largest absolute component of ``T`` in a g-orthonormal frame."""
    F = orthonormal_frame(g)
    return float(np.max(np.abs(to_frame(T, F, kinds)))) if np.size(T) else 0.0


def g_unit_directions(g, rng, count=1):
    """Random directions of unit g-length at each point, shape (..., count, m)."""
    F = orthonormal_frame(g)
    m = g.shape[-1]
    u = rng.standard_normal(g.shape[:-2] + (count, m))
    u /= np.linalg.norm(u, axis=-1, keepdims=True)
    return np.einsum("...ij,...cj->...ci", F, u)


# --------------------------------------------------------------------------
# connection and curvature

def metric_derivatives(metric, pts, order):
    """``[g, dg, d2g, ...]`` with derivative axes last."""
    out = metric.jets(pts, order)
    _check_pd(out[0])
    return out


def _christoffel_parts(g, ginv, dg):
    first = 0.5 * (np.einsum("...jli->...lij", dg) + np.einsum("...ilj->...lij", dg)
                   - np.einsum("...ijl->...lij", dg))
    return first, np.einsum("...kl,...lij->...kij", ginv, first)


def christoffel(metric, p):
    g, dg = metric_derivatives(metric, p, 1)
    return _christoffel_parts(g, np.linalg.inv(g), dg)[1]


@dataclass
class CurvatureBundle:
    """Pointwise curvature data (see module docstring for index layout)."""

    g: np.ndarray
    ginv: np.ndarray
    gamma: np.ndarray
    R: np.ndarray
    R_low: np.ndarray
    S: np.ndarray
    Q: np.ndarray
    r: np.ndarray
    nabla_R: np.ndarray = None
    nabla_S: np.ndarray = None
    dr: np.ndarray = None

    @property
    def m(self):
        return self.g.shape[-1]


def curvature(metric, p, nabla=True):
    """Compute a :class:`CurvatureBundle`; ``nabla`` adds the derivative data."""
    order = 3 if nabla else 2
    derivs = metric_derivatives(metric, p, order)
    g, dg, d2g = derivs[:3]
    ginv = np.linalg.inv(g)
    first, gam = _christoffel_parts(g, ginv, dg)

    dginv = -np.einsum("...kp,...pqa,...ql->...kla", ginv, dg, ginv)
    dfirst = 0.5 * (np.einsum("...jlia->...lija", d2g) + np.einsum("...ilja->...lija", d2g)
                    - np.einsum("...ijla->...lija", d2g))
    dgam = (np.einsum("...kla,...lij->...kija", dginv, first)
            + np.einsum("...kl,...lija->...kija", ginv, dfirst))

    R = (np.einsum("...ljki->...ijkl", dgam) - np.einsum("...likj->...ijkl", dgam)
         + np.einsum("...lip,...pjk->...ijkl", gam, gam)
         - np.einsum("...ljp,...pik->...ijkl", gam, gam))
    R_low = np.einsum("...ijkp,...pl->...ijkl", R, g)
    S = np.einsum("...ijki->...jk", R)
    Q = np.einsum("...ip,...pj->...ij", ginv, S)
    r = np.einsum("...ii->...", Q)
    bundle = CurvatureBundle(g, ginv, gam, R, R_low, S, Q, r)
    if not nabla:
        return bundle

    d3g = derivs[3]
    d2ginv = (-np.einsum("...kp,...pqab,...ql->...klab", ginv, d2g, ginv)
              + np.einsum("...kp,...pqa,...qr,...rsb,...sl->...klab", ginv, dg, ginv, dg, ginv)
              + np.einsum("...kp,...pqb,...qr,...rsa,...sl->...klab", ginv, dg, ginv, dg, ginv))
    d2first = 0.5 * (np.einsum("...jliab->...lijab", d3g) + np.einsum("...iljab->...lijab", d3g)
                     - np.einsum("...ijlab->...lijab", d3g))
    d2gam = (np.einsum("...klab,...lij->...kijab", d2ginv, first)
             + np.einsum("...kla,...lijb->...kijab", dginv, dfirst)
             + np.einsum("...klb,...lija->...kijab", dginv, dfirst)
             + np.einsum("...kl,...lijab->...kijab", ginv, d2first))
    dR = (np.einsum("...ljkia->...ijkla", d2gam) - np.einsum("...likja->...ijkla", d2gam)
          + np.einsum("...lipa,...pjk->...ijkla", dgam, gam)
          + np.einsum("...lip,...pjka->...ijkla", gam, dgam)
          - np.einsum("...ljpa,...pik->...ijkla", dgam, gam)
          - np.einsum("...ljp,...pika->...ijkla", gam, dgam))
    nabla_R = covariant_from_partials(R, dR, gam, "dddu")
    nabla_S = np.einsum("...aijki->...ajk", nabla_R)
    dr = np.einsum("...jk,...ajk->...a", ginv, nabla_S)
    bundle.nabla_R = nabla_R
    bundle.nabla_S = nabla_S
    bundle.dr = dr
    return bundle


def riemann(metric, p):
    b = curvature(metric, p, nabla=False)
    return b.R, b.R_low


def ricci(metric, p):
    b = curvature(metric, p, nabla=False)
    return b.S, b.Q, b.r


_LETTERS = "bcdefghijklmnopqrstuvw"


def covariant_from_partials(T, dT, gamma, kinds):
    """Levi-Civita derivative from values and partials.

    ``T`` has shape ``(..., *tensor)``, ``dT`` the same plus a trailing
    derivative axis (or ``None`` for pure connection terms). ``'.'`` in
    ``kinds`` marks a passive axis that is carried along untouched.
    Returns shape ``(..., m, *tensor)``.
    """
    r = len(kinds)
    m = gamma.shape[-1]
    if dT is None:
        out = np.zeros(T.shape[:T.ndim - r] + (m,) + T.shape[T.ndim - r:])
    else:
        out = np.moveaxis(dT, -1, T.ndim - r).copy()
    idx = _LETTERS[:r]
    for pos, kind in enumerate(kinds):
        if kind == ".":
            continue
        src = idx[:pos] + "z" + idx[pos + 1:]
        if kind == "u":
            out += np.einsum(f"...{idx[pos]}az,...{src}->...a{idx}", gamma, T)
        else:
            out -= np.einsum(f"...za{idx[pos]},...{src}->...a{idx}", gamma, T)
    return out


def cov_deriv(T, metric, p):
    """Covariant derivative of the expression field ``T`` at ``p``."""
    vals, dvals = T.jets(p, 1)
    gam = christoffel(metric, p)
    return covariant_from_partials(vals, dvals, gam, T.kinds)


def lie_metric_jet(V, metric, p, with_derivative=True):
    """``L_V g`` and (optionally) its partial derivatives from the coordinate formula."""
    order = 2 if with_derivative else 1
    Vj = V.jets(p, order)
    gj = metric_derivatives(metric, p, order)
    v, dv = Vj[0], Vj[1]
    g, dg = gj[0], gj[1]
    L = (np.einsum("...k,...ijk->...ij", v, dg) + np.einsum("...kj,...ki->...ij", g, dv)
         + np.einsum("...ik,...kj->...ij", g, dv))
    if not with_derivative:
        return L, None
    d2v, d2g = Vj[2], gj[2]
    dL = (np.einsum("...ka,...ijk->...ija", dv, dg) + np.einsum("...k,...ijka->...ija", v, d2g)
          + np.einsum("...kja,...ki->...ija", dg, dv) + np.einsum("...kj,...kia->...ija", g, d2v)
          + np.einsum("...ika,...kj->...ija", dg, dv) + np.einsum("...ik,...kja->...ija", g, d2v))
    return L, dL


def lie_metric(V, metric, p):
    """``(L_V g)_{ij}`` from partial derivatives of ``V`` and ``g``."""
    return lie_metric_jet(V, metric, p, with_derivative=False)[0]


def lie_metric_covariant(V, metric, p):
    """``g(nabla_X V, Y) + g(X, nabla_Y V)``; independent route to :func:`lie_metric`."""
    nV = cov_deriv(V, metric, p)
    g = metric.values(p)
    low = np.einsum("...ak,...kb->...ab", nV, g)
    return low + np.swapaxes(low, -1, -2)


def nabla_lie_metric(V, metric, p):
    L, dL = lie_metric_jet(V, metric, p)
    return covariant_from_partials(L, dL, christoffel(metric, p), "dd")


# --------------------------------------------------------------------------
# parallel transport

DEFAULT_STEPS_PER_LENGTH = 1000
MIN_STEPS = 100


def segment_length(metric, a, b, samples=17):
    """g-length of the straight coordinate segments ``a -> b`` (batched)."""
    s = np.linspace(0.0, 1.0, samples)
    pts = a[..., None, :] + s[:, None] * (b - a)[..., None, :]
    g = metric.values(pts)
    d = b - a
    speed = np.sqrt(np.maximum(np.einsum("...i,...sij,...j->...s", d, g, d), 0.0))
    return np.trapezoid(speed, s, axis=-1)


def _transport_rhs(metric, x, xdot, tensors):
    """Right-hand sides of the transport equation for several (T, kinds) pairs."""
    gam = christoffel(metric, x)
    nb = x.ndim - 1
    out = []
    for T, kinds in tensors:
        conn = covariant_from_partials(T, None, gam, kinds)
        xd = xdot.reshape(xdot.shape + (1,) * (T.ndim - nb))
        out.append(-np.sum(xd * conn, axis=nb))
    return out


def parallel_transport(metric, path, T0, kinds="dd", steps=None,
                       steps_per_length=DEFAULT_STEPS_PER_LENGTH, tol=1e-8):
    """Transport ``T0`` along a polyline with classical RK4.

    Parameters
    ----------
    path : array, shape (..., K, m)
        Polyline vertices; batch axes must match the leading axes of ``T0``.
    T0 : array, shape (..., *tensor)
        Tensor at the first vertex.
    kinds : str
        Valence of ``T0``'s tensor axes (``'.'`` for passive axes).
    steps : int, optional
        RK4 steps per segment (>= 100). By default proportional to the
        segment's g-length.

    The metric is transported alongside as a self-check: ``StepTooCoarse``
    is raised if it fails to come back as ``g(endpoint)`` within ``tol``
    (relative).
    """
    path = np.asarray(path, dtype=float)
    T = np.array(T0, dtype=float)
    if steps is not None and steps < MIN_STEPS:
        raise ValueError(f"at least {MIN_STEPS} transport steps per segment are required")
    G = metric.values(path[..., 0, :])
    for seg in range(path.shape[-2] - 1):
        a, b = path[..., seg, :], path[..., seg + 1, :]
        d = b - a
        if steps is None:
            length = float(np.max(segment_length(metric, a, b)))
            nsteps = max(MIN_STEPS, int(np.ceil(steps_per_length * length)))
        else:
            nsteps = int(steps)
        h = 1.0 / nsteps
        for k in range(nsteps):
            s = k * h
            x0, xm, x1 = a + s * d, a + (s + 0.5 * h) * d, a + (s + h) * d
            k1, g1 = _transport_rhs(metric, x0, d, [(T, kinds), (G, "dd")])
            k2, g2 = _transport_rhs(metric, xm, d, [(T + 0.5 * h * k1, kinds),
                                                    (G + 0.5 * h * g1, "dd")])
            k3, g3 = _transport_rhs(metric, xm, d, [(T + 0.5 * h * k2, kinds),
                                                    (G + 0.5 * h * g2, "dd")])
            k4, g4 = _transport_rhs(metric, x1, d, [(T + h * k3, kinds), (G + h * g3, "dd")])
            T = T + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            G = G + (h / 6.0) * (g1 + 2 * g2 + 2 * g3 + g4)
    g_end = metric.values(path[..., -1, :])
    drift = float(np.max(np.abs(G - g_end)) / max(np.max(np.abs(g_end)), 1e-300))
    if not drift <= tol:   # also catches non-finite drift
        raise StepTooCoarse(f"metric transport drift {drift:.3e} exceeds {tol:.1e}")
    return T


def segment_path(p, q):
    p, q = np.broadcast_arrays(np.asarray(p, float), np.asarray(q, float))
    return np.stack([p, q], axis=-2)


def rectangle_loop(p, i, j, a, b):
    """Closed coordinate rectangle from ``p``: +a along ``i``, +b along ``j``, back."""
    p = np.asarray(p, dtype=float)
    ei = np.zeros_like(p)
    ej = np.zeros_like(p)
    ei[..., i] = a
    ej[..., j] = b
    return np.stack([p, p + ei, p + ei + ej, p + ej, p], axis=-2)
