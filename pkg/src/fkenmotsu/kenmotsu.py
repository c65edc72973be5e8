"""f-Kenmotsu coordinate models and their structural verifiers.

Every model is a warped product ``dt^2 + exp(2 W(t)) g_N`` over a Kähler
fiber ``N`` with ``W' = f``.  The almost contact structure is
``xi = d/dt``, ``eta = dt`` and ``phi`` = the fiber complex structure, so
the axioms hold exactly and the Kenmotsu equation holds by construction.
The verifiers re-derive every identity through the generic curvature
pipeline of :mod:`fkenmotsu.geometry`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .errors import DimensionError, InvalidParam, NotApplicable
from .geometry import (Chart, MetricField, Model, covariant_from_partials, curvature,
                       frame_max, one_form, orthonormal_frame, sym_tensor2, tensor11,
                       to_frame, vector_field)

REGULARITY_THRESHOLD = 1e-6
BOUNDS_MARGIN = 12.0
FAMILIES = ("constant", "exponential", "affine_exp", "reciprocal", "custom")


@dataclass(frozen=True)
class KenmotsuFunction:
    """The function ``f(t)`` together with a closed-form warp potential ``W``."""

    family: str
    params: dict
    f: ex.Expr
    W: ex.Expr

    def values(self, t, order=1):
        """``[f, f', ...]`` at the times ``t``."""
        t = np.asarray(t, dtype=float)[..., None]
        jet = ex.eval_jet(self.f, t, order)
        return [jet.v] + [jet.derivative(q)[(...,) + (0,) * q] for q in range(1, order + 1)]

    def is_kenmotsu(self):
        """True when ``f`` is identically 1."""
        return self.family == "constant" and self.params.get("beta") == 1.0


def kenmotsu_function(family, **params):
    """Build a :class:`KenmotsuFunction` from a family tag and its parameters.

    ``constant(beta)``: f = beta, W = beta t.
    ``exponential(a, c)``: f = a e^{ct}.
    ``affine_exp(a, b, c)``: f = a + b e^{ct}.
    ``reciprocal(t0)``: f = 1/(t + t0), W = ln(t + t0).
    ``custom(f, W)``: both given as expressions.
    """
    t = ex.sym(0, "t")
    try:
        if family == "constant":
            beta = float(params["beta"])
            f, W = ex.const(beta), beta * t
            params = {"beta": beta}
        elif family == "exponential":
            a, c = float(params["a"]), float(params["c"])
            if c == 0:
                raise InvalidParam("exponential family needs c != 0 (use constant)")
            f = a * ex.exp(c * t)
            W = (a / c) * ex.exp(c * t)
            params = {"a": a, "c": c}
        elif family == "affine_exp":
            a, b, c = float(params["a"]), float(params["b"]), float(params["c"])
            if c == 0:
                raise InvalidParam("affine_exp family needs c != 0")
            f = a + b * ex.exp(c * t)
            W = a * t + (b / c) * ex.exp(c * t)
            params = {"a": a, "b": b, "c": c}
        elif family == "reciprocal":
            t0 = float(params["t0"])
            f = 1.0 / (t + t0)
            W = ex.log(t + t0)
            params = {"t0": t0}
        elif family == "custom":
            f, W = params["f"], params["W"]
            if not (isinstance(f, ex.Expr) and isinstance(W, ex.Expr)):
                raise InvalidParam("custom family needs expressions f and W")
            if not (f.symbols() | W.symbols()) <= {0}:
                raise InvalidParam("f and W may depend on t only")
            params = {"f": str(f), "W": str(W)}
        else:
            raise InvalidParam(f"unknown f-family {family!r}; expected one of {FAMILIES}")
    except KeyError as err:
        raise InvalidParam(f"missing parameter {err.args[0]!r} for family {family!r}") from None
    return KenmotsuFunction(family, params, f, W)


@dataclass
class ContactStructure:
    phi: object
    xi: object
    eta: object
    g: MetricField


@dataclass
class KenmotsuModel(Model):
    kfun: KenmotsuFunction = None
    fiber: str = "flat"
    k: float = 0.0
    regularity_margin: float = float("nan")

    @property
    def regular(self):
        return self.regularity_margin > REGULARITY_THRESHOLD


# --------------------------------------------------------------------------
# builders

def _names(m):
    return ("t",) + tuple(f"x{i}" for i in range(1, m))


def _standard_structure(m, g, fiber_phi):
    zeros = [0.0] * (m - 1)
    xi = vector_field([1.0] + zeros, "xi")
    eta = one_form([1.0] + zeros, "eta")
    return ContactStructure(tensor11(fiber_phi, "phi"), xi, eta, g)


def _flat_complex_structure(m):
    phi = [[0.0] * m for _ in range(m)]
    for a in range((m - 1) // 2):
        i, j = 1 + 2 * a, 2 + 2 * a
        phi[j][i] = 1.0   # phi(d/dx_i) = d/dx_j
        phi[i][j] = -1.0
    return phi


def _eta_eta(m):
    comps = [[0.0] * m for _ in range(m)]
    comps[0][0] = 1.0
    return sym_tensor2(comps, "eta_eta")


def _default_box(m, t_interval):
    box = np.array([[-1.0, 1.0]] * m)
    box[0] = t_interval
    return box


def _bounds(box, kfun):
    bounds = box + np.array([-BOUNDS_MARGIN, BOUNDS_MARGIN])
    if kfun is not None and kfun.family == "reciprocal":
        bounds[0, 0] = max(bounds[0, 0], -kfun.params["t0"] + 1e-3)
    return bounds


def _regularity_margin(kfun, t_interval, grid=257):
    ts = np.linspace(t_interval[0], t_interval[1], grid)
    f, df = kfun.values(ts, 1)
    return float(np.min(np.abs(f * f + df)))


def _check_function(kfun, t_interval, grid=257):
    ts = np.linspace(t_interval[0], t_interval[1], grid)
    try:
        f = ex.evaluate(kfun.f, ts[:, None])
        dW = ex.eval_jet(kfun.W, ts[:, None], 1).d1[:, 0]
    except ex.DomainError as err:
        raise InvalidParam(f"f or W undefined on the t-interval: {err}") from None
    if np.any(f <= 0):
        raise InvalidParam(f"f must be strictly positive on {tuple(t_interval)}")
    resid = np.max(np.abs(dW - f) / np.maximum(1.0, np.abs(f)))
    if resid > 1e-12:
        raise InvalidParam(f"warp potential is not an antiderivative of f (residual {resid:.2e})")


def build_f_kenmotsu(n, family, t_interval=(0.0, 1.0), fiber="flat", k=None, box=None,
                     name="f_kenmotsu"):
    """Warped-product f-Kenmotsu model over a flat or curved Kähler fiber.

    Parameters
    ----------
    n : int
        Half the fiber dimension; the model has dimension ``2n + 1``.
    family : KenmotsuFunction or dict
        The function f; a dict is passed to :func:`kenmotsu_function`.
    t_interval : pair of float
        Range of the ``t`` coordinate in the sampling box.
    fiber : {"flat", "curved"}
        ``"curved"`` uses ``dx^2 + exp(2 sqrt(-k) x) dy^2`` (n = 1, k < 0).
    """
    if int(n) != n or n < 1:
        raise InvalidParam(f"n must be a positive integer, got {n}")
    n = int(n)
    kfun = family if isinstance(family, KenmotsuFunction) else kenmotsu_function(**family)
    t_interval = tuple(float(v) for v in t_interval)
    if t_interval[0] > t_interval[1]:
        raise InvalidParam("empty t-interval")
    _check_function(kfun, t_interval)
    m = 2 * n + 1
    warp = ex.exp(2.0 * kfun.W)
    metric = [[0.0] * m for _ in range(m)]
    metric[0][0] = 1.0
    if fiber == "flat":
        for i in range(1, m):
            metric[i][i] = warp
        phi = _flat_complex_structure(m)
        k = 0.0
    elif fiber == "curved":
        if n != 1:
            raise InvalidParam("curved fibers are only available for n = 1")
        if k is None or k >= 0:
            raise InvalidParam("curved fiber needs curvature k < 0")
        c = math.sqrt(-float(k))
        x1 = ex.sym(1, "x1")
        metric[1][1] = warp
        metric[2][2] = warp * ex.exp(2.0 * c * x1)
        phi = [[0.0, 0.0, 0.0],
               [0.0, 0.0, -ex.exp(c * x1)],
               [0.0, ex.exp(-c * x1), 0.0]]
        k = float(k)
    else:
        raise InvalidParam(f"unknown fiber kind {fiber!r}")
    g = MetricField(metric)
    structure = _standard_structure(m, g, phi)
    box = _default_box(m, t_interval) if box is None else np.asarray(box, dtype=float)
    chart = Chart(_names(m), box, _bounds(box, kfun))
    params = {"n": n, "family": kfun.family, **kfun.params, "fiber": fiber,
              "t_interval": list(t_interval)}
    if fiber == "curved":
        params["k"] = k
    return KenmotsuModel(name=name, chart=chart, metric=g, structure=structure,
                         fields={"g": g, "eta_eta": _eta_eta(m)}, params=params,
                         kfun=kfun, fiber=fiber, k=k,
                         regularity_margin=_regularity_margin(kfun, t_interval))


def build_beta_kenmotsu(n, beta, fiber="flat", k=None, t_interval=(-1.0, 1.0)):
    """beta-Kenmotsu model; beta = 1 and a flat fiber gives hyperbolic space."""
    if not beta > 0:
        raise InvalidParam(f"beta must be positive, got {beta}")
    if fiber == "curved" and n != 1:
        raise InvalidParam("curved fibers are only available for n = 1")
    return build_f_kenmotsu(n, kenmotsu_function("constant", beta=beta), t_interval,
                            fiber=fiber, k=k, name="beta_kenmotsu")


def build_flat(m=3):
    """Euclidean space with the cosymplectic structure; every constant tensor is parallel."""
    if m < 3 or m % 2 == 0:
        raise InvalidParam("flat model needs odd m >= 3")
    eye = [[1.0 if i == j else 0.0 for j in range(m)] for i in range(m)]
    g = MetricField(eye)
    box = np.array([[-1.0, 1.0]] * m)
    chart = Chart(_names(m), box, _bounds(box, None))
    fields = {"g": g, "eta_eta": _eta_eta(m)}
    for a in range(m):
        for b in range(a, m):
            comps = [[0.0] * m for _ in range(m)]
            comps[a][b] = comps[b][a] = 1.0
            fields[f"e{a}{b}"] = sym_tensor2(comps, f"e{a}{b}")
    return Model("flat", chart, g, _standard_structure(m, g, _flat_complex_structure(m)),
                 fields, {"m": m})


def build_product_h2xr():
    """``dt^2 + (dx1^2 + exp(2 x1) dx2^2)``: the line times the hyperbolic plane."""
    x1 = ex.sym(1, "x1")
    h = ex.exp(2.0 * x1)
    g = MetricField([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, h]])
    box = np.array([[-1.0, 1.0]] * 3)
    chart = Chart(_names(3), box, _bounds(box, None))
    g_h2 = sym_tensor2([[0.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, h]], "g_h2")
    phi = [[0.0, 0.0, 0.0], [0.0, 0.0, -ex.exp(x1)], [0.0, ex.exp(-1.0 * x1), 0.0]]
    # eta_eta is dt^2, the metric of the line factor
    fields = {"g": g, "eta_eta": _eta_eta(3), "g_h2": g_h2}
    return Model("product_h2xr", chart, g, _standard_structure(3, g, phi), fields, {})


CATALOG = ("beta_kenmotsu", "f_kenmotsu", "hyperbolic", "product_h2xr", "flat")


def build_model(name, **params):
    """Catalog entry point used by the CLI."""
    if name == "beta_kenmotsu":
        return build_beta_kenmotsu(params.get("n", 1), params.get("beta", 1.0),
                                   params.get("fiber", "flat"), params.get("k"),
                                   params.get("t_interval", (-1.0, 1.0)))
    if name == "hyperbolic":
        model = build_beta_kenmotsu(params.get("n", 1), 1.0)
        model.name = "hyperbolic"
        return model
    if name == "f_kenmotsu":
        if "family" not in params:
            raise InvalidParam("f_kenmotsu needs a family specification")
        return build_f_kenmotsu(params.get("n", 1), params["family"],
                                params.get("t_interval", (0.0, 1.0)),
                                params.get("fiber", "flat"), params.get("k"))
    if name == "flat":
        return build_flat(params.get("m", 3))
    if name == "product_h2xr":
        return build_product_h2xr()
    raise InvalidParam(f"unknown model {name!r}; expected one of {CATALOG}")


# --------------------------------------------------------------------------
# verifiers

@dataclass
class ResidualReport:
    """Maximum residual per named check, plus auxiliary values."""

    residuals: dict
    values: dict = field(default_factory=dict)

    def max(self):
        return max(self.residuals.values()) if self.residuals else 0.0


def _samples(model, samples, seed):
    rng = np.random.default_rng(seed)
    return model.chart.sample(samples, rng)


@dataclass
class _StructureValues:
    g: np.ndarray
    phi: np.ndarray
    xi: np.ndarray
    eta: np.ndarray


def _structure_values(model, pts):
    st = model.structure
    if st is None:
        raise NotApplicable(f"model {model.name!r} carries no almost contact structure")
    return _StructureValues(st.g.values(pts), st.phi.values(pts), st.xi.values(pts),
                            st.eta.values(pts))


def verify_structure(model, samples=100, seed=0):
    """Residuals of the six almost contact metric axioms (coordinate components)."""
    pts = _samples(model, samples, seed)
    s = _structure_values(model, pts)
    m = model.m
    eye = np.eye(m)
    phi2 = np.einsum("...ik,...kj->...ij", s.phi, s.phi)
    res = {
        "phi_squared": phi2 - (-eye + np.einsum("...i,...j->...ij", s.xi, s.eta)),
        "eta_xi": np.einsum("...i,...i->...", s.eta, s.xi) - 1.0,
        "eta_phi": np.einsum("...k,...kj->...j", s.eta, s.phi),
        "phi_xi": np.einsum("...ij,...j->...i", s.phi, s.xi),
        "eta_is_g_xi": s.eta - np.einsum("...ij,...j->...i", s.g, s.xi),
        "compatible_metric": (np.einsum("...pi,...pq,...qj->...ij", s.phi, s.g, s.phi)
                              - (s.g - np.einsum("...i,...j->...ij", s.eta, s.eta))),
    }
    return ResidualReport({k: float(np.max(np.abs(v))) for k, v in res.items()})


def _f_data(model, pts):
    """f and its coordinate differential at the points."""
    jet = ex.eval_jet(model.kfun.f, pts, 1)
    f = np.broadcast_to(jet.v, pts.shape[:-1])
    return f, np.broadcast_to(jet.derivative(1), pts.shape)


def verify_kenmotsu_identities(model, samples=100, seed=0):
    """Max residuals of the Kenmotsu equation and its curvature consequences.

    Each identity is compared as a full tensor in a g-orthonormal frame, so
    the residual bounds the discrepancy along every unit direction.
    """
    if getattr(model, "kfun", None) is None:
        raise NotApplicable("identity checks need an f-Kenmotsu model")
    pts = _samples(model, samples, seed)
    s = _structure_values(model, pts)
    b = curvature(model.metric, pts, nabla=False)
    n = model.n
    f, df = _f_data(model, pts)
    fe = f[:, None]
    st = model.structure
    phi_j = st.phi.jets(pts, 1)
    xi_j = st.xi.jets(pts, 1)
    nphi = covariant_from_partials(phi_j[0], phi_j[1], b.gamma, "ud")
    nxi = covariant_from_partials(xi_j[0], xi_j[1], b.gamma, "u")
    g, eta, xi, phi = s.g, s.eta, s.xi, s.phi
    m = model.m
    eye = np.broadcast_to(np.eye(m), g.shape)

    # (nabla_a phi)^k_j = f (g(phi e_a, e_j) xi^k - eta_j phi^k_a)
    phig = np.einsum("...pa,...pj->...aj", phi, g)
    exp_phi = f[:, None, None, None] * (np.einsum("...aj,...k->...akj", phig, xi)
                                        - np.einsum("...j,...ka->...akj", eta, phi))
    # nabla_a xi = f (e_a - eta_a xi)
    exp_xi = fe[..., None] * (eye - np.einsum("...a,...k->...ak", eta, xi))
    # R(e_i, e_j) xi
    Rxi = np.einsum("...ijkl,...k->...ijl", b.R, xi)
    phi2 = np.einsum("...ik,...kj->...ij", phi, phi)
    exp_R = ((f * f)[:, None, None, None] * (np.einsum("...i,...jl->...ijl", eta, eye)
                                             - np.einsum("...j,...il->...ijl", eta, eye))
             + np.einsum("...j,...li->...ijl", df, phi2)
             - np.einsum("...i,...lj->...ijl", df, phi2))
    S_xixi = np.einsum("...i,...ij,...j->...", xi, b.S, xi)
    xif = np.einsum("...i,...i->...", xi, df)
    exp_Sxixi = -2 * n * (f * f + xif)
    Qxi = np.einsum("...ij,...j->...i", b.Q, xi)
    grad_f = np.einsum("...ij,...j->...i", b.ginv, df)
    exp_Q = (-2 * n * (f * f)[:, None] * xi - xif[:, None] * xi - (2 * n - 1) * grad_f)

    res = {
        "kenmotsu_equation": frame_max(nphi - exp_phi, g, "dud"),
        "nabla_xi": frame_max(nxi - exp_xi, g, "du"),
        "curvature_xi": frame_max(Rxi - exp_R, g, "ddu"),
        "ricci_xi_xi": float(np.max(np.abs(S_xixi - exp_Sxixi))),
        "ricci_operator_xi": frame_max(Qxi - exp_Q, g, "u"),
    }
    values = {"S_xi_xi": S_xixi, "S_xi_xi_formula": exp_Sxixi}
    return ResidualReport(res, values)


def verify_dim3_ricci(model, samples=100, seed=0):
    """Residual of the three-dimensional Ricci formula in terms of r and f."""
    if model.m != 3:
        raise DimensionError("the three-dimensional Ricci formula needs n = 1")
    if getattr(model, "kfun", None) is None:
        raise NotApplicable("needs an f-Kenmotsu model")
    pts = _samples(model, samples, seed)
    s = _structure_values(model, pts)
    b = curvature(model.metric, pts, nabla=False)
    f, df = _f_data(model, pts)
    xif = np.einsum("...i,...i->...", s.xi, df)
    r = b.r
    ee = np.einsum("...i,...j->...ij", s.eta, s.eta)
    mixed = np.einsum("...i,...j->...ij", s.eta, df)
    formula = ((r / 2 + xif + f * f)[:, None, None] * s.g
               - (r / 2 + xif + 3 * f * f)[:, None, None] * ee
               - mixed - np.swapaxes(mixed, -1, -2))
    return ResidualReport({"dim3_ricci": frame_max(b.S - formula, s.g, "dd")},
                          {"r": r})


@dataclass
class EtaEinsteinFit:
    a: np.ndarray
    b: np.ndarray
    r: np.ndarray
    residual: float
    a_formula_residual: float = None
    b_formula_residual: float = None

    @property
    def b_spread(self):
        return float(np.max(self.b) - np.min(self.b))


def eta_einstein_fit(model, samples=100, seed=0):
    """Pointwise least-squares fit ``S = a g + b eta(x)eta`` in an orthonormal frame.

    For Kenmotsu models (f = 1) the fitted coefficients are also compared
    against ``a = r/2n + 1`` and ``b = -(r/2n + 2n + 1)``.
    """
    pts = _samples(model, samples, seed)
    s = _structure_values(model, pts)
    b = curvature(model.metric, pts, nabla=False)
    F = orthonormal_frame(s.g)
    S_o = to_frame(b.S, F, "dd")
    g_o = to_frame(s.g, F, "dd")
    e_o = to_frame(np.einsum("...i,...j->...ij", s.eta, s.eta), F, "dd")
    A = np.stack([g_o.reshape(len(pts), -1), e_o.reshape(len(pts), -1)], axis=-1)
    rhs = S_o.reshape(len(pts), -1)
    coef = np.array([np.linalg.lstsq(A[i], rhs[i], rcond=None)[0] for i in range(len(pts))])
    a, bb = coef[:, 0], coef[:, 1]
    fit = a[:, None, None] * g_o + bb[:, None, None] * e_o
    out = EtaEinsteinFit(a, bb, b.r, float(np.max(np.abs(S_o - fit))))
    kf = getattr(model, "kfun", None)
    if kf is not None and kf.is_kenmotsu():
        n = model.n
        out.a_formula_residual = float(np.max(np.abs(a - (b.r / (2 * n) + 1))))
        out.b_formula_residual = float(np.max(np.abs(bb + (b.r / (2 * n) + 2 * n + 1))))
    return out


def fiber_rotation(model):
    """``x1 d/dx2 - x2 d/dx1``; Killing whenever the first fiber plane is Euclidean."""
    if getattr(model, "fiber", None) != "flat" and model.name != "flat":
        raise NotApplicable(f"fiber rotation needs a flat fiber, model {model.name!r}")
    m = model.m
    comps = [ex.ZERO] * m
    comps[1] = ex.neg(ex.sym(2, model.chart.names[2]))
    comps[2] = ex.sym(1, model.chart.names[1])
    return vector_field(comps, "fiber_rotation")
