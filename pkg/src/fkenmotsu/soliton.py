"""Ricci-soliton tensor ``L_V g + 2S`` and the Ricci-condition tests.

The soliton constant is measured two ways: from the ``(xi, xi)`` slot,
``lambda_xi = -alpha(xi, xi) / (2 g(xi, xi))``, and as the global least-squares
``lambda*`` minimizing ``|alpha + 2 lambda g|`` over the samples. Norms and
"max component" figures are taken in g-orthonormal frames.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateRicci, DimensionError, NotApplicable
from .geometry import (TensorField, covariant_from_partials, curvature, frame_max,
                       lie_metric_jet, orthonormal_frame, to_frame)
from .kenmotsu import ResidualReport, _f_data, eta_einstein_fit, fiber_rotation

STEADY_BAND = 1e-9


def classify(lam, band=STEADY_BAND):
    if abs(lam) < band:
        return "steady"
    return "expanding" if lam > 0 else "shrinking"


def resolve_field(model, V):
    """``'xi'``, ``'zero'`` / ``None``, ``'fiber_rotation'`` or an explicit vector field."""
    if isinstance(V, TensorField):
        if V.kinds != "u":
            raise ValueError("V must be a vector field")
        return V
    if V in (None, "zero", "0"):
        return TensorField([0.0] * model.m, "u", "zero")
    if V == "xi":
        if model.structure is None:
            raise NotApplicable("model has no Reeb field xi")
        return model.structure.xi
    if V == "fiber_rotation":
        return fiber_rotation(model)
    raise ValueError(f"unknown vector field {V!r}")


def _samples(model, samples, seed):
    return model.chart.sample(samples, np.random.default_rng(seed))


def _alpha_data(model, V, pts):
    b = curvature(model.metric, pts, nabla=True)
    L, dL = lie_metric_jet(V, model.metric, pts)
    alpha = L + 2.0 * b.S
    nabla_alpha = covariant_from_partials(L, dL, b.gamma, "dd") + 2.0 * b.nabla_S
    return b, alpha, nabla_alpha


def soliton_tensor(model, V, p):
    """Components of ``alpha = L_V g + 2S`` at ``p``."""
    V = resolve_field(model, V)
    p = np.asarray(p, dtype=float)
    b = curvature(model.metric, p, nabla=False)
    L, _ = lie_metric_jet(V, model.metric, p, with_derivative=False)
    return L + 2.0 * b.S


@dataclass
class SolitonReport:
    V: str
    alpha: np.ndarray
    lambda_xi: float
    lambda_xi_spread: float
    lambda_star: float
    residual_star: float
    residual_xi: float
    nabla_alpha_max: float
    r_spread: float
    lambda_xi_points: np.ndarray = field(default=None, repr=False)

    @property
    def classification(self):
        """Class of the constant read off the ``(xi, xi)`` slot."""
        return classify(self.lambda_xi)

    @property
    def classification_star(self):
        return classify(self.lambda_star)


def solve_lambda(model, V="xi", samples=100, seed=0):
    """Measure the soliton constant of ``(g, V)``; the residual says whether it is exact."""
    name = V if isinstance(V, str) else getattr(V, "name", "custom")
    Vf = resolve_field(model, V)
    pts = _samples(model, samples, seed)
    b, alpha, nabla_alpha = _alpha_data(model, Vf, pts)
    g = b.g
    m = model.m
    xi = model.structure.xi.values(pts)
    a_xx = np.einsum("...i,...ij,...j->...", xi, alpha, xi)
    g_xx = np.einsum("...i,...ij,...j->...", xi, g, xi)
    lam_pts = -0.5 * a_xx / g_xx
    tr = np.einsum("...ij,...ji->...", b.ginv, alpha)
    lam_star = float(-np.mean(tr) / (2.0 * m)) + 0.0
    lam_xi = float(np.mean(lam_pts))
    resid_star = frame_max(alpha + 2.0 * lam_star * g, g, "dd")
    resid_xi = frame_max(alpha + 2.0 * lam_xi * g, g, "dd")
    r = np.abs(b.r)
    return SolitonReport(
        V=name, alpha=alpha, lambda_xi=lam_xi,
        lambda_xi_spread=float(np.max(lam_pts) - np.min(lam_pts)),
        lambda_star=lam_star, residual_star=resid_star, residual_xi=resid_xi,
        nabla_alpha_max=frame_max(nabla_alpha, g, "ddd"),
        r_spread=float(np.max(r) - np.min(r)),
        lambda_xi_points=lam_pts,
    )


ALPHA_FORMULAS = ("alpha_dim3", "alpha_dim3_beta", "nabla_alpha_dim3_beta",
                  "alpha_eta_einstein", "nabla_alpha_eta_einstein")


def _applicable(model, samples, seed):
    kf = getattr(model, "kfun", None)
    if kf is None:
        return {}
    out = {}
    dim3 = model.m == 3
    const_f = kf.family == "constant"
    out["alpha_dim3"] = dim3
    out["alpha_dim3_beta"] = dim3 and const_f
    out["nabla_alpha_dim3_beta"] = dim3 and const_f
    eta_ok = False
    if kf.is_kenmotsu():
        fit = eta_einstein_fit(model, samples, seed)
        eta_ok = fit.residual < 1e-8 and fit.b_spread < 1e-8
    out["alpha_eta_einstein"] = eta_ok
    out["nabla_alpha_eta_einstein"] = eta_ok
    return out


def verify_alpha_formulas(model, samples=100, seed=0, which=None):
    """Compare ``alpha = L_xi g + 2S`` and its derivative with the closed forms.

    ``which`` restricts the check to the named formulas (see
    ``ALPHA_FORMULAS``); requesting one whose hypotheses fail raises
    :class:`DimensionError` (dimension) or :class:`NotApplicable`.
    """
    ok = _applicable(model, samples, seed)
    if which is None:
        which = [k for k in ALPHA_FORMULAS if ok.get(k)]
        if not which:
            raise NotApplicable(f"no alpha formula applies to model {model.name!r}")
    for k in which:
        if k not in ALPHA_FORMULAS:
            raise ValueError(f"unknown formula {k!r}")
        if not ok.get(k):
            if k.endswith("dim3") or k.endswith("dim3_beta"):
                if model.m != 3:
                    raise DimensionError(f"{k} needs a three-dimensional model")
            raise NotApplicable(f"{k} does not apply to model {model.name!r}")
    pts = _samples(model, samples, seed)
    st = model.structure
    b, alpha, nabla_alpha = _alpha_data(model, st.xi, pts)
    g = b.g
    eta = st.eta.values(pts)
    f_v, df = _f_data(model, pts)
    f = f_v[:, None, None]
    xi = st.xi.values(pts)
    xif = np.einsum("...i,...i->...", xi, df)[:, None, None]
    r = b.r[:, None, None]
    ee = np.einsum("...i,...j->...ij", eta, eta)
    G = g - ee
    n = model.n
    res = {}
    if "alpha_dim3" in which:
        mixed = np.einsum("...i,...j->...ij", eta, df)
        form = ((r + 2 * xif + 2 * f + 2 * f * f) * g - (r + 2 * xif + 2 * f + 6 * f * f) * ee
                - 2 * mixed - 2 * np.swapaxes(mixed, -1, -2))
        res["alpha_dim3"] = frame_max(alpha - form, g, "dd")
    if "alpha_dim3_beta" in which or "nabla_alpha_dim3_beta" in which:
        beta = model.kfun.params["beta"]
        if "alpha_dim3_beta" in which:
            form = (r + 2 * beta + 2 * beta ** 2) * G - 4 * beta ** 2 * ee
            res["alpha_dim3_beta"] = frame_max(alpha - form, g, "dd")
        if "nabla_alpha_dim3_beta" in which:
            coef = beta * (b.r + 2 * beta + 6 * beta ** 2)[:, None, None, None]
            form = (np.einsum("...z,...xy->...zxy", b.dr, G)
                    - coef * (np.einsum("...x,...yz->...zxy", eta, G)
                              + np.einsum("...y,...xz->...zxy", eta, G)))
            res["nabla_alpha_dim3_beta"] = frame_max(nabla_alpha - form, g, "ddd")
    if "alpha_eta_einstein" in which:
        form = (r / n + 4) * g - (r / n + 4 + 4 * n) * ee
        res["alpha_eta_einstein"] = frame_max(alpha - form, g, "dd")
    if "nabla_alpha_eta_einstein" in which:
        coef = (b.r / n + 4 * n + 4)[:, None, None, None]
        form = (np.einsum("...z,...xy->...zxy", b.dr, G) / n
                - coef * (np.einsum("...y,...xz->...zxy", eta, G)
                          + np.einsum("...x,...yz->...zxy", eta, G)))
        res["nabla_alpha_eta_einstein"] = frame_max(nabla_alpha - form, g, "ddd")
    return ResidualReport(res, {"r": b.r})


@dataclass
class SWRSReport:
    rho: np.ndarray          # coordinate components per point
    residual: float
    rho_norm_max: float
    xi_residual: float
    ricci_rank: int
    per_point_residual: np.ndarray = field(default=None, repr=False)


def _swrs_system(S):
    m = S.shape[-1]
    eye = np.eye(m)
    M = (2 * np.einsum("ap,bc->abcp", eye, S) + np.einsum("bp,ca->abcp", eye, S)
         + np.einsum("cp,ab->abcp", eye, S))
    return M.reshape(m ** 3, m)


def swrs_test(model, samples=100, seed=0, rank_tol=1e-10):
    """Pointwise least-squares 1-form for the weak Ricci-symmetry condition.

    Solves ``(nabla_X S)(Y, Z) = 2 rho(X) S(Y, Z) + rho(Y) S(Z, X) + rho(Z) S(X, Y)``
    over all frame triples at each sample.

    Raises
    ------
    DegenerateRicci
        When S is numerically singular at a sample.
    """
    pts = _samples(model, samples, seed)
    b = curvature(model.metric, pts, nabla=True)
    F = orthonormal_frame(b.g)
    S_o = to_frame(b.S, F, "dd")
    nS_o = to_frame(b.nabla_S, F, "ddd")
    eig = np.abs(np.linalg.eigvalsh(S_o))
    scale = max(1.0, float(np.max(eig)))
    ranks = np.sum(eig > rank_tol * scale, axis=-1)
    if np.any(ranks < model.m):
        raise DegenerateRicci(f"Ricci tensor is singular (rank {int(ranks.min())} "
                              f"of {model.m}); rho is not identifiable", int(ranks.min()))
    rho_o = np.empty((len(pts), model.m))
    resid = np.empty(len(pts))
    for i in range(len(pts)):
        M = _swrs_system(S_o[i])
        rhs = nS_o[i].ravel()
        sol = np.linalg.lstsq(M, rhs, rcond=None)[0]
        rho_o[i] = sol
        resid[i] = np.max(np.abs(M @ sol - rhs))
    rho = np.einsum("...ka,...a->...k", np.swapaxes(np.linalg.inv(F), -1, -2), rho_o)
    xi_eq = np.nan
    if model.structure is not None:
        st = model.structure
        xi_j = st.xi.jets(pts, 1)
        xi = xi_j[0]
        nxi = covariant_from_partials(xi_j[0], xi_j[1], b.gamma, "u")
        xi_xi = np.einsum("...a,...ak->...k", xi, nxi)
        S_xx = np.einsum("...i,...ij,...j->...", xi, b.S, xi)
        d_Sxx = (np.einsum("...a,...aij,...i,...j->...", xi, b.nabla_S, xi, xi)
                 + 2 * np.einsum("...i,...ij,...j->...", xi_xi, b.S, xi))
        rho_xi = np.einsum("...k,...k->...", rho, xi)
        xi_eq = float(np.max(np.abs(d_Sxx - 4 * rho_xi * S_xx)))
    return SWRSReport(rho, float(np.max(resid)), float(np.max(np.linalg.norm(rho_o, axis=-1))),
                      xi_eq, int(ranks.min()), resid)


def ricci_semisymmetry_test(model, samples=100, seed=0):
    """Max frame component of ``R(X, Y) . S`` and the Einstein-fit residual."""
    pts = _samples(model, samples, seed)
    b = curvature(model.metric, pts, nabla=False)
    T = -(np.einsum("...ijkp,...pl->...ijkl", b.R, b.S)
          + np.einsum("...ijlp,...kp->...ijkl", b.R, b.S))
    einstein = b.S - (b.r / model.m)[:, None, None] * b.g
    return ResidualReport({"semisymmetry": frame_max(T, b.g, "dddd"),
                           "einstein": frame_max(einstein, b.g, "dd")})


def scalar_constancy(model, samples=100, seed=0):
    """Largest coordinate gradient norm of the scalar curvature."""
    pts = _samples(model, samples, seed)
    b = curvature(model.metric, pts, nabla=True)
    return float(np.max(np.linalg.norm(b.dr, axis=-1)))
