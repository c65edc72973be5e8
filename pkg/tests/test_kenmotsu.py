import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CATALOG, model
from fkenmotsu import expr as ex
from fkenmotsu.errors import DimensionError, InvalidParam, NotApplicable
from fkenmotsu.geometry import curvature
from fkenmotsu.kenmotsu import (build_beta_kenmotsu, build_f_kenmotsu, build_model,
                                eta_einstein_fit, kenmotsu_function, verify_dim3_ricci,
                                verify_kenmotsu_identities, verify_structure)


@pytest.mark.parametrize("key", CATALOG + ("h2xr", "flat3", "reciprocal"))
def test_structure_axioms(key):
    assert verify_structure(model(key), samples=50).max() < 1e-12


def test_rescaled_metric_breaks_compatibility():
    M = build_beta_kenmotsu(1, 1.0)
    M.structure.g = M.metric.scaled(2.0)
    res = verify_structure(M, samples=10).residuals
    assert res["compatible_metric"] > 0.5
    assert res["eta_is_g_xi"] == pytest.approx(1.0)


@pytest.mark.parametrize("key", CATALOG + ("reciprocal",))
def test_kenmotsu_identities(key):
    rep = verify_kenmotsu_identities(model(key), samples=50)
    assert rep.max() < 1e-10, rep.residuals


def test_reeb_ricci_both_routes():
    rep = verify_kenmotsu_identities(model("affine_exp"), samples=30)
    np.testing.assert_allclose(rep.values["S_xi_xi"], rep.values["S_xi_xi_formula"], atol=1e-10)
    # f = 1 + e^{-t}/2 is not constant, so S(xi, xi) varies
    assert np.ptp(rep.values["S_xi_xi"]) > 1e-2


def test_hyperbolic_reeb_ricci():
    rep = verify_kenmotsu_identities(model("H5"), samples=10)
    np.testing.assert_allclose(rep.values["S_xi_xi"], -4.0, atol=1e-12)


def test_identities_need_kenmotsu_model():
    with pytest.raises(NotApplicable):
        verify_kenmotsu_identities(model("h2xr"))


@pytest.mark.parametrize("key", ["H3", "beta0.5", "beta2", "curved", "affine_exp", "reciprocal"])
def test_dim3_ricci_formula(key):
    assert verify_dim3_ricci(model(key), samples=50).max() < 1e-10


def test_dim3_scalar_curvature_values():
    r_flat = verify_dim3_ricci(model("H3"), samples=20).values["r"]
    np.testing.assert_allclose(r_flat, -6.0, atol=1e-12)
    r_beta = verify_dim3_ricci(model("beta2"), samples=20).values["r"]
    np.testing.assert_allclose(r_beta, -24.0, atol=1e-11)
    r_curved = verify_dim3_ricci(model("curved"), samples=20).values["r"]
    assert np.ptp(r_curved) > 1e-2


def test_dim3_formula_rejects_higher_dimension():
    with pytest.raises(DimensionError):
        verify_dim3_ricci(model("H5"))


def test_eta_einstein_coefficients_h5():
    fit = eta_einstein_fit(model("H5"), samples=20)
    assert fit.residual < 1e-12
    np.testing.assert_allclose(fit.a, -4.0, atol=1e-12)
    np.testing.assert_allclose(fit.b, 0.0, atol=1e-12)
    assert fit.a_formula_residual < 1e-12 and fit.b_formula_residual < 1e-12


def test_eta_einstein_curved_fiber_varies():
    fit = eta_einstein_fit(model("curved"), samples=20)
    assert fit.residual < 1e-10
    assert fit.b_spread > 1e-2
    assert fit.a_formula_residual < 1e-10


def test_regularity():
    assert model("H3").regular and model("affine_exp").regular
    rec = model("reciprocal")
    assert not rec.regular
    assert rec.regularity_margin < 1e-12


def test_is_kenmotsu():
    assert kenmotsu_function("constant", beta=1.0).is_kenmotsu()
    assert not kenmotsu_function("constant", beta=2.0).is_kenmotsu()
    assert not kenmotsu_function("exponential", a=1.0, c=1.0).is_kenmotsu()


@settings(max_examples=25, deadline=None)
@given(st.floats(0.1, 2.0), st.floats(-1.0, 1.0), st.floats(-2.0, 2.0).filter(lambda c: abs(c) > 0.1))
def test_families_have_matching_warp_potential(a, b, c):
    kf = kenmotsu_function("affine_exp", a=a + abs(b) + 0.1, b=b, c=c)
    ts = np.linspace(-1, 1, 11)[:, None]
    f = ex.evaluate(kf.f, ts)
    dW = ex.eval_jet(kf.W, ts, 1).d1[:, 0]
    np.testing.assert_allclose(dW, f, rtol=1e-12)


def test_custom_family():
    t = ex.sym(0, "t")
    M = build_f_kenmotsu(1, dict(family="custom", f=2.0 + ex.tanh(t), W=2.0 * t + ex.log(ex.exp(t) + ex.exp(-1.0 * t))))
    assert verify_kenmotsu_identities(M, samples=20).max() < 1e-10


@pytest.mark.parametrize("kwargs", [
    dict(family="constant", beta=-1.0),
    dict(family="affine_exp", a=-2.0, b=0.5, c=1.0),
    dict(family="exponential", a=1.0, c=0.0),
    dict(family="reciprocal"),
    dict(family="nope"),
])
def test_invalid_families(kwargs):
    with pytest.raises(InvalidParam):
        build_f_kenmotsu(1, kwargs)


def test_custom_family_with_wrong_potential():
    t = ex.sym(0, "t")
    with pytest.raises(InvalidParam):
        build_f_kenmotsu(1, dict(family="custom", f=1.0 + 0 * t + ex.exp(t), W=t))


def test_invalid_models():
    with pytest.raises(InvalidParam):
        build_beta_kenmotsu(1, 0.0)
    with pytest.raises(InvalidParam):
        build_beta_kenmotsu(2, 1.0, fiber="curved", k=-1.0)
    with pytest.raises(InvalidParam):
        build_beta_kenmotsu(1, 1.0, fiber="curved", k=1.0)
    with pytest.raises(InvalidParam):
        build_model("sphere")
    with pytest.raises(InvalidParam):
        build_model("f_kenmotsu")


def test_reciprocal_bounds_stay_in_domain():
    M = model("reciprocal")
    assert M.chart.bounds[0, 0] > -2.0
    # the metric stays finite and definite on the trusted region
    corner = M.chart.bounds[:, 0] + 1e-6
    curvature(M.metric, corner[None], nabla=False)
