import functools

import numpy as np
import pytest

from conftest import model, parallel
from fkenmotsu import dynamics as dy
from fkenmotsu.eisenhart import realize_basis
from fkenmotsu.errors import StepTooCoarse


@functools.lru_cache(maxsize=None)
def trace(key, count=5, seed=0):
    M = model(key)
    x0, v0 = dy.random_initial_data(M, count, np.random.default_rng(seed))
    basis, _ = realize_basis(M, parallel(key))
    fields = dict(M.fields)
    fields.update({f"parallel_{i}": b for i, b in enumerate(basis)})
    return dy.integrate_geodesic(M, x0, v0, fields=fields)


def test_flat_geodesics_are_lines():
    M = model("flat3")
    x0 = np.array([0.1, 0.2, -0.3])
    v0 = np.array([3.0, 0.0, 4.0])
    tr = dy.integrate_geodesic(M, x0, v0, T=2.0, h=1e-2)
    np.testing.assert_allclose(tr.x[-1, 0], x0 + 2.0 * v0 / 5.0, atol=1e-13)
    np.testing.assert_allclose(tr.v[:, 0], np.broadcast_to(v0 / 5.0, (len(tr.times), 3)), atol=1e-14)


def test_reeb_lines_are_geodesics():
    M = model("H3")
    x0 = np.array([-0.5, 0.3, 0.7])
    tr = dy.integrate_geodesic(M, x0, [1.0, 0.0, 0.0], T=3.0, h=1e-2)
    np.testing.assert_allclose(tr.x[:, 0, 0], -0.5 + tr.times, atol=1e-12)
    np.testing.assert_allclose(tr.x[:, 0, 1:], np.broadcast_to(x0[1:], (len(tr.times), 2)), atol=1e-14)


@pytest.mark.parametrize("key", ["H3", "affine_exp", "h2xr"])
def test_energy_conserved(key):
    tr = trace(key)
    assert tr.max_energy_drift < 1e-6
    assert dy.qfi_drift(tr, "g") < 1e-6
    assert np.all(np.diff(tr.times) > 0)


def test_energy_is_unit_after_normalization():
    tr = trace("H3")
    np.testing.assert_allclose(tr.energy[0], 1.0, atol=1e-14)


def test_product_block_is_conserved():
    tr = trace("h2xr")
    assert dy.qfi_drift(tr, "g_h2") < 1e-6
    assert dy.qfi_drift(tr, "eta_eta") < 1e-6


def test_eta_eta_not_conserved_on_hyperbolic():
    assert dy.qfi_drift(trace("H3"), "eta_eta") > 1e-3


@pytest.mark.parametrize("key", ["H3", "affine_exp", "h2xr"])
def test_parallel_basis_is_conserved(key):
    tr = trace(key)
    names = [k for k in tr.qfi if k.startswith("parallel_")]
    assert len(names) == parallel(key).dimension
    for k in names:
        assert dy.qfi_drift(tr, k) < 1e-6


def test_qfi_drift_accepts_fields():
    tr = trace("h2xr")
    M = model("h2xr")
    assert dy.qfi_drift(tr, M.fields["g_h2"]) == pytest.approx(dy.qfi_drift(tr, "g_h2"))


@pytest.mark.parametrize("key", ["H3", "curved", "affine_exp"])
def test_fourth_order_convergence(key):
    M = model(key)
    x0, v0 = dy.random_initial_data(M, 1, np.random.default_rng(7))
    assert dy.energy_convergence(M, x0, v0) >= 8.0


def test_coarse_step_rejected():
    M = model("curved")
    x0, v0 = dy.random_initial_data(M, 2, np.random.default_rng(1))
    with pytest.raises(StepTooCoarse):
        dy.integrate_geodesic(M, x0, v0, T=10.0, h=0.5)


def test_domain_exit_truncates():
    M = model("flat3")
    tr = dy.integrate_geodesic(M, np.zeros(3), [1.0, 0.0, 0.0], T=30.0, h=0.05)
    assert tr.truncated
    assert 13.0 <= tr.exit_time[0] <= 13.1
    assert np.all(M.chart.inside(tr.x[:, 0]))
    assert not tr.alive[-1, 0]


def test_bad_initial_data():
    M = model("H3")
    with pytest.raises(ValueError):
        dy.integrate_geodesic(M, np.zeros(3), np.zeros(3))
    with pytest.raises(ValueError):
        dy.integrate_geodesic(M, np.zeros(3), np.ones(3), h=0.0)
    with pytest.raises(ValueError):
        dy.integrate_geodesic(M, np.full(3, 100.0), np.ones(3))


@pytest.mark.parametrize("c", [1.0, 7.0])
def test_killing_type_metric(c):
    M = model("curved")
    rep = dy.killing_type_residual(M, M.metric.scaled(c), samples=20)
    assert rep.killing < 1e-10 and rep.sqfi < 1e-10


@pytest.mark.parametrize("key,beta", [("beta0.5", 0.5), ("H3", 1.0), ("beta2", 2.0)])
def test_eta_eta_not_special(key, beta):
    # nabla(eta x eta) = beta (G x eta + eta x G): unit frame component beta
    rep = dy.killing_type_residual(model(key), model(key).fields["eta_eta"], samples=20)
    assert rep.sqfi == pytest.approx(beta)
    assert rep.killing == pytest.approx(2 * beta)


def test_parallel_basis_killing_type():
    M = model("h2xr")
    basis, _ = realize_basis(M, parallel("h2xr"))
    for b in basis:
        rep = dy.killing_type_residual(M, b, samples=20)
        assert rep.killing < 1e-8 and rep.sqfi < 1e-8


@pytest.mark.parametrize("key", ["beta0.5", "H3", "H5", "affine_exp"])
def test_only_metric_passes_sqfi_gate(key):
    M = model(key)
    passing = [k for k, f in M.fields.items()
               if dy.killing_type_residual(M, f, samples=20).sqfi < 1e-8]
    assert passing == ["g"]


@pytest.mark.parametrize("key", ["H3", "beta2", "H5"])
def test_rotation_is_killing(key):
    rep = dy.conformal_fit(model(key), "fiber_rotation", samples=20)
    assert rep.residual < 1e-12 and rep.affine_residual < 1e-12
    assert rep.c == 0.0 and rep.killing_implies_zero is True


def test_reeb_field_not_conformal():
    rep = dy.conformal_fit(model("beta2"), "xi", samples=20)
    # L_xi g = 2 beta (g - eta x eta), so the trace fit gives c = 2 beta (m - 1) / m
    assert rep.c == pytest.approx(8.0 / 3.0)
    assert rep.residual > 1.0
    assert rep.c_xi == pytest.approx(0.0, abs=1e-12)
    assert rep.killing_implies_zero is None


def test_zero_field():
    rep = dy.conformal_fit(model("H3"), "zero", samples=5)
    assert rep.c == 0.0 and rep.residual == 0.0 and rep.affine_residual == 0.0


def test_homothety_on_flat():
    from fkenmotsu import expr as ex
    from fkenmotsu.geometry import vector_field
    M = model("flat3")
    X = vector_field([ex.sym(i) for i in range(3)])
    rep = dy.conformal_fit(M, X, samples=10)
    assert rep.c == pytest.approx(2.0) and rep.residual < 1e-12
    assert rep.affine_residual < 1e-12
