import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import CATALOG, model, parallel
from fkenmotsu import eisenhart as eh
from fkenmotsu.errors import GapTooSmall
from fkenmotsu.geometry import Model, curvature, orthonormal_frame


def test_sym_dimensions():
    assert [eh.sym_dim(m) for m in (3, 5, 7)] == [6, 15, 28]
    assert eh.max_sqfi_nonflat(3) == 2
    assert eh.max_sqfi_nonflat(5) == 7
    assert eh.max_sqfi_nonflat(7) == 16


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.sampled_from([3, 5]))
def test_sym_vectorization_is_isometric(seed, m):
    A = np.random.default_rng(seed).standard_normal((m, m))
    S = A + A.T
    v = eh.vec_sym(S[None])[0]
    assert np.linalg.norm(v) == pytest.approx(np.linalg.norm(S))
    np.testing.assert_allclose(eh.unvec_sym(v[None], m)[0], S, atol=1e-12)


def test_metric_satisfies_every_constraint():
    # frame curvature operators are antisymmetric, so the identity tensor is annihilated
    M = model("affine_exp")
    p = M.chart.center
    C = eh.curvature_constraints(M, p, include_nabla=True)
    g = eh.vec_sym(np.eye(3)[None])[0]
    assert np.max(np.abs(C.rows @ g)) < 1e-12


@pytest.mark.parametrize("key", CATALOG + ("reciprocal",))
def test_only_the_metric_is_parallel(key):
    rep = parallel(key)
    assert rep.dimension == 1
    assert rep.gap_ratio >= 1e6
    assert rep.metric_deviation() < 1e-8
    assert max(rep.transport_residuals) < 1e-6
    assert str(eh.reducibility_verdict(rep)) == "irreducible"


def test_flat_control():
    rep = parallel("flat3")
    assert rep.dimension == 6 and rep.gap_ratio == float("inf")
    assert str(eh.reducibility_verdict(rep)) == "reducible(6)"


def test_product_control():
    rep = parallel("h2xr")
    assert rep.dimension == 2 and rep.gap_ratio >= 1e6
    v = eh.reducibility_verdict(rep)
    assert not v.irreducible and v.witnesses.shape == (1, 3, 3)
    # the witness splits off the line factor dt^2
    W = v.witnesses[0] / np.max(np.abs(v.witnesses[0]))
    g = rep.metric_at_base
    eig = np.linalg.eigvals(np.linalg.solve(g, W))
    assert len(np.unique(np.round(eig.real, 8))) == 2


def test_basis_point_invariance():
    M = model("curved")
    a = eh.parallel_space(M, basepoint=np.array([0.3, -0.2, 0.5]), seed=4)
    assert a.dimension == parallel("curved").dimension


def test_rescaled_metric_same_dimension():
    base = model("h2xr")
    scaled = Model("scaled", base.chart, base.metric.scaled(4.0), None, {}, {})
    assert eh.parallel_space(scaled, seed=2).dimension == 2


def test_constraints_only_shrink_the_space():
    M = model("H3")
    local = eh.parallel_space(M, remote_samples=0, seed=0, verify=False)
    full = parallel("H3")
    assert local.dimension >= full.dimension


def test_base_curvature_alone_on_product():
    M = model("h2xr")
    p = M.chart.center
    C = eh.curvature_constraints(M, p)
    null, *_ = eh._nullspace(C.rows, 6, eh.NULL_RTOL)
    assert len(null) == 2


def test_sqfi_count():
    c = eh.sqfi_count(model("H3"), seed=1)
    assert c.count == 1 and c.nonflat_cap == 2 and c.flat_cap == 6
    assert c.below_nonflat_cap


def test_gap_too_small():
    with pytest.raises(GapTooSmall):
        eh.parallel_space(model("H3"), seed=1, min_gap=1e30, verify=False)


def test_realize_basis_product():
    M = model("h2xr")
    fields, worst = eh.realize_basis(M, parallel("h2xr"))
    assert len(fields) == 2 and worst < 1e-10
    p = M.chart.sample(4, np.random.default_rng(0))
    # the realized tensors are parallel everywhere, not only at the base point
    from fkenmotsu.geometry import cov_deriv
    for f in fields:
        assert np.max(np.abs(cov_deriv(f, M.metric, p))) < 1e-10


def test_frame_constraints_use_orthonormal_frame():
    M = model("H3")
    p = M.chart.center
    b = curvature(M.metric, p, nabla=False)
    F = orthonormal_frame(b.g)
    ops = eh._in_frame(eh._curvature_ops(b.R), F)
    np.testing.assert_allclose(ops, -np.swapaxes(ops, -1, -2), atol=1e-12)
