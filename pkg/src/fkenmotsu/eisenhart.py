"""Parallel symmetric (0,2) tensors and special quadratic first integrals.

A parallel symmetric tensor ``alpha`` is annihilated by every element of the
holonomy algebra acting as a derivation:

    alpha(A Z, W) + alpha(Z, A W) = 0.

At a base point ``p`` the algebra contains the curvature operators
``R(X, Y)``, their covariant derivatives ``(nabla_Z R)(X, Y)`` and the
curvature operators at other points pulled back to ``p`` by parallel
transport.  Stacking these linear conditions on ``Sym^2(T_p M)`` and taking
the numerical nullspace gives the candidate parallel tensors; each candidate
is then transported around closed loops as the sufficient check.

All linear algebra happens in a g-orthonormal frame at ``p`` so that the
singular values are scale-free. Symmetric tensors are vectorized with
``sqrt(2)`` weights on off-diagonal entries (an isometry for the Frobenius
inner product).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as ex
from .errors import GapTooSmall, TransportInconsistent
from .geometry import (TensorField, curvature, orthonormal_frame, parallel_transport,
                       rectangle_loop, segment_path)

NULL_RTOL = 1e-8
MIN_GAP = 1e6
LOOP_TOL = 1e-6
DEFAULT_REMOTE = 8
DEFAULT_LOOPS = 3
LOOP_FRACTION = 0.3


def sym_dim(m):
    return m * (m + 1) // 2


def max_sqfi_nonflat(m):
    """Largest number of independent special QFIs of a non-flat metric."""
    return 1 + (m - 2) * (m - 1) // 2


def sym_basis(m):
    """Orthonormal basis of Sym^2 as an array (N, m, m)."""
    out = []
    for a in range(m):
        E = np.zeros((m, m))
        E[a, a] = 1.0
        out.append(E)
    s = 1.0 / np.sqrt(2.0)
    for a in range(m):
        for b in range(a + 1, m):
            E = np.zeros((m, m))
            E[a, b] = E[b, a] = s
            out.append(E)
    return np.array(out)


def vec_sym(T):
    m = T.shape[-1]
    diag = [T[..., a, a] for a in range(m)]
    off = [np.sqrt(2.0) * T[..., a, b] for a in range(m) for b in range(a + 1, m)]
    return np.stack(diag + off, axis=-1)


def unvec_sym(v, m):
    return np.einsum("...n,nij->...ij", v, sym_basis(m))


@dataclass
class ConstraintMatrix:
    """Rows are linear functionals on vec(Sym^2) in the base orthonormal frame."""

    rows: np.ndarray
    tags: list

    @property
    def N(self):
        return self.rows.shape[1]

    def rank(self, rtol=NULL_RTOL):
        if self.rows.size == 0:
            return 0
        s = np.linalg.svd(self.rows, compute_uv=False)
        if s.size == 0 or s[0] == 0:
            return 0
        return int(np.sum(s > rtol * s[0]))


def derivation_rows(ops):
    """Constraint rows for a stack of endomorphisms ``ops[..., l, k]``.

    Each operator contributes the upper-triangular entries of
    ``A^T alpha + alpha A`` as functions of vec(alpha).
    """
    ops = np.asarray(ops).reshape((-1,) + np.shape(ops)[-2:])
    m = ops.shape[-1]
    E = sym_basis(m)
    C = np.einsum("opk,npl->onkl", ops, E) + np.einsum("nkp,opl->onkl", E, ops)
    iu = np.triu_indices(m)
    # (ops, N, pairs) -> (ops * pairs, N)
    rows = C[:, :, iu[0], iu[1]]
    return np.moveaxis(rows, 1, 2).reshape(-1, E.shape[0])


def _curvature_ops(R):
    """Operators R(e_i, e_j), i < j, as matrices [l, k]."""
    m = R.shape[-1]
    return np.array([np.swapaxes(R[..., i, j, :, :], -1, -2)
                     for i in range(m) for j in range(i + 1, m)])


def _in_frame(ops, F):
    # ops act on coordinate vectors; conjugate to the frame F
    return np.einsum("ab,...bc,cd->...ad", np.linalg.inv(F), ops, F)


def curvature_constraints(model, p, remote=None, transported_frames=None, include_nabla=False):
    """Holonomy constraints at ``p`` in the g-orthonormal frame of ``p``.

    ``remote`` holds extra points whose curvature operators are pulled back
    with ``transported_frames[q]`` (the base frame transported to ``q``).
    """
    p = np.asarray(p, dtype=float)
    b = curvature(model.metric, p[None], nabla=include_nabla)
    F = orthonormal_frame(b.g[0])
    blocks, tags = [], []
    ops = _in_frame(_curvature_ops(b.R[0]), F)
    rows = derivation_rows(ops)
    blocks.append(rows)
    tags += ["curvature_base"] * len(rows)
    if include_nabla:
        m = model.m
        nops = np.array([np.swapaxes(b.nabla_R[0, a, i, j], -1, -2)
                         for a in range(m) for i in range(m) for j in range(i + 1, m)])
        rows = derivation_rows(_in_frame(nops, F))
        blocks.append(rows)
        tags += ["nabla_curvature_base"] * len(rows)
    if remote is not None and len(remote):
        bq = curvature(model.metric, np.asarray(remote), nabla=False)
        for q in range(len(remote)):
            P = transported_frames[q]
            ops_q = np.einsum("ab,obc,cd->oad", np.linalg.inv(P), _curvature_ops(bq.R[q]), P)
            rows = derivation_rows(ops_q)
            blocks.append(rows)
            tags += [f"curvature_remote_{q}"] * len(rows)
    return ConstraintMatrix(np.vstack(blocks), tags)


@dataclass
class ParallelSpaceReport:
    dimension: int
    basis: np.ndarray            # (d, m, m) coordinate components at the base point
    basepoint: np.ndarray
    singular_values: np.ndarray
    smallest_retained: float
    largest_discarded: float
    transport_residuals: list
    m: int
    metric_at_base: np.ndarray = None
    tags: dict = field(default_factory=dict)

    @property
    def gap_ratio(self):
        if self.largest_discarded == 0.0:
            return float("inf")
        return self.smallest_retained / self.largest_discarded

    @property
    def flat_cap(self):
        return sym_dim(self.m)

    @property
    def nonflat_cap(self):
        return max_sqfi_nonflat(self.m)

    def metric_deviation(self):
        """Componentwise gap between the (d = 1) basis tensor and g, both normalized."""
        if self.dimension != 1:
            return float("inf")
        a = self.basis[0] / np.linalg.norm(self.basis[0])
        g = self.metric_at_base / np.linalg.norm(self.metric_at_base)
        if np.sum(a * g) < 0:
            a = -a
        return float(np.max(np.abs(a - g)))


def _nullspace(rows, N, rtol):
    if rows.size == 0 or not np.any(rows):
        return np.eye(N), np.zeros(N), float("inf"), 0.0
    _, s, Vt = np.linalg.svd(rows, full_matrices=True)
    s_full = np.zeros(N)
    s_full[:len(s)] = s[:N]
    keep = s_full > rtol * s_full[0]
    retained = float(np.min(s_full[keep]))
    discarded = float(np.max(s_full[~keep])) if np.any(~keep) else 0.0
    if not np.any(~keep):
        return np.zeros((0, N)), s_full, retained, discarded
    return Vt[~keep], s_full, retained, discarded


def _loop_paths(model, p, count, rng):
    """Coordinate rectangles through ``p`` heading toward the box center."""
    box = model.chart.box
    width = box[:, 1] - box[:, 0]
    m = model.m
    paths = []
    for _ in range(count):
        i, j = rng.choice(m, size=2, replace=False)
        toward = np.sign(model.chart.center - p)
        toward[toward == 0] = 1.0
        a = LOOP_FRACTION * width[i] * toward[i]
        b = LOOP_FRACTION * width[j] * toward[j]
        paths.append(rectangle_loop(p, int(i), int(j), a, b))
    return np.array(paths)


def parallel_space(model, basepoint=None, remote_samples=DEFAULT_REMOTE, seed=0,
                   loops=DEFAULT_LOOPS, rtol=NULL_RTOL, min_gap=MIN_GAP,
                   loop_tol=LOOP_TOL, verify=True):
    """Dimension and basis of the space of parallel symmetric (0,2) tensors.

    Raises
    ------
    GapTooSmall
        If the singular-value gap at the threshold is below ``min_gap``.
    TransportInconsistent
        If a candidate drifts by more than ``loop_tol`` around a loop.
    """
    rng = np.random.default_rng(seed)
    p = model.chart.center if basepoint is None else np.asarray(basepoint, dtype=float)
    m = model.m
    g_p = model.metric.values(p)
    F = orthonormal_frame(g_p)
    remote = model.chart.sample(remote_samples, rng) if remote_samples else np.zeros((0, m))
    frames = None
    if len(remote):
        paths = segment_path(np.broadcast_to(p, remote.shape), remote)
        T0 = np.broadcast_to(F, (len(remote), m, m))
        frames = parallel_transport(model.metric, paths, T0, kinds="u.")
    C = curvature_constraints(model, p, remote, frames, include_nabla=True)
    N = sym_dim(m)
    null, s, retained, discarded = _nullspace(C.rows, N, rtol)
    gap = float("inf") if discarded == 0.0 else retained / discarded
    if not gap >= min_gap:
        raise GapTooSmall(f"singular-value gap {gap:.3e} below {min_gap:.0e}; "
                          "nullspace dimension is ambiguous")
    Finv = np.linalg.inv(F)
    basis_frame = unvec_sym(null, m)
    # frame components -> coordinate components: alpha = F^{-T} alpha_o F^{-1}
    basis = np.einsum("ka,dab,bl->dkl", Finv.T, basis_frame, Finv)
    counts = {}
    for tag in C.tags:
        key = tag.split("_remote")[0] if "remote" in tag else tag
        counts[key] = counts.get(key, 0) + 1
    report = ParallelSpaceReport(len(basis), basis, p, s, retained, discarded, [], m,
                                 metric_at_base=g_p, tags=counts)
    if verify and len(basis):
        report.transport_residuals = loop_residuals(model, p, basis, loops, rng)
        worst = max(report.transport_residuals)
        if not worst <= loop_tol:
            raise TransportInconsistent(f"candidate parallel tensor drifts {worst:.3e} "
                                        f"around a loop (tolerance {loop_tol:.0e})")
    return report


def loop_residuals(model, p, tensors, loops=DEFAULT_LOOPS, rng=None):
    """Relative loop-transport drift of each (0,2) tensor in ``tensors``."""
    rng = np.random.default_rng(0) if rng is None else rng
    paths = _loop_paths(model, p, loops, rng)
    T0 = np.broadcast_to(np.moveaxis(tensors, 0, -1), (loops,) + tensors.shape[1:] + (len(tensors),))
    T1 = parallel_transport(model.metric, paths, T0, kinds="dd.")
    out = []
    for d in range(len(tensors)):
        scale = np.max(np.abs(tensors[d]))
        out.append(float(np.max(np.abs(T1[..., d] - tensors[d])) / scale))
    return out


@dataclass
class SQFICount:
    count: int
    nonflat_cap: int
    flat_cap: int
    report: ParallelSpaceReport

    @property
    def below_nonflat_cap(self):
        return self.count < self.nonflat_cap


def sqfi_count(model, basepoint=None, samples=DEFAULT_REMOTE, seed=0, **kw):
    """Special QFIs are exactly the parallel symmetric tensors."""
    rep = parallel_space(model, basepoint, samples, seed, **kw)
    return SQFICount(rep.dimension, max_sqfi_nonflat(model.m), sym_dim(model.m), rep)


@dataclass
class Verdict:
    irreducible: bool
    dimension: int
    witnesses: np.ndarray

    def __str__(self):
        return "irreducible" if self.irreducible else f"reducible({self.dimension})"


def reducibility_verdict(report):
    """Irreducible iff only multiples of g are parallel.

    For a reducible verdict the witnesses are the basis directions
    orthogonal (Frobenius, orthonormal frame) to g; their eigenspaces are the
    candidate parallel splittings.
    """
    if report.dimension == 1:
        return Verdict(True, 1, np.zeros((0, report.m, report.m)))
    F = orthonormal_frame(report.metric_at_base)
    frame = np.einsum("ka,dkl,lb->dab", F, report.basis, F)
    v = vec_sym(frame)
    gvec = vec_sym(np.eye(report.m))
    gvec = gvec / np.linalg.norm(gvec)
    v = v - np.outer(v @ gvec, gvec)
    u, s, vt = np.linalg.svd(v, full_matrices=False)
    keep = vt[s > 1e-8 * max(s.max(), 1e-300)] if s.size else vt[:0]
    Finv = np.linalg.inv(F)
    witnesses = np.einsum("ka,dab,bl->dkl", Finv.T, unvec_sym(keep, report.m), Finv)
    return Verdict(False, report.dimension, witnesses)


def realize_basis(model, report, tol=1e-8):
    """Express each basis tensor through the model's registered symmetric fields.

    Returns a list of :class:`TensorField` (one per basis tensor) together
    with the worst relative fit residual at the base point. Raises
    ``ValueError`` when a basis tensor is outside the span of the registered
    fields.
    """
    names = [k for k, f in model.fields.items() if f.kinds == "dd"]
    values = np.array([model.fields[k].values(report.basepoint) for k in names])
    A = values.reshape(len(names), -1).T
    out, worst = [], 0.0
    for B in report.basis:
        coef, *_ = np.linalg.lstsq(A, B.ravel(), rcond=None)
        resid = float(np.max(np.abs(A @ coef - B.ravel())) / np.max(np.abs(B)))
        worst = max(worst, resid)
        if resid > tol:
            raise ValueError(f"basis tensor not in the span of the registered fields "
                             f"(residual {resid:.2e})")
        comps = np.empty((model.m, model.m), dtype=object)
        for idx in np.ndindex(comps.shape):
            acc = ex.ZERO
            for c, k in zip(coef, names):
                if abs(c) > 1e-14:
                    acc = acc + float(c) * model.fields[k].components[idx]
            comps[idx] = acc
        out.append(TensorField(comps, "dd", "parallel_candidate"))
    return out, worst
