import numpy as np
import pytest

from calderonlab import (
    CoefficientField,
    OperatorSpec,
    assemble_double,
    assemble_operator,
    build_discretization,
    calderon,
    cauchy_riemann_spec,
    correction_formula_check,
    dirac_sigma1_spec,
    direct_sum_spec,
    ghost_solutions,
    trace_and_dual,
)
from calderonlab.double import mode_blocks_of_boundary_operator


def test_cr_double_has_trivial_kernel(cr_mid):
    kd = cr_mid.double.kernel_data()
    assert kd["dim"] == 0
    assert kd["gap_ratio"] >= 10.0
    assert kd["smallest_kept_sv"] > 1e-6


def test_dirac_double_has_trivial_kernel(dirac_small):
    kd = dirac_small.double.kernel_data()
    assert kd["dim"] == 0
    assert kd["gap_ratio"] >= 10.0


def test_selfadjoint_realization(dirac_accept):
    """Form symmetry of the double on smooth transmission-respecting pairs."""
    pipe = dirac_accept
    d, tr, dbl = pipe.disc, pipe.traces, pipe.double
    L = d.config.length
    rng = np.random.default_rng(17)
    taper0 = 0.5 * (1.0 + np.cos(np.pi * d.x_nodes / L))

    def member(seed):
        g = np.random.default_rng(seed)
        th = d.theta_nodes
        x = d.x_nodes[:, None, None]
        up = np.zeros((d.n_x, d.n_theta, d.rank), dtype=complex)
        um = np.zeros_like(up)
        for m in (-2, 0, 1, 3):
            cp = g.standard_normal(d.rank) + 1j * g.standard_normal(d.rank)
            cm = g.standard_normal(d.rank) + 1j * g.standard_normal(d.rank)
            ph = np.exp(1j * m * th)[None, :, None]
            up += np.cos(np.pi * x / L) * ph * cp
            um += np.sin(np.pi * x / (2 * L)) * ph * cm
        up, um = up.reshape(-1), um.reshape(-1)
        # analytic taper correction steers the pair into the domain
        gap = dbl.T_used @ tr.rho(up) - tr.rho(um)
        corr = (
            taper0[:, None, None]
            * tr.split_boundary(gap)[0].reshape(1, d.n_theta, d.rank)
        ) + (
            taper0[::-1, None, None]
            * tr.split_boundary(gap)[1].reshape(1, d.n_theta, d.rank)
        )
        um = um + corr.reshape(-1)
        return np.concatenate([up, um])

    worst = 0.0
    for seed in (1, 2, 3):
        u = member(seed)
        v = member(seed + 10)
        jump_u = tr.rho(u[d.n_interior:]) - dbl.T_used @ tr.rho(u[: d.n_interior])
        assert np.max(np.abs(jump_u)) <= 1e-12 * np.max(np.abs(u))
        Au = np.concatenate(
            [pipe.op.apply_A(u[: d.n_interior]), -pipe.op.apply_At(u[d.n_interior:])]
        )
        Av = np.concatenate(
            [pipe.op.apply_A(v[: d.n_interior]), -pipe.op.apply_At(v[d.n_interior:])]
        )
        m2 = np.concatenate([d.mass_interior, d.mass_interior])
        lhs = np.vdot(v, m2 * Au)
        rhs = np.vdot(Av, m2 * u)
        scale = max(np.abs(lhs), np.abs(rhs), 1.0)
        worst = max(worst, abs(lhs - rhs) / scale)
    assert worst <= 1e-8


def test_direct_sum_double_is_permutation_equivalent():
    a = cauchy_riemann_spec(1.0, 8, 8)
    b = OperatorSpec(
        geometry=a.geometry,
        J=a.J,
        beta1=a.beta1,
        beta0=a.beta0 + CoefficientField.constant([[0.7]]),
        C=a.C,
        boundary_morphism=a.boundary_morphism,
    )
    s = direct_sum_spec(a, b)
    ds = build_discretization(s.geometry)
    dbl_s = assemble_double(assemble_operator(s, ds), traces=trace_and_dual(ds))
    da = build_discretization(a.geometry)
    dbl_a = assemble_double(assemble_operator(a, da), traces=trace_and_dual(da))
    dbl_b = assemble_double(assemble_operator(b, da), traces=trace_and_dual(da))
    Ms = dbl_s.matrix_AT
    Ma, Mb = dbl_a.matrix_AT, dbl_b.matrix_AT
    N1 = da.n_interior
    # permutation: fiber component c of the sum <-> summand c
    perm = np.zeros(Ms.shape[0], dtype=int)
    for half in range(2):
        for node in range(N1):
            perm[half * 2 * N1 + 0 * N1 + node] = half * 2 * N1 + 2 * node
            perm[half * 2 * N1 + 1 * N1 + node] = half * 2 * N1 + 2 * node + 1
    big = np.zeros_like(Ms)
    # assemble blockdiag in summand ordering: [A-block; B-block] per half
    for (Mi, off) in ((Ma, 0), (Mb, 1)):
        idx_plus = np.arange(N1)
        idx_minus = np.arange(N1)
        src_rows = np.concatenate([idx_plus, N1 + idx_minus])
        dst = np.concatenate([off * N1 + idx_plus, 2 * N1 + off * N1 + idx_minus])
        big[np.ix_(dst, dst)] = Mi[np.ix_(src_rows, src_rows)]
    Ps = np.zeros_like(Ms)
    Ps[np.arange(len(perm)), perm] = 1.0
    assert np.max(np.abs(Ms - Ps.T @ big @ Ps)) <= 1e-12 * np.max(np.abs(Ms))


def test_ghost_solutions_trivial(cr_mid, dirac_small):
    for pipe in (cr_mid, dirac_small):
        g = ghost_solutions(pipe.op, pipe.traces)
        assert g["dim_A"] == 0 and g["dim_At"] == 0
        assert g["gap_ratio_A"] >= 10 and g["gap_ratio_At"] >= 10


def test_ghost_dimension_stable_under_refinement():
    dims = []
    for nt, nx in [(16, 12), (32, 24)]:
        spec = cauchy_riemann_spec(1.0, nt, nx)
        d = build_discretization(spec.geometry)
        op = assemble_operator(spec, d)
        g = ghost_solutions(op, trace_and_dual(d))
        dims.append((g["dim_A"], g["dim_At"]))
    assert dims[0] == dims[1]


def test_ghosts_direct_sum_additive():
    a = cauchy_riemann_spec(1.0, 8, 8)
    s = direct_sum_spec(a, a)
    d = build_discretization(s.geometry)
    g = ghost_solutions(assemble_operator(s, d), trace_and_dual(d))
    assert g["dim_A"] == 0  # 0 + 0


def test_calderon_mode_blocks_match_analytic(cr_mid):
    blocks = mode_blocks_of_boundary_operator(cr_mid.disc, cr_mid.bundle.C_plus)
    modes = cr_mid.disc.mode_indices()
    L = 1.0
    i0 = int(np.nonzero(modes == 0)[0][0])
    assert np.max(np.abs(blocks[i0] - 0.5 * np.ones((2, 2)))) <= 1e-6
    i1 = int(np.nonzero(modes == 1)[0][0])
    e = np.e
    expect = np.array([[1.0, e], [e, e * e]]) / (1.0 + e * e)
    assert np.max(np.abs(blocks[i1] - expect)) <= 1e-6


def test_calderon_identities(cr_mid, dirac_small):
    for pipe in (cr_mid, dirac_small):
        b = pipe.bundle
        assert b.compl_residual <= 1e-8
        assert b.idem_residual <= 1e-8
        assert b.kernel_residual <= 1e-8
    # orthogonality for the inverse-adjoint morphism
    assert cr_mid.bundle.sym_residual <= 1e-8


def test_poisson_operator_maps_into_kernel(cr_mid):
    d, op, b = cr_mid.disc, cr_mid.op, cr_mid.bundle
    delta = 0.25
    mask = (d.x_nodes > delta) & (d.x_nodes < 1.0 - delta)
    mask = np.repeat(mask, d.n_theta * d.rank)
    rng = np.random.default_rng(0)
    xi = rng.standard_normal(d.n_boundary)
    r = op.apply_A(b.K_plus @ xi)
    assert np.max(np.abs(r[mask])) <= 1e-8 * np.linalg.norm(xi)


def test_dense_and_mode_paths_agree():
    spec = cauchy_riemann_spec(1.0, 8, 8)
    d = build_discretization(spec.geometry)
    op = assemble_operator(spec, d)
    tr = trace_and_dual(d)
    fast = calderon(assemble_double(op, traces=tr), op, tr)
    slow = calderon(assemble_double(op, traces=tr, force_dense=True), op, tr)
    assert np.max(np.abs(fast.C_plus - slow.C_plus)) <= 1e-10
    assert np.max(np.abs(fast.K_minus - slow.K_minus)) <= 1e-10


def test_theta_dependent_coefficients_supported():
    geo = cauchy_riemann_spec(1.0, 8, 8).geometry
    spec = OperatorSpec(
        geometry=geo,
        J=CoefficientField.constant([[1.0]]),
        beta1=CoefficientField.constant([[1j]]),
        beta0=CoefficientField.zero(1),
        C=CoefficientField.from_terms(1, [(0, 1, [[0.05]]), (1, -1, [[0.02j]])]),
    )
    d = build_discretization(geo)
    op = assemble_operator(spec, d)
    tr = trace_and_dual(d)
    dbl = assemble_double(op, traces=tr)
    assert not dbl._mode_path
    bundle = calderon(dbl, op, tr)
    assert bundle.compl_residual <= 1e-8
    assert bundle.idem_residual <= 1e-8


def test_correction_formula(cr_mid):
    corr = correction_formula_check(cr_mid.double, cr_mid.op, cr_mid.bundle)
    assert corr["commutator_order_flag"]
    assert corr["residual"] <= 1e-6
    # per-mode distance to the sectorial projection decays like exp(-|m| L)
    modes, gap = corr["modes"], corr["per_mode_gap_to_sectorial"]
    sel = (np.abs(modes) >= 4) & (np.abs(modes) <= 10)
    slope = np.polyfit(np.abs(modes[sel]), np.log(gap[sel]), 1)[0]
    assert abs(slope - (-1.0)) <= 0.2


def test_correction_formula_dirac(dirac_small):
    corr = correction_formula_check(dirac_small.double, dirac_small.op,
                                    dirac_small.bundle)
    assert corr["commutator_order_flag"]
    assert corr["residual"] <= 1e-6
