import numpy as np
import pytest
import scipy.linalg as sla

from calderonlab import (
    CoefficientField,
    ConfigError,
    OperatorSpec,
    build_discretization,
    cauchy_riemann_spec,
    compare_to_oracle,
    constant_coeff_ucp,
    dirac_sigma1_spec,
    direct_sum_spec,
    mode_oracle_cauchy,
)
from calderonlab.oracle import mode_system, oracle_exp_bridge, principal_angles


def test_cr_mode_spans():
    spec = cauchy_riemann_spec(1.0, 16, 12)
    d = build_discretization(spec.geometry)
    orc = mode_oracle_cauchy(spec, d)
    for m in (-4, -1, 1, 3):
        V = orc.mode_basis(m)
        ref = np.array([[1.0], [np.exp(m * 1.0)]])
        ang = principal_angles(V, ref)
        assert ang.max() <= 1e-12
    P0 = orc.mode_projection(0)
    assert np.max(np.abs(P0 - 0.5 * np.ones((2, 2)))) <= 1e-12


def test_dirac_mode_spans_are_exponential():
    spec = dirac_sigma1_spec(1.0, 16, 12)
    d = build_discretization(spec.geometry)
    orc = mode_oracle_cauchy(spec, d)
    for m in (0, 2, -3):
        sysm = mode_system(spec, m, d)
        V = orc.mode_basis(m)
        ref = np.vstack([np.eye(2), sla.expm(-1.0 * sysm.G_const)])
        assert principal_angles(V, ref).max() <= 1e-12
        assert np.max(np.abs(sysm.fundamental - sla.expm(-sysm.G_const))) <= 1e-12


def test_oracle_requires_theta_constant():
    geo = cauchy_riemann_spec(1.0, 16, 12).geometry
    spec = OperatorSpec(
        geometry=geo,
        J=CoefficientField.constant([[1.0]]),
        beta1=CoefficientField.constant([[1j]]),
        beta0=CoefficientField.zero(1),
        C=CoefficientField.from_terms(1, [(0, 1, [[0.1]])]),
    )
    d = build_discretization(geo)
    with pytest.raises(ConfigError, match="theta-constant"):
        mode_oracle_cauchy(spec, d)


def test_integrator_matches_exponential_for_constant_modes():
    # force the integrator by marking x-dependence with a zero coefficient
    geo = cauchy_riemann_spec(1.0, 16, 12).geometry
    spec = OperatorSpec(
        geometry=geo,
        J=CoefficientField.constant([[1.0]]),
        beta1=CoefficientField.constant([[1j]]),
        beta0=CoefficientField.from_terms(1, [(0, 0, [[0.3]]), (1, 0, [[0.0]])]),
        C=CoefficientField.zero(1),
    )
    d = build_discretization(geo)
    sysm = mode_system(spec, 2, d)
    assert sysm.x_dependent
    exact = np.exp(-1.0 * (2j * 1j + 0.3))
    assert abs(sysm.fundamental[0, 0] - exact) <= 1e-10 * abs(exact)


def test_ode_tolerance_self_consistency():
    geo = cauchy_riemann_spec(1.0, 16, 12).geometry
    spec = OperatorSpec(
        geometry=geo,
        J=CoefficientField.constant([[1.0]]),
        beta1=CoefficientField.constant([[1j]]),
        beta0=CoefficientField.from_terms(1, [(1, 0, [[0.8]])]),
        C=CoefficientField.zero(1),
    )
    d = build_discretization(geo)
    a = mode_system(spec, 1, d, ode_tol=1e-10).fundamental
    b = mode_system(spec, 1, d, ode_tol=5e-11).fundamental
    assert np.max(np.abs(a - b)) <= 10 * 1e-10


def test_direct_sum_oracle_is_sum():
    a = cauchy_riemann_spec(1.0, 16, 12)
    s = direct_sum_spec(a, a)
    d1 = build_discretization(a.geometry)
    d2 = build_discretization(s.geometry)
    oa = mode_oracle_cauchy(a, d1)
    os_ = mode_oracle_cauchy(s, d2)
    for m in (-2, 0, 3):
        Phi1 = oa.systems[int(np.nonzero(oa.modes == m)[0][0])].fundamental
        Phi2 = os_.systems[int(np.nonzero(os_.modes == m)[0][0])].fundamental
        assert np.max(np.abs(Phi2 - np.kron(np.eye(2), Phi1))) <= 1e-12


def test_compare_to_oracle(cr_mid):
    orc = mode_oracle_cauchy(cr_mid.spec, cr_mid.disc)
    rep = compare_to_oracle(cr_mid.bundle, orc, cr_mid.disc, mode_limit=14)
    assert rep["max_angle"] <= 1e-8
    assert rep["mode_coupling"] <= 1e-10
    # oracle against itself is exact
    self_angles = [
        principal_angles(orc.mode_basis(m), orc.mode_basis(m)).max()
        for m in (-3, 0, 2)
    ]
    assert max(self_angles) <= 1e-12


def test_aps_line_decay(cr_mid):
    """Angle of the mode block of C+ to the spectral half-space line."""
    from calderonlab.double import mode_blocks_of_boundary_operator

    blocks = mode_blocks_of_boundary_operator(cr_mid.disc, cr_mid.bundle.C_plus)
    modes = cr_mid.disc.mode_indices()
    aps = np.array([[0.0], [1.0]])
    xs, ys = [], []
    for m in range(3, 11):
        i = int(np.nonzero(modes == m)[0][0])
        u, s, _ = np.linalg.svd(blocks[i])
        ang = principal_angles(u[:, :1], aps).max()
        xs.append(m)
        ys.append(np.log(ang))
    slope = np.polyfit(xs, ys, 1)[0]
    assert abs(slope - (-1.0)) <= 0.2


def test_exp_bridge(cr_mid):
    rep = oracle_exp_bridge(cr_mid.spec, cr_mid.disc, 0.4)
    assert rep["err_plus"] <= 1e-8
    assert rep["err_minus"] <= 1e-8


def test_constant_coeff_ucp_verdicts():
    for spec in (cauchy_riemann_spec(1.0, 16, 12), dirac_sigma1_spec(1.0, 16, 12)):
        d = build_discretization(spec.geometry)
        out = constant_coeff_ucp(spec, d, [0.0, 0.3, 0.6])
        assert out["d_zero_everywhere"]
        assert out["verdict"] == "d == 0"


def test_constant_coeff_ucp_rejects_x_dependence():
    geo = cauchy_riemann_spec(1.0, 16, 12).geometry
    spec = OperatorSpec(
        geometry=geo,
        J=CoefficientField.constant([[1.0]]),
        beta1=CoefficientField.constant([[1j]]),
        beta0=CoefficientField.from_terms(1, [(1, 0, [[0.5]])]),
        C=CoefficientField.zero(1),
    )
    d = build_discretization(geo)
    with pytest.raises(ConfigError, match="inapplicable"):
        constant_coeff_ucp(spec, d, [0.0, 0.5])
