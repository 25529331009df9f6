import numpy as np
import pytest

from calderonlab import (
    ConfigError,
    GeometryConfig,
    build_discretization,
    sobolev_weighted_norm,
    trace_and_dual,
)
from calderonlab.geometry import (
    barycentric_row,
    chebyshev_lobatto,
    clenshaw_curtis_weights,
    collar_cutoff,
)


def test_config_validation():
    with pytest.raises(ConfigError, match="n_theta must be even"):
        GeometryConfig(length=1.0, n_theta=7, n_x=8)
    with pytest.raises(ConfigError):
        GeometryConfig(length=-1.0, n_theta=16, n_x=12)
    with pytest.raises(ConfigError):
        GeometryConfig(length=1.0, n_theta=16, n_x=4)
    with pytest.raises(ConfigError):
        GeometryConfig(length=1.0, n_theta=16, n_x=12, rank=0)


def test_fourier_differentiation_exact():
    d = build_discretization(GeometryConfig(length=1.0, n_theta=16, n_x=8))
    for m in range(-7, 8):
        v = np.exp(1j * m * d.theta_nodes)
        assert np.max(np.abs(d.D_theta @ v - 1j * m * v)) <= 1e-12 * max(1, abs(m))


def test_chebyshev_differentiation_exact_on_polynomials():
    x, D = chebyshev_lobatto(12, 2.0)
    for deg in range(12):
        p = x**deg
        dp = deg * x ** max(deg - 1, 0) if deg else np.zeros_like(x)
        assert np.max(np.abs(D @ p - dp)) <= 1e-10


def test_clenshaw_curtis_exactness():
    for n, L in [(8, 1.0), (9, 2.0), (12, 0.7)]:
        x, _ = chebyshev_lobatto(n, L)
        w = clenshaw_curtis_weights(n, L)
        for deg in range(n):
            got = np.sum(w * x**deg)
            exact = L ** (deg + 1) / (deg + 1)
            assert abs(got - exact) <= 1e-12 * max(1.0, exact)


def test_cylinder_area():
    d = build_discretization(GeometryConfig(length=2.0, n_theta=8, n_x=8))
    assert abs(np.sum(d.mass_interior) - 4 * np.pi) <= 1e-12


def test_trace_extension_and_dual():
    d = build_discretization(GeometryConfig(length=1.0, n_theta=16, n_x=12))
    tr = trace_and_dual(d)
    rng = np.random.default_rng(7)
    xi = rng.standard_normal(d.n_boundary) + 1j * rng.standard_normal(d.n_boundary)
    assert np.max(np.abs(tr.rho(tr.extension_e(xi)) - xi)) <= 1e-12
    # trace of the constant section is constant on both circles
    ones = np.ones(d.n_interior)
    assert np.max(np.abs(tr.rho(ones) - 1.0)) == 0.0
    # exact adjointness in the discrete inner products
    for seed in range(3):
        g = np.random.default_rng(seed)
        xi = g.standard_normal(d.n_boundary) + 1j * g.standard_normal(d.n_boundary)
        f = g.standard_normal(d.n_interior) + 1j * g.standard_normal(d.n_interior)
        lhs = d.inner(tr.rho_star(xi), f)
        rhs = d.boundary_inner(xi, tr.rho(f))
        assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(rhs))


def test_extension_supported_in_collar():
    cfg = GeometryConfig(length=1.0, n_theta=16, n_x=24)
    d = build_discretization(cfg)
    tr = trace_and_dual(d)
    delta, _, _ = collar_cutoff(cfg.length)
    xi = np.ones(d.n_boundary)
    g = d.grid(tr.extension_e(xi))
    mid = (d.x_nodes > delta) & (d.x_nodes < cfg.length - delta)
    assert np.max(np.abs(g[mid])) == 0.0


def test_sobolev_norm_single_mode():
    d = build_discretization(GeometryConfig(length=1.0, n_theta=16, n_x=8))
    v = np.exp(3j * d.theta_nodes)
    got = sobolev_weighted_norm(v, 0.5, d)
    assert abs(got - 10**0.25 * np.sqrt(2 * np.pi)) <= 1e-12


def test_sobolev_norm_s0_is_l2_and_monotone():
    d = build_discretization(GeometryConfig(length=1.0, n_theta=16, n_x=8))
    rng = np.random.default_rng(3)
    v = rng.standard_normal(d.n_theta) + 1j * rng.standard_normal(d.n_theta)
    l2 = np.sqrt(np.sum(2 * np.pi / d.n_theta * np.abs(v) ** 2))
    assert abs(sobolev_weighted_norm(v, 0.0, d) - l2) <= 1e-12 * l2
    values = [sobolev_weighted_norm(v, s, d) for s in (-1.0, -0.5, 0.0, 0.5, 1.0)]
    assert np.all(np.diff(values) >= -1e-13)
    with pytest.raises(ConfigError):
        sobolev_weighted_norm(v, 1.5, d)


def test_sobolev_norm_axioms():
    d = build_discretization(GeometryConfig(length=1.0, n_theta=16, n_x=8))
    rng = np.random.default_rng(11)
    for _ in range(5):
        u = rng.standard_normal(d.n_theta) + 1j * rng.standard_normal(d.n_theta)
        v = rng.standard_normal(d.n_theta) + 1j * rng.standard_normal(d.n_theta)
        a = 2.0 * rng.standard_normal()
        nu = sobolev_weighted_norm(u, 0.5, d)
        nv = sobolev_weighted_norm(v, 0.5, d)
        assert abs(sobolev_weighted_norm(a * u, 0.5, d) - abs(a) * nu) <= 1e-12 * nu
        assert sobolev_weighted_norm(u + v, 0.5, d) <= nu + nv + 1e-12


def test_barycentric_row():
    x, _ = chebyshev_lobatto(14, 1.0)
    p = 3 * x**5 - x**2 + 0.5
    for xq in (0.0, 0.31, 0.72, 1.0, x[3]):
        row = barycentric_row(x, xq)
        assert abs(row @ p - (3 * xq**5 - xq**2 + 0.5)) <= 1e-12
