import numpy as np
import pytest

from calderonlab import CoefficientField, ConfigError


def test_sample_matches_monomials():
    f = CoefficientField.from_terms(
        1, [(0, 0, [[2.0]]), (1, 1, [[1j]]), (2, -1, [[0.5]])]
    )
    x = np.array([0.0, 0.3, 1.0])
    th = np.array([0.0, np.pi / 2])
    vals = f.sample(x, th)
    for i, xi in enumerate(x):
        for j, tj in enumerate(th):
            expect = 2.0 + 1j * xi * np.exp(1j * tj) + 0.5 * xi**2 * np.exp(-1j * tj)
            assert abs(vals[i, j, 0, 0] - expect) <= 1e-14


def test_json_round_trip():
    rng = np.random.default_rng(0)
    data = rng.standard_normal((3, 5, 2, 2)) + 1j * rng.standard_normal((3, 5, 2, 2))
    f = CoefficientField(data)
    g = CoefficientField.from_json(f.to_json())
    assert np.max(np.abs(f.data - g.data)) == 0.0


def test_json_validation():
    with pytest.raises(ConfigError, match="missing key"):
        CoefficientField.from_json({"P": 0, "M_max": 0, "k": 1})
    bad = CoefficientField.constant([[1.0]]).to_json()
    bad["data"] = [[[[0.0]]]]
    with pytest.raises(ConfigError, match="shape"):
        CoefficientField.from_json(bad)


def test_derivatives_and_division():
    f = CoefficientField.from_terms(1, [(2, 0, [[3.0]]), (1, 2, [[1.0]])])
    x = np.array([0.2, 0.9])
    th = np.array([0.1, 1.1, 2.3])
    dx = f.dx().sample(x, th)
    expect = 6.0 * x[:, None] + np.exp(2j * th)[None, :]
    assert np.max(np.abs(dx[..., 0, 0] - expect)) <= 1e-13
    g = f.divide_x()
    vals = g.sample(x, th)[..., 0, 0]
    expect = 3.0 * x[:, None] + np.exp(2j * th)[None, :]
    assert np.max(np.abs(vals - expect)) <= 1e-13
    with pytest.raises(ConfigError):
        CoefficientField.constant([[1.0]]).divide_x()


def test_compose_affine_reverses_cylinder():
    f = CoefficientField.from_terms(1, [(0, 0, [[1.0]]), (2, 1, [[2.0]])])
    L = 1.5
    g = f.compose_affine(-1.0, L)
    x = np.array([0.0, 0.4, 1.1])
    th = np.array([0.3])
    assert np.max(np.abs(g.sample(x, th) - f.sample(L - x, th))) <= 1e-13


def test_matmul_and_conj_transpose():
    a = CoefficientField.from_terms(2, [(1, 1, [[0, 1j], [0, 0]])])
    b = CoefficientField.from_terms(2, [(0, -1, [[0, 0], [2.0, 0]])])
    x = np.array([0.7])
    th = np.array([0.4, 2.0])
    prod = a.matmul(b).sample(x, th)
    direct = np.einsum("atij,atjl->atil", a.sample(x, th), b.sample(x, th))
    assert np.max(np.abs(prod - direct)) <= 1e-13
    h = a.conj_transpose().sample(x, th)
    expect = np.conj(np.swapaxes(a.sample(x, th), 2, 3))
    assert np.max(np.abs(h - expect)) <= 1e-13
