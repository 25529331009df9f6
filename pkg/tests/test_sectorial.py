import numpy as np
import pytest

from calderonlab import (
    ConfigError,
    ContourResolutionError,
    SectorialContour,
    imaginary_signature_data,
    q_family,
    sectorial_projection,
    spectral_projection_oracle,
)


def random_gapped_matrix(rng, n=8, gap=0.5, spread=2.5, cond_cap=4.0):
    """Dense matrix with |Re lambda| >= gap and a moderate eigenbasis."""
    re = (gap + spread * rng.random(n)) * rng.choice([-1.0, 1.0], n)
    im = rng.standard_normal(n)
    V = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    u, s, vh = np.linalg.svd(V)
    s = np.linspace(1.0, cond_cap, n)
    V = u @ np.diag(s) @ vh
    return V @ np.diag(re + 1j * im) @ np.linalg.inv(V)


def test_oracle_diagonal_split():
    P = spectral_projection_oracle(np.diag([1.0, -1.0]), "right")
    assert np.max(np.abs(P - np.diag([1.0, 0.0]))) <= 1e-14


def test_oracle_nonnormal_residue():
    B = np.array([[1.0, 5.0], [0.0, -1.0]])
    P = spectral_projection_oracle(B, "right")
    assert np.max(np.abs(P - np.array([[1.0, 2.5], [0.0, 0.0]]))) <= 1e-13


def test_oracle_jordan_block():
    B = np.eye(3) + np.diag([1.0, 1.0], 1)
    assert np.max(np.abs(spectral_projection_oracle(B, "right") - np.eye(3))) <= 1e-13


def test_oracle_eigenvalue_on_axis_rejected():
    with pytest.raises(ContourResolutionError, match="imaginary axis"):
        spectral_projection_oracle(np.diag([0.0, 1.0]), "right")


def test_quadrature_diagonal():
    split = sectorial_projection(np.diag([2.0, -3.0]),
                                 SectorialContour(cut_radius=0.5,
                                                  truncation_radius=12.0,
                                                  n_quad=512))
    assert np.max(np.abs(split.P_plus - np.diag([1.0, 0.0]))) <= 1e-8


def test_quadrature_matches_oracle_on_random_matrices():
    rng = np.random.default_rng(101)
    for _ in range(30):
        B = random_gapped_matrix(rng)
        split = sectorial_projection(B)
        assert split.quad_mismatch_plus <= 1e-6
        assert split.quad_mismatch_minus <= 1e-6
        assert split.idempotency_residual() <= 1e-8
        assert split.completeness_residual() <= 1e-8
        assert split.rank_plus + split.rank_minus + split.dim_W0 == B.shape[0]
        # functional-calculus commutation
        comm = np.linalg.norm(split.P_plus @ B - B @ split.P_plus, 2)
        assert comm <= 1e-7 * np.linalg.norm(B, 2)


def test_hermitian_matches_indicator():
    rng = np.random.default_rng(3)
    H = rng.standard_normal((8, 8))
    H = 0.5 * (H + H.T) + np.diag([4, 3, 2, 1, -1, -2, -3, -4])
    ev, U = np.linalg.eigh(H)
    assert np.min(np.abs(ev)) > 0.2
    ind = U @ np.diag((ev > 0).astype(float)) @ U.T
    split = sectorial_projection(H)
    assert np.max(np.abs(split.P_plus - ind)) <= 1e-10


def test_quadrature_convergence_rate():
    B = random_gapped_matrix(np.random.default_rng(55))
    errs = []
    for n_quad in (24, 48):
        contour = SectorialContour.auto(B, n_quad=n_quad)
        try:
            split = sectorial_projection(B, contour)
            errs.append(split.quad_mismatch_plus)
        except ContourResolutionError:
            errs.append(np.inf)
    # doubling the quadrature must gain at least a factor 4 before the floor
    assert errs[1] <= errs[0] / 4.0 or errs[1] <= 1e-12


def test_under_resolved_contour_rejected():
    B = random_gapped_matrix(np.random.default_rng(9))
    contour = SectorialContour.auto(B, n_quad=16)
    with pytest.raises(ContourResolutionError, match="under-resolved"):
        sectorial_projection(B, contour, quad_tol=1e-10)


def test_contour_validation_rejects_close_eigenvalue():
    B = np.diag([0.5, -1.0])
    contour = SectorialContour(cut_radius=0.5 - 1e-12, truncation_radius=10.0)
    with pytest.raises(ContourResolutionError):
        contour.validate(B)


def test_q_family_values_and_limit():
    B = np.diag([2.0, -3.0])
    assert np.max(np.abs(q_family(B, None, 0.5) - np.diag([np.exp(-1.0), 0.0]))) <= 1e-13
    assert np.max(np.abs(q_family(B, None, -0.5) - np.diag([0.0, np.exp(-1.5)]))) <= 1e-13
    x = 1e-9
    total = q_family(B, None, x) + q_family(B, None, -x)
    assert np.max(np.abs(total - np.eye(2))) <= 1e-8
    with pytest.raises(ConfigError):
        q_family(B, None, 0.0)


def test_signature_dirac_zero_mode():
    J0 = np.array([[0.0, 1.0], [-1.0, 0.0]], dtype=complex)
    data = imaginary_signature_data(np.zeros((2, 2), dtype=complex), J0)
    assert data["dim_W0"] == 2
    sigma2 = np.array([[0.0, -1j], [1j, 0.0]])
    assert np.max(np.abs(data["form"] - (-sigma2))) <= 1e-14
    assert sorted(np.round(data["eigenvalues"]).tolist()) == [-1.0, 1.0]
    assert data["signature"] == 0


def test_signature_empty_and_pair():
    J0 = np.array([[0.0, 1.0], [-1.0, 0.0]], dtype=complex)
    empty = imaginary_signature_data(np.diag([1.0, -1.0]).astype(complex), J0)
    assert empty["dim_W0"] == 0 and empty["signature"] == 0
    pair = imaginary_signature_data(np.diag([1j, -1j]), J0)
    assert pair["dim_W0"] == 2
    assert pair["signature"] == 0


def test_signature_requires_skew_J():
    with pytest.raises(ConfigError, match="skew"):
        imaginary_signature_data(np.zeros((2, 2)), np.eye(2))
