"""Contour functional calculus for the tangential operator.

Sectorial projections P+/P- are computed two independent ways: by
quadrature of the regularized resolvent integral over a truncated,
closed contour, and by an ordered-Schur residue oracle.  The module
refuses to return a quadrature result that disagrees with the oracle.

Eigenvalues within imag_tol of the imaginary axis form the block W0; the
complementary ("minus side") cluster used by the correction formula
absorbs W0, matching a contour whose left branch encircles everything
the right branch does not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import ConfigError, ContourResolutionError

__all__ = [
    "SectorialContour",
    "SpectralSplit",
    "SchurCluster",
    "spectral_projection_oracle",
    "sectorial_projection",
    "q_family",
    "imaginary_signature_data",
]


def _imag_tol(B: np.ndarray, rel: float = 1e-9) -> float:
    scale = float(np.max(np.abs(B))) if B.size else 1.0
    return rel * max(scale, 1e-300)


# ----------------------------------------------------------------------
# ordered-Schur cluster calculus (the oracle side)


class SchurCluster:
    """Functional calculus on one spectral cluster via an ordered Schur form.

    Stable for non-normal matrices: no eigenvector matrices are inverted,
    only a Sylvester equation across the cluster gap is solved.
    """

    def __init__(self, B: np.ndarray, select):
        B = np.asarray(B, dtype=complex)
        T, Z, sdim = sla.schur(B, output="complex", sort=select)
        self.T = T
        self.Z = Z
        self.r = int(sdim)
        self.n = B.shape[0]

    @property
    def basis(self) -> np.ndarray:
        """Orthonormal basis of the cluster's invariant subspace."""
        return self.Z[:, : self.r]

    def apply_function(self, f_tri) -> np.ndarray:
        """g(B) for g = f on the cluster and 0 on the rest.

        f_tri maps the leading triangular block T11 to f(T11).
        """
        n, r = self.n, self.r
        if r == 0:
            return np.zeros((n, n), dtype=complex)
        T, Z = self.T, self.Z
        F11 = f_tri(T[:r, :r])
        G = np.zeros((n, n), dtype=complex)
        G[:r, :r] = F11
        if r < n:
            # T11 Y - Y T22 = F11 T12 from commutation of g(T) with T
            Y = sla.solve_sylvester(T[:r, :r], -T[r:, r:], F11 @ T[:r, r:])
            G[:r, r:] = Y
        return Z @ G @ Z.conj().T

    def projector(self) -> np.ndarray:
        return self.apply_function(lambda T11: np.eye(self.r, dtype=complex))

    def exp_factor(self, x: float) -> np.ndarray:
        """exp(-x B) restricted to the cluster (zero on the complement)."""
        return self.apply_function(lambda T11: sla.expm(-x * T11))


def spectral_projection_oracle(
    B: np.ndarray, region: str, contour: "SectorialContour" = None,
    imag_tol: float = None,
) -> np.ndarray:
    """Riesz projector from an ordered Schur decomposition.

    region is one of "right", "left", "nonright", "imag", or
    "inside-contour" (requires a contour).  Raises when an eigenvalue
    sits within the resolution tolerance of the dividing set.
    """
    B = np.asarray(B, dtype=complex)
    tol = imag_tol if imag_tol is not None else _imag_tol(B)
    ev = np.linalg.eigvals(B)
    if region in ("right", "left", "nonright", "imag"):
        near_axis = np.abs(ev.real) < tol
        if region in ("right", "left") and np.any(near_axis):
            bad = ev[near_axis][0]
            raise ContourResolutionError(
                f"eigenvalue {bad:.6g} within {tol:.1e} of the imaginary axis"
            )
        select = {
            "right": lambda z: z.real > tol,
            "left": lambda z: z.real < -tol,
            "nonright": lambda z: z.real <= tol,
            "imag": lambda z: abs(z.real) <= tol,
        }[region]
    elif region == "inside-contour":
        if contour is None:
            raise ConfigError("region 'inside-contour' requires a contour")
        gap = contour.gap_to_spectrum(ev)
        if gap < contour.gap_tol * max(1.0, float(np.max(np.abs(ev), initial=0.0))):
            bad = ev[int(np.argmin(contour.distances(ev)))]
            raise ContourResolutionError(
                f"eigenvalue {bad:.6g} within gap tolerance of the contour"
            )
        select = contour.encloses
    else:
        raise ConfigError(f"unknown region '{region}'")
    return SchurCluster(B, select).projector()


# ----------------------------------------------------------------------
# contours


@dataclass(frozen=True)
class SectorialContour:
    """Truncated keyhole contour around the right spectral sector.

    Two legs at +-leg_angle from the imaginary axis, an inner arc of
    radius cut_radius and an outer closing arc at truncation_radius;
    counterclockwise.  For finite matrices the closure is exact: the same
    eigenvalues are encircled as by the unbounded contour.
    """

    cut_radius: float
    leg_angle: float = np.pi / 6.0
    truncation_radius: float = 10.0
    n_quad: int = 512
    gap_tol: float = 1e-9

    def __post_init__(self):
        if not (0 < self.leg_angle < np.pi / 2):
            raise ConfigError("leg_angle must lie in (0, pi/2)")
        if not (0 < self.cut_radius < self.truncation_radius):
            raise ConfigError("need 0 < cut_radius < truncation_radius")
        if self.n_quad < 16:
            raise ConfigError("n_quad too small")

    @classmethod
    def auto(cls, B: np.ndarray, n_quad: int = 512, imag_tol: float = None):
        """Contour parameters from the spectrum of B.

        cut radius = half the smallest |Re| over off-axis eigenvalues, leg
        angle shrunk until every right eigenvalue sits inside the wedge,
        truncation at 4x the spectral radius.
        """
        ev = np.linalg.eigvals(np.asarray(B, dtype=complex))
        tol = imag_tol if imag_tol is not None else _imag_tol(np.asarray(B))
        off = ev[np.abs(ev.real) > tol]
        right = ev[ev.real > tol]
        c = 0.5 * float(np.min(np.abs(off.real))) if off.size else 0.5
        if right.size:
            c = min(c, 0.5 * float(np.min(np.abs(right))))
        rho = float(np.max(np.abs(ev))) if ev.size else 1.0
        R = max(4.0 * rho, 4.0 * c, 1.0)
        ang = np.pi / 6.0
        if right.size:
            margin = float(np.min(np.pi / 2.0 - np.abs(np.angle(right))))
            ang = min(ang, 0.5 * margin)
        ang = max(ang, 1e-3)
        return cls(cut_radius=c, leg_angle=ang, truncation_radius=R, n_quad=n_quad)

    # geometry helpers ---------------------------------------------------

    @property
    def _beta(self) -> float:
        """Leg direction measured from the positive real axis."""
        return np.pi / 2.0 - self.leg_angle

    def encloses(self, z: complex) -> bool:
        return bool(
            (self.cut_radius < abs(z) < self.truncation_radius)
            and abs(np.angle(complex(z))) < self._beta
        )

    def distances(self, z) -> np.ndarray:
        """Distance from each point to the four contour pieces."""
        z = np.atleast_1d(np.asarray(z, dtype=complex))
        b = self._beta
        c, R = self.cut_radius, self.truncation_radius
        out = np.empty((z.size, 4))
        for i, leg_dir in enumerate((np.exp(1j * b), np.exp(-1j * b))):
            # segment from c*dir to R*dir
            t = np.clip((z * np.conj(leg_dir)).real, c, R)
            out[:, i] = np.abs(z - t * leg_dir)
        for i, rad in enumerate((c, R)):
            ang = np.clip(np.angle(z), -b, b)
            out[:, 2 + i] = np.abs(z - rad * np.exp(1j * ang))
        return out.min(axis=1)

    def gap_to_spectrum(self, eigenvalues) -> float:
        d = self.distances(eigenvalues)
        return float(d.min()) if d.size else np.inf

    def validate(self, B: np.ndarray, imag_tol: float = None) -> None:
        """Check the contour separates the right cluster of B cleanly."""
        B = np.asarray(B, dtype=complex)
        ev = np.linalg.eigvals(B)
        tol = imag_tol if imag_tol is not None else _imag_tol(B)
        scale = max(float(np.max(np.abs(ev), initial=0.0)), 1.0)
        if self.gap_to_spectrum(ev) < self.gap_tol * scale:
            raise ContourResolutionError(
                "eigenvalue within gap tolerance of the contour"
            )
        if float(np.max(np.abs(ev), initial=0.0)) >= self.truncation_radius:
            raise ContourResolutionError("truncation radius below spectral radius")
        for z in ev:
            if (z.real > tol) != self.encloses(z):
                raise ContourResolutionError(
                    f"contour does not separate eigenvalue {z:.6g} "
                    "consistently with the right half-plane cluster"
                )

    def nodes_weights(self):
        """Quadrature nodes and dlambda weights, counterclockwise.

        Gauss-Legendre on each of the four pieces.  The legs are
        parametrized in log-radius, clustering nodes near the inner arc
        where the resolvent peaks while the regularized integrand decays
        like 1/lambda^2 outward.
        """
        b = self._beta
        c, R = self.cut_radius, self.truncation_radius
        n = self.n_quad
        n_leg = max(n * 3 // 10, 8)
        n_inner = max(n // 10, 8)
        n_outer = max(n - 2 * n_leg - n_inner, 8)
        zs, ws = [], []

        def gl(n_pts, a_, b_):
            t, w = np.polynomial.legendre.leggauss(n_pts)
            return 0.5 * (b_ - a_) * t + 0.5 * (a_ + b_), 0.5 * (b_ - a_) * w

        def leg(n_pts, r_from, r_to, direction):
            # lambda = e^{s} direction, d lambda = lambda ds
            s, w = gl(n_pts, np.log(r_from), np.log(r_to))
            lam = np.exp(s) * direction
            return lam, w * lam

        # upper leg: R e^{ib} -> c e^{ib}
        lam, w = leg(n_leg, R, c, np.exp(1j * b))
        zs.append(lam)
        ws.append(w)
        # inner arc: angle b -> -b at radius c
        t, w = gl(n_inner, b, -b)
        zs.append(c * np.exp(1j * t))
        ws.append(w * 1j * c * np.exp(1j * t))
        # lower leg: c e^{-ib} -> R e^{-ib}
        lam, w = leg(n_leg, c, R, np.exp(-1j * b))
        zs.append(lam)
        ws.append(w)
        # outer closing arc: angle -b -> b at radius R
        t, w = gl(n_outer, -b, b)
        zs.append(R * np.exp(1j * t))
        ws.append(w * 1j * R * np.exp(1j * t))
        return np.concatenate(zs), np.concatenate(ws)


def _quadrature_projection(B: np.ndarray, contour: SectorialContour) -> np.ndarray:
    """P+ by quadrature of the regularized integrand lambda^{-1}(lambda-B)^{-1} B.

    The naive resolvent integrand decays like 1/lambda and is dominated by
    the closing arc; regularizing by lambda^{-1} ... B makes the closure
    contribution O(1/R) and the integral well conditioned.
    """
    B = np.asarray(B, dtype=complex)
    n = B.shape[0]
    zs, ws = contour.nodes_weights()
    acc = np.zeros((n, n), dtype=complex)
    eye = np.eye(n)
    for lam, w in zip(zs, ws):
        acc += (w / lam) * np.linalg.solve(lam * eye - B, B)
    return acc / (2j * np.pi)


# ----------------------------------------------------------------------
# the public split


@dataclass
class SpectralSplit:
    """Sectorial projections of one tangential operator.

    P_plus/P_minus exclude the imaginary block; P0 is the orthogonal
    projection onto W0 (the invariant subspace of eigenvalues within
    imag_tol of the axis) and P_minus_closure = Id - P_plus is the
    complementary Riesz idempotent that absorbs W0.
    """

    P_plus: np.ndarray
    P_minus: np.ndarray
    P0: np.ndarray
    W0_basis: np.ndarray
    imag_tol: float
    contour: SectorialContour
    rank_plus: int
    rank_minus: int
    dim_W0: int
    quad_mismatch_plus: float
    quad_mismatch_minus: float

    @property
    def P_minus_closure(self) -> np.ndarray:
        return np.eye(self.P_plus.shape[0]) - self.P_plus

    def idempotency_residual(self) -> float:
        return float(
            max(
                np.linalg.norm(self.P_plus @ self.P_plus - self.P_plus, 2),
                np.linalg.norm(self.P_minus @ self.P_minus - self.P_minus, 2),
            )
        )

    def completeness_residual(self) -> float:
        eye = np.eye(self.P_plus.shape[0])
        return float(
            np.linalg.norm(self.P_plus + self.P_minus + self.P0 - eye, 2)
        )


def sectorial_projection(
    B: np.ndarray,
    contour: SectorialContour = None,
    quad_tol: float = 1e-8,
    imag_tol: float = None,
) -> SpectralSplit:
    """Compute the sectorial split of B with quadrature/oracle cross-check.

    Raises ContourResolutionError when an eigenvalue crowds the contour or
    when the quadrature drifts more than 100*quad_tol from the
    ordered-Schur oracle ("contour under-resolved").
    """
    B = np.asarray(B, dtype=complex)
    tol = imag_tol if imag_tol is not None else _imag_tol(B)
    if contour is None:
        contour = SectorialContour.auto(B, imag_tol=tol)
    contour.validate(B, imag_tol=tol)

    right = SchurCluster(B, lambda z: z.real > tol)
    left = SchurCluster(B, lambda z: z.real < -tol)
    mid = SchurCluster(B, lambda z: abs(z.real) <= tol)

    Pq_plus = _quadrature_projection(B, contour)
    Ps_plus = right.projector()
    mis_plus = float(np.linalg.norm(Pq_plus - Ps_plus, 2))

    contour_minus = SectorialContour.auto(-B, n_quad=contour.n_quad, imag_tol=tol)
    contour_minus.validate(-B, imag_tol=tol)
    Pq_minus = _quadrature_projection(-B, contour_minus)
    Ps_minus = left.projector()
    mis_minus = float(np.linalg.norm(Pq_minus - Ps_minus, 2))

    if max(mis_plus, mis_minus) > 100.0 * quad_tol:
        raise ContourResolutionError(
            f"contour under-resolved: quadrature/oracle mismatch "
            f"{max(mis_plus, mis_minus):.3e} exceeds {100.0 * quad_tol:.1e}"
        )

    W0 = mid.basis
    P0 = W0 @ W0.conj().T
    return SpectralSplit(
        P_plus=Pq_plus,
        P_minus=Pq_minus,
        P0=P0,
        W0_basis=W0,
        imag_tol=tol,
        contour=contour,
        rank_plus=right.r,
        rank_minus=left.r,
        dim_W0=mid.r,
        quad_mismatch_plus=mis_plus,
        quad_mismatch_minus=mis_minus,
    )


def q_family(B: np.ndarray, contour, x: float, imag_tol: float = None) -> np.ndarray:
    """Q+(x) for x > 0 or Q-(x) for x < 0, by ordered-Schur calculus.

    Q+(x) = exp(-xB) restricted to the strictly-right cluster; Q-(x)
    restricts to the complementary cluster (imaginary block included, as
    for a left branch encircling everything the right branch does not).
    """
    if x == 0:
        raise ConfigError("q_family requires x != 0; use the projections at x = 0")
    B = np.asarray(B, dtype=complex)
    tol = imag_tol if imag_tol is not None else _imag_tol(B)
    if x > 0:
        cluster = SchurCluster(B, lambda z: z.real > tol)
    else:
        cluster = SchurCluster(B, lambda z: z.real <= tol)
    return cluster.exp_factor(x)


def imaginary_signature_data(
    B0_h: np.ndarray,
    J0_h: np.ndarray,
    imag_tol: float = None,
    skew_tol: float = 1e-10,
) -> dict:
    """W0 block data and the Hermitian form i P0 J0 restricted to W0.

    J0 must be skew-adjoint (uniform boundary mass) for the compressed
    form V^* (i J0) V to be Hermitian.  Returns basis, projection,
    compressed form, its eigenvalues and the integer signature.
    """
    B0_h = np.asarray(B0_h, dtype=complex)
    J0_h = np.asarray(J0_h, dtype=complex)
    if np.linalg.norm(J0_h + J0_h.conj().T, 2) > skew_tol * max(
        1.0, np.linalg.norm(J0_h, 2)
    ):
        raise ConfigError("signature undefined: J0 not skew-adjoint")
    tol = imag_tol if imag_tol is not None else _imag_tol(B0_h)
    mid = SchurCluster(B0_h, lambda z: abs(z.real) <= tol)
    V = mid.basis
    P0 = V @ V.conj().T
    H = V.conj().T @ (1j * J0_h) @ V
    H = 0.5 * (H + H.conj().T)
    if mid.r == 0:
        eig = np.zeros(0)
    else:
        eig = np.linalg.eigvalsh(H)
    cut = 1e-10 * max(1.0, float(np.max(np.abs(eig), initial=0.0)))
    signature = int(np.sum(eig > cut) - np.sum(eig < -cut))
    return {
        "W0_basis": V,
        "P0": P0,
        "form": H,
        "eigenvalues": eig,
        "signature": signature,
        "dim_W0": mid.r,
    }
