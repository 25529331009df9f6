"""Invariant suites and experiments on top of the double construction.

Projection diagnostics against the direct Cauchy-space oracle, the
Lagrangian/cobordism package for formally self-adjoint operators, the
UCP-defect profiler, operator metrics, and parameter-continuity sweeps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .double import assemble_double, calderon
from .errors import ConfigError, GeometryMismatchError, RankGapError
from .geometry import (
    Discretization,
    TraceSystem,
    barycentric_row,
    boundary_sobolev_factor,
    interior_h1_gram,
    trace_and_dual,
)
from .operator import AssembledOperator, assemble_operator, transmission_morphism
from .oracle import principal_angles
from .sectorial import SchurCluster, _imag_tol, imaginary_signature_data

__all__ = [
    "SymplecticForm",
    "MetricReport",
    "UcpProfile",
    "projection_invariants",
    "cauchy_space_direct",
    "lagrangian_and_cobordism",
    "ucp_defect_profile",
    "operator_metrics",
    "continuity_sweep",
    "solution_manifold",
]

GAP_MIN = 10.0
RANK_TOL = 1e-10


# ----------------------------------------------------------------------
# rank decisions


def rank_decision(svals: np.ndarray, rank_tol: float = RANK_TOL,
                  gap_min: float = GAP_MIN):
    """Count singular values below rank_tol * max and certify the gap.

    Returns (nullity, gap_ratio, certified).  With an empty null cluster
    the gap is measured from sigma_min to the threshold itself.
    """
    svals = np.sort(np.asarray(svals, dtype=float))
    if svals.size == 0:
        return 0, np.inf, True
    tau = rank_tol * float(svals[-1])
    below = svals[svals <= tau]
    above = svals[svals > tau]
    smallest_kept = float(above[0]) if above.size else 0.0
    largest_cut = float(below[-1]) if below.size else tau
    ratio = smallest_kept / max(largest_cut, 1e-300)
    return int(below.size), float(ratio), bool(ratio >= gap_min)


# ----------------------------------------------------------------------
# direct Cauchy space


def solution_manifold(op: AssembledOperator, adjoint: bool = False):
    """Orthonormal interior basis of the discrete solution manifold.

    Nullspace of the kept collocation rows (the same rows the double
    keeps: the plus block anchors at circle 0, the adjoint at circle L),
    dimension k * n_theta, with gap certification.
    """
    d = op.disc
    k, n_x, n_t = d.rank, d.n_x, d.n_theta
    N = d.n_interior
    half = n_t * k
    sqrt_m = np.sqrt(d.mass_interior)
    if op.spec.is_theta_constant():
        cols = []
        svals = []
        for m in d.mode_indices():
            Am, Atm = op.mode_blocks(int(m))
            M = Am[: k * (n_x - 1), :] if not adjoint else Atm[k:, :]
            _, S, Vh = np.linalg.svd(M, full_matrices=True)
            svals.extend(S.tolist())
            null = Vh[k * (n_x - 1):].conj().T
            cols.append((int(m), null))
        nullity, ratio, ok = _manifold_gap(svals, expected_null=0)
        basis = np.zeros((N, half), dtype=complex)
        j = 0
        for m, null in cols:
            phase = np.exp(1j * m * 2.0 * np.pi * np.arange(n_t) / n_t)
            for c in range(null.shape[1]):
                grid = null[:, c].reshape(n_x, k)[:, None, :] * phase[None, :, None]
                basis[:, j] = grid.reshape(N)
                j += 1
    else:
        A = op.matrix_A() if not adjoint else op.matrix_At()
        keep = np.ones(N, dtype=bool)
        if not adjoint:
            keep[-half:] = False
        else:
            keep[:half] = False
        M = A[keep, :]
        _, S, Vh = np.linalg.svd(M, full_matrices=True)
        basis = Vh[N - half :].conj().T
        nullity, ratio, ok = _manifold_gap(S.tolist(), expected_null=0)
    if not ok:
        raise RankGapError(
            f"solution manifold rank unresolved (gap ratio {ratio:.2f})"
        )
    # orthonormalize in the interior mass inner product
    q, _ = np.linalg.qr(sqrt_m[:, None] * basis)
    return (q / sqrt_m[:, None]), ratio


def _manifold_gap(svals, expected_null: int):
    svals = np.sort(np.asarray(svals))
    pos = svals[svals > 0]
    floor = max(1e-13 * float(svals[-1]), 1e-300)
    genuinely = pos[pos > floor]
    smallest_kept = float(genuinely[0]) if genuinely.size else 0.0
    largest_cut = float(pos[pos <= floor][-1]) if np.any(pos <= floor) else floor
    ratio = smallest_kept / largest_cut
    return expected_null, ratio, ratio >= GAP_MIN


def cauchy_space_direct(op: AssembledOperator, traces: TraceSystem):
    """Orthonormal boundary basis of the discrete Cauchy data space N+^0.

    Traces of the solution-manifold basis, orthonormalized in the boundary
    mass inner product; dimension is half the boundary degrees of freedom.
    """
    basis, ratio = solution_manifold(op, adjoint=False)
    d = op.disc
    tr = np.stack([traces.rho(basis[:, j]) for j in range(basis.shape[1])], axis=1)
    sqrt_mb = np.sqrt(d.mass_boundary)
    u, s, _ = np.linalg.svd(sqrt_mb[:, None] * tr, full_matrices=False)
    nullity, gap, ok = rank_decision(s, rank_tol=1e-10)
    if not ok:
        raise RankGapError(
            f"Cauchy-space trace rank unresolved (gap ratio {gap:.2f})"
        )
    keep = u[:, : s.size - nullity] if nullity else u
    return (keep / sqrt_mb[:, None]), {"gap_ratio": ratio, "trace_rank_gap": gap}


def projection_invariants(
    bundle, op: AssembledOperator, traces: TraceSystem
) -> dict:
    """Calderon projection diagnostics plus the direct-oracle angles."""
    d = op.disc
    nb = d.n_boundary
    eye = np.eye(nb)
    Cp, Cm = bundle.C_plus, bundle.C_minus
    direct, gaps = cauchy_space_direct(op, traces)
    u, s, _ = np.linalg.svd(Cp)
    r = int(np.sum(s > 1e-8 * s[0]))
    angles = principal_angles(u[:, :r], direct)
    return {
        "idem_residual": float(np.linalg.norm(Cp @ Cp - Cp, 2)),
        "compl_residual": float(np.linalg.norm(Cp + Cm - eye, 2)),
        "sym_residual": float(np.linalg.norm(Cp - Cp.conj().T, 2)),
        "sym_flagged": bool(bundle.diagnostics.get("orthogonal_choice", False)),
        "rank_C_plus": r,
        "direct_oracle_max_angle": float(angles.max()) if angles.size else 0.0,
        "direct_gap": gaps,
    }


# ----------------------------------------------------------------------
# symplectic form, Lagrangian property, cobordism invariants


@dataclass
class SymplecticForm:
    """omega(u, v) = <-J0 u, v> in the boundary mass inner product."""

    disc: Discretization
    J0_boundary: np.ndarray

    def __post_init__(self):
        J = self.J0_boundary
        skew = np.linalg.norm(J + J.conj().T, 2)
        if skew > 1e-10 * max(1.0, np.linalg.norm(J, 2)):
            raise ConfigError("symplectic form requires skew-adjoint J0")
        sv = np.linalg.svd(J, compute_uv=False)
        if sv[-1] <= 1e-12 * sv[0]:
            raise ConfigError("symplectic form requires invertible J0")

    @property
    def matrix(self) -> np.ndarray:
        """Omega with omega(u, v) = v^H Omega u."""
        mb = self.disc.mass_boundary
        return -(mb[:, None] * self.J0_boundary)

    def evaluate(self, u, v) -> complex:
        return complex(np.vdot(v, self.matrix @ u))

    def isotropy_residual(self, basis: np.ndarray) -> float:
        return float(np.max(np.abs(basis.conj().T @ self.matrix @ basis)))


def lagrangian_and_cobordism(
    bundle,
    op: AssembledOperator,
    sa_tol: float = 1e-10,
) -> dict:
    """Lagrangian property of im C+ and the cobordism invariants.

    Requires a formally self-adjoint operator (checked discretely) and the
    unitary-part transmission morphism.  Certifies Lagrangian-ness through
    isotropy of im C+ and im C-, their mutual transversality, and the
    dimension count; then the W0 signature and the graded index of the
    tangential operator.
    """
    d = op.disc
    defect = op.selfadjoint_defect()
    if defect > sa_tol * max(1.0, op.ellipticity_constant):
        raise ConfigError(
            "Lagrangian check requires formally self-adjoint A "
            f"(collocation defect {defect:.3e})"
        )
    J0b = op.collar.J0_boundary(d)
    form = SymplecticForm(d, J0b)
    Cp, Cm = bundle.C_plus, bundle.C_minus
    nb = d.n_boundary

    def column_span(C):
        u, s, _ = np.linalg.svd(C)
        r = int(np.sum(s > 1e-8 * s[0]))
        return u[:, :r]

    Up = column_span(Cp)
    Um = column_span(Cm)
    iso_plus = form.isotropy_residual(Up)
    iso_minus = form.isotropy_residual(Um)
    angles = principal_angles(Up, Um)
    transversality = float(angles.min()) if angles.size else np.pi / 2

    B0b = op.collar.B0_boundary(d)
    sig = imaginary_signature_data(B0b, J0b)

    graded = _graded_index(B0b, J0b)

    return {
        "selfadjoint_defect": defect,
        "isotropy_residual": float(max(iso_plus, iso_minus)),
        "isotropy_plus": float(iso_plus),
        "isotropy_minus": float(iso_minus),
        "transversality_angle": transversality,
        "dim_sum_ok": bool(Up.shape[1] + Um.shape[1] == nb),
        "signature": sig["signature"],
        "dim_W0": sig["dim_W0"],
        "signature_eigenvalues": sig["eigenvalues"],
        **graded,
    }


def _graded_index(B0: np.ndarray, J0: np.ndarray) -> dict:
    """Index of the off-diagonal block of B0 in the grading i J0 (-J0^2)^{-1/2}."""
    n = B0.shape[0]
    sym = float(np.linalg.norm(B0 - B0.conj().T, 2))
    anti = float(np.linalg.norm(J0 @ B0 + B0 @ J0, 2))
    scale = max(1.0, float(np.linalg.norm(B0, 2)))
    out = {
        "tangential_selfadjoint_defect": sym,
        "anticommutation_defect": anti,
        "graded_index_available": bool(sym <= 1e-10 * scale and anti <= 1e-10 * scale),
    }
    if not out["graded_index_available"]:
        return out
    S = sla.sqrtm(-(J0 @ J0))
    alpha = 1j * J0 @ np.linalg.inv(S)
    alpha = 0.5 * (alpha + alpha.conj().T)
    out["grading_square_defect"] = float(
        np.linalg.norm(alpha @ alpha - np.eye(n), 2)
    )
    out["grading_odd_defect"] = float(np.linalg.norm(alpha @ B0 + B0 @ alpha, 2))
    vals, vecs = np.linalg.eigh(alpha)
    Vm = vecs[:, vals < 0]
    Vp = vecs[:, vals >= 0]
    Bp = Vm.conj().T @ B0 @ Vp       # B+ : ker(alpha-1) -> ker(alpha+1)
    Bm = Vp.conj().T @ B0 @ Vm
    sp = np.linalg.svd(Bp, compute_uv=False)
    dp, gp, okp = rank_decision(sp, rank_tol=1e-10)
    sp_adj = np.linalg.svd(Bp.conj().T, compute_uv=False)
    dm, gm, okm = rank_decision(sp_adj, rank_tol=1e-10)
    if not (okp and okm):
        raise RankGapError("graded index rank decision lacks a clear gap")
    out.update(
        {
            "dim_ker_Bplus": dp,
            "dim_ker_Bplus_adj": dm,
            "graded_index": dp - dm,
            "graded_gap_ratio": float(min(gp, gm)),
        }
    )
    return out


# ----------------------------------------------------------------------
# UCP-defect profile


@dataclass
class UcpProfile:
    x_samples: np.ndarray
    d: np.ndarray
    d_prime: np.ndarray
    gap_ratios: np.ndarray
    gap_ratios_prime: np.ndarray
    inconclusive: np.ndarray

    @property
    def inner_index(self) -> int:
        return int(self.d[0] - self.d_prime[0])

    @property
    def monotone(self) -> bool:
        return bool(np.all(np.diff(self.d) <= 0))


def _hypersurface_trace_svals(op, basis, xj):
    """Singular values of the trace-at-Sigma(xj) map on the solution basis."""
    d = op.disc
    row = barycentric_row(d.x_nodes, float(xj))
    n_t, k = d.n_theta, d.rank
    G = basis.reshape(d.n_x, n_t * k, basis.shape[1])
    Tr = np.einsum("a,atj->tj", row, G) * np.sqrt(2 * np.pi / n_t)
    return np.linalg.svd(Tr, compute_uv=False)


def ucp_defect_profile(
    op: AssembledOperator,
    traces: TraceSystem,
    x_samples,
    rank_tol: float = RANK_TOL,
    gap_min: float = GAP_MIN,
) -> UcpProfile:
    """Defect dimensions d(x) and d'(x) along parallel circles Sigma(x).

    Each rank decision requires a singular-value gap ratio >= gap_min;
    unresolved samples are flagged inconclusive, never silently accepted.
    """
    L = op.disc.config.length
    xs = np.asarray(x_samples, dtype=float)
    if np.any(xs < 0) or np.any(xs > 0.75 * L):
        raise ConfigError("x_samples must lie in [0, 3L/4]")
    basis, _ = solution_manifold(op, adjoint=False)
    basis_t, _ = solution_manifold(op, adjoint=True)
    d_vals, dp_vals = [], []
    gaps, gaps_p, flags = [], [], []
    for xj in xs:
        s = _hypersurface_trace_svals(op, basis, xj)
        dd, g, ok = rank_decision(s, rank_tol, gap_min)
        s2 = _hypersurface_trace_svals(op, basis_t, xj)
        dd2, g2, ok2 = rank_decision(s2, rank_tol, gap_min)
        d_vals.append(dd)
        dp_vals.append(dd2)
        gaps.append(g)
        gaps_p.append(g2)
        flags.append(not (ok and ok2))
    return UcpProfile(
        x_samples=xs,
        d=np.asarray(d_vals),
        d_prime=np.asarray(dp_vals),
        gap_ratios=np.asarray(gaps),
        gap_ratios_prime=np.asarray(gaps_p),
        inconclusive=np.asarray(flags),
    )


# ----------------------------------------------------------------------
# operator metrics


@dataclass
class MetricReport:
    n0: float
    n1: float
    terms: dict

    @property
    def d0(self) -> float:
        return self.n0

    @property
    def d_str(self) -> float:
        return self.n0 + self.n1


class _NormWorkspace:
    """Cached weighted-norm factors for one discretization."""

    _cache = {}

    def __new__(cls, disc: Discretization):
        key = (id(disc), disc.config)
        if key in cls._cache:
            return cls._cache[key]
        self = super().__new__(cls)
        if disc.n_interior > 2400:
            raise ConfigError(
                "operator metrics are a desk-scale tool; reduce the grid"
            )
        W1 = interior_h1_gram(disc)
        self.W1_inv = np.linalg.inv(W1)
        self.sqrt_m = np.sqrt(disc.mass_interior)
        self.Wb0 = boundary_sobolev_factor(disc, 0.0)
        self.Wb0_inv = np.linalg.inv(self.Wb0)
        self.Wb1_inv = np.linalg.inv(boundary_sobolev_factor(disc, 1.0))
        Wh = boundary_sobolev_factor(disc, 0.5)
        self.Wb_half = Wh
        self.Wb_half_inv = np.linalg.inv(Wh)
        cls._cache[key] = self
        return self

    def interior_10(self, Op) -> float:
        """Norm as a map H^1(M) -> L^2(M)."""
        return float(
            np.linalg.norm((self.sqrt_m[:, None] * Op) @ self.W1_inv, 2)
        )

    def boundary(self, Op, s_in: float, s_out: float) -> float:
        W_out = {0.0: self.Wb0, 0.5: self.Wb_half}[s_out]
        W_in = {0.0: self.Wb0_inv, 0.5: self.Wb_half_inv, 1.0: self.Wb1_inv}[s_in]
        return float(np.linalg.norm(W_out @ Op @ W_in, 2))


def _collar_first_order_matrix(comp, disc, fields):
    """Assemble ax d/dx' + at d/dtheta + a0 on the inward-frame cylinder."""
    ax_f, at_f, a0_f = fields
    x, th = disc.x_nodes, disc.theta_nodes
    ax = ax_f.sample(x, th)
    at = at_f.sample(x, th)
    a0 = a0_f.sample(x, th)
    d = disc
    n = d.n_interior

    def apply(u):
        g = d.grid(u)
        du = np.einsum("ab,btk->atk", d.D_x, g)
        dt = np.einsum("ts,ask->atk", d.D_theta, g)
        out = (
            np.einsum("atij,atj->ati", ax, du)
            + np.einsum("atij,atj->ati", at, dt)
            + np.einsum("atij,atj->ati", a0, g)
        )
        return out.reshape(-1)

    M = np.empty((n, n), dtype=complex)
    e = np.zeros(n, dtype=complex)
    for j in range(n):
        e[j] = 1.0
        M[:, j] = apply(e)
        e[j] = 0.0
    return M


def _c1_fields(comp):
    """Coefficient fields of C1 in the inward frame (exact x-division)."""
    J, b1, b0, C = comp.J_in, comp.beta1_in, comp.beta0_in, comp.C_in
    J0, b10, b00 = J.at_x(0.0), b1.at_x(0.0), b0.at_x(0.0)
    ax = (J - J0).divide_x()
    at = (J.matmul(b1) - J0.matmul(b10)).divide_x()
    a0 = (J.matmul(b0) - J0.matmul(b00) + C - C.at_x(0.0)).divide_x()
    return ax, at, a0


def _c1_tilde_fields(comp):
    """Coefficient fields of C1~ in the inward frame."""
    J, b1, b0, C = comp.J_in, comp.beta1_in, comp.beta0_in, comp.C_in
    JH = J.conj_transpose()
    b1H = b1.conj_transpose()
    b0H = b0.conj_transpose()
    CH = C.conj_transpose()
    JH0 = JH.at_x(0.0)
    b1H0 = b1H.at_x(0.0)
    b0H0 = b0H.at_x(0.0)
    ax = (JH0 - JH).divide_x()
    at = (b1H0.matmul(JH0) - b1H.matmul(JH)).divide_x()
    z_full = (
        JH.dx() * (-1.0)
        - b1H.matmul(JH).dtheta()
        + b0H.matmul(JH)
        + CH
    )
    z_const = (
        b1H0.matmul(JH0.dtheta()) * (-1.0)
        - b1H0.dtheta().matmul(JH0)
        + b0H0.matmul(JH0)
    )
    c0_tilde = CH.at_x(0.0) - JH.dx().at_x(0.0)
    a0 = (z_full - z_const - c0_tilde).divide_x()
    return ax, at, a0


def operator_metrics(spec_a, spec_b, disc: Discretization) -> MetricReport:
    """Distances N0 / N1 between two operator specs on one grid.

    N0 collects the interior H^1 -> L^2 norms of the difference operator
    and its formal adjoint plus the L^2_{1/2} -> L^2_{1/2} norm of the
    morphism difference; N1 adds the collar-data norms.  d0 = N0 and
    d_str = N0 + N1.
    """
    ga, gb = spec_a.geometry, spec_b.geometry
    if ga != gb or ga != disc.config:
        raise GeometryMismatchError("operator metrics require a common geometry")
    ws = _NormWorkspace(disc)
    op_a = assemble_operator(spec_a, disc)
    op_b = assemble_operator(spec_b, disc)
    dA = op_a.matrix_A() - op_b.matrix_A()
    dAt = op_a.matrix_At() - op_b.matrix_At()
    Ta = transmission_morphism(op_a)
    Tb = transmission_morphism(op_b)
    dT = Ta - Tb
    terms = {
        "A_10": ws.interior_10(dA),
        "At_10": ws.interior_10(dAt),
        "T_half_half": ws.boundary(dT, 0.5, 0.5),
    }
    n0 = terms["A_10"] + terms["At_10"] + terms["T_half_half"]

    dB0 = op_a.collar.B0_boundary(disc) - op_b.collar.B0_boundary(disc)
    dJ0 = op_a.collar.J0_boundary(disc) - op_b.collar.J0_boundary(disc)
    Ga = op_a.collar.J0_boundary(disc).conj().T @ Ta
    Gb = op_b.collar.J0_boundary(disc).conj().T @ Tb
    B0a = op_a.collar.B0_boundary(disc)
    B0b = op_b.collar.B0_boundary(disc)
    dComm = (B0a.conj().T @ Ga - Ga @ B0a.conj().T) - (
        B0b.conj().T @ Gb - Gb @ B0b.conj().T
    )
    terms.update(
        {
            "B0_10": ws.boundary(dB0, 1.0, 0.0),
            "B0t_10": ws.boundary(dB0.conj().T, 1.0, 0.0),
            "commutator_0": ws.boundary(dComm, 0.0, 0.0),
            "T_0": ws.boundary(dT, 0.0, 0.0),
            "J0_0": ws.boundary(dJ0, 0.0, 0.0),
        }
    )
    c0 = c0t = c1 = c1t = 0.0
    for ca, cb in zip(op_a.collar, op_b.collar):
        c0 += float(np.max(np.linalg.norm(ca.C0 - cb.C0, ord=2, axis=(1, 2))))
        c0t += float(
            np.max(np.linalg.norm(ca.C0_tilde - cb.C0_tilde, ord=2, axis=(1, 2)))
        )
        Ma = _collar_first_order_matrix(ca, disc, _c1_fields(ca))
        Mb = _collar_first_order_matrix(cb, disc, _c1_fields(cb))
        c1 += ws.interior_10(Ma - Mb)
        Mat = _collar_first_order_matrix(ca, disc, _c1_tilde_fields(ca))
        Mbt = _collar_first_order_matrix(cb, disc, _c1_tilde_fields(cb))
        c1t += ws.interior_10(Mat - Mbt)
    terms.update({"C0_0": c0, "C0t_0": c0t, "C1_10": c1, "C1t_10": c1t})
    n1 = (
        terms["B0_10"]
        + terms["B0t_10"]
        + terms["commutator_0"]
        + terms["T_0"]
        + terms["J0_0"]
        + terms["C1_10"]
        + terms["C0_0"]
        + terms["C1t_10"]
        + terms["C0t_0"]
    )
    return MetricReport(n0=float(n0), n1=float(n1), terms=terms)


# ----------------------------------------------------------------------
# continuity sweep


def _double_inverse_norm_factors(disc: Discretization):
    W1 = interior_h1_gram(disc)
    W1d = sla.block_diag(W1, W1)
    m = disc.mass_interior
    inv_sqrt_m = 1.0 / np.sqrt(np.concatenate([m, m]))
    return W1d, inv_sqrt_m


def continuity_sweep(
    family,
    s_grid,
    sobolev_s: float = 0.0,
    s0=None,
    jump_factor: float = 10.0,
    track_resolvent: bool = True,
    threads: int = 1,
) -> dict:
    """Sweep s -> C+(A(s), T(s)) and report continuity diagnostics.

    family maps a parameter s to an OperatorSpec on a fixed geometry.
    Every point is recomputed from scratch (no warm starts).  Returns the
    distance curves, per-step ratios against d_str, and jump flags: a step
    is flagged when it exceeds jump_factor times the median of the other
    steps.  The sectorial projection of the tangential operator is tracked
    on the same grid, where eigenvalues crossing the contour produce jumps.
    Sweep points are independent; threads > 1 evaluates them in a worker
    pool and collects results in grid order.
    """
    s_grid = list(s_grid)
    if len(s_grid) < 3:
        raise ConfigError("sweep needs at least three points")
    if abs(sobolev_s) > 0.5:
        raise ConfigError("sobolev_s restricted to [-1/2, 1/2]")
    s0 = s_grid[0] if s0 is None else s0
    from .geometry import build_discretization

    disc = build_discretization(family(s0).geometry)
    Wb = boundary_sobolev_factor(disc, sobolev_s)
    Wb_inv = np.linalg.inv(Wb)
    W1d, inv_sqrt_md = _double_inverse_norm_factors(disc)

    def point(s):
        try:
            spec = family(s)
            op = assemble_operator(spec, disc)
            traces = trace_and_dual(disc)
            dbl = assemble_double(op, traces=traces)
            if dbl.positivity_warning:
                raise ConfigError("family member fails positivity")
            bundle = calderon(dbl, op, traces)
            B0 = op.collar.B0_boundary(disc)
            tol = _imag_tol(B0)
            P_plus = SchurCluster(B0, lambda z: z.real > tol).projector()
            inv = np.linalg.inv(dbl.matrix_AT) if track_resolvent else None
            return {"s": s, "spec": spec, "C": bundle.C_plus, "P": P_plus,
                    "inv": inv}
        except Exception as exc:  # noqa: BLE001 - name the failing s
            raise ConfigError(f"sweep aborted at s={s}: {exc}") from exc

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(point, s_grid))
    else:
        results = [point(s) for s in s_grid]
    ref = next(r for r in results if r["s"] == s0)

    def wnorm(Mdiff):
        return float(np.linalg.norm(Wb @ Mdiff @ Wb_inv, 2))

    curve_C = np.array([wnorm(r["C"] - ref["C"]) for r in results])
    curve_P = np.array([np.linalg.norm(r["P"] - ref["P"], 2) for r in results])
    norm_C = np.array([wnorm(r["C"]) for r in results])
    d0s, dstrs = [], []
    for r in results:
        rep = operator_metrics(r["spec"], ref["spec"], disc)
        d0s.append(rep.d0)
        dstrs.append(rep.d_str)
    d0s = np.array(d0s)
    dstrs = np.array(dstrs)
    curve_R = np.zeros(len(results))
    if track_resolvent:
        for i, r in enumerate(results):
            diff = r["inv"] - ref["inv"]
            curve_R[i] = float(
                np.linalg.norm(W1d @ (diff * inv_sqrt_md[None, :]), 2)
            )

    steps_C = np.array(
        [
            wnorm(results[i + 1]["C"] - results[i]["C"])
            for i in range(len(results) - 1)
        ]
    )
    steps_P = np.array(
        [
            np.linalg.norm(results[i + 1]["P"] - results[i]["P"], 2)
            for i in range(len(results) - 1)
        ]
    )
    step_dstr = np.array(
        [
            operator_metrics(results[i + 1]["spec"], results[i]["spec"], disc).d_str
            for i in range(len(results) - 1)
        ]
    )

    def flags(steps):
        out = np.zeros(len(steps), dtype=bool)
        for i in range(len(steps)):
            rest = np.delete(steps, i)
            med = np.median(rest) if rest.size else 0.0
            out[i] = steps[i] > jump_factor * max(med, 1e-300)
        return out

    ratio = steps_C / np.maximum(step_dstr, 1e-300)
    res_ratio = np.zeros(len(results))
    if track_resolvent:
        res_ratio = curve_R / np.maximum(d0s, 1e-300)
        res_ratio[d0s == 0] = 0.0
    return {
        "s_grid": np.asarray(s_grid, dtype=float),
        "s0": float(s0),
        "curve_C": curve_C,
        "curve_P": curve_P,
        "norm_C": norm_C,
        "d0": d0s,
        "d_str": dstrs,
        "resolvent_curve": curve_R,
        "resolvent_ratio": res_ratio,
        "steps_C": steps_C,
        "steps_P": steps_P,
        "step_d_str": step_dstr,
        "step_ratio": ratio,
        "jump_flags_C": flags(steps_C),
        "jump_flags_P": flags(steps_P),
    }
