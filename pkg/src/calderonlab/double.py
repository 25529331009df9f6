"""The invertible double A (+) (-A^t) with the transmission condition.

The discrete realization is a square system: each block keeps its
first-order collocation rows at all but one boundary circle, and the
transmission rows f_-|dM = T f_+|dM take the freed slots (circle 0 slot
in the minus block, circle L slot in the plus block).  This balances
the per-mode boundary-value counting; replacing rows of only one block
leaves a spurious zero mode.

K+/K- are realized through the equivalent inhomogeneous-transmission
solve: u = A_T^{-1} rho^* J0 xi is exactly the pair with A u+ = 0,
A^t u- = 0 and the jumped condition rho u- = T (rho u+ - xi), which is
the discrete form of the mass-matrix duality defining rho^*.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import ConfigError, NumericalInconsistencyError, RankGapError
from .geometry import Discretization, TraceSystem, collar_cutoff
from .operator import AssembledOperator, transmission_morphism
from .sectorial import SchurCluster, _imag_tol

__all__ = [
    "DoubleOperator",
    "CalderonBundle",
    "assemble_double",
    "ghost_solutions",
    "calderon",
    "correction_formula_check",
    "boundary_mode_transform",
]


def boundary_mode_transform(disc: Discretization):
    """Unitary-up-to-scale map from boundary data to per-mode blocks.

    Returns (U, Uinv) with (U xi) ordered mode-major: for each FFT bin m
    the 2k entries [circle0 fibers, circleL fibers].
    """
    n, k = disc.n_theta, disc.rank
    F = np.exp(-2j * np.pi * np.outer(np.arange(n), np.arange(n)) / n) / n
    Fk = np.kron(F, np.eye(k))
    half = n * k
    U = np.zeros((2 * half, 2 * half), dtype=complex)
    # rows: mode m block (2k), cols: [circle0; circleL]
    for m in range(n):
        U[2 * k * m : 2 * k * m + k, :half] = Fk[k * m : k * (m + 1), :]
        U[2 * k * m + k : 2 * k * (m + 1), half:] = Fk[k * m : k * (m + 1), :]
    Finv = np.conj(F).T * n
    Fkinv = np.kron(Finv, np.eye(k))
    Uinv = np.zeros_like(U)
    for m in range(n):
        Uinv[:half, 2 * k * m : 2 * k * m + k] = Fkinv[:, k * m : k * (m + 1)]
        Uinv[half:, 2 * k * m + k : 2 * k * (m + 1)] = Fkinv[:, k * m : k * (m + 1)]
    return U, Uinv


class DoubleOperator:
    """Factorized discrete double with solve and kernel queries."""

    def __init__(self, op: AssembledOperator, T: np.ndarray, traces: TraceSystem,
                 rank_tol: float = 1e-10, sl_report: dict = None,
                 force_dense: bool = False):
        self.op = op
        self.disc = op.disc
        self.traces = traces
        self.T_used = T
        self.rank_tol = rank_tol
        self.sl_report = sl_report
        self.positivity_warning = bool(sl_report and not sl_report["positivity"])
        self._mode_path = (
            not force_dense
            and op.spec.is_theta_constant()
            and _theta_constant_morphism(op.disc, T)
        )
        d = self.disc
        self._Tinv = np.linalg.inv(T)
        if self._mode_path:
            modes = d.mode_indices()
            self._blocks = []
            self._lus = []
            for m in modes:
                M = self._mode_block(int(m))
                self._blocks.append(M)
                self._lus.append(sla.lu_factor(M))
        else:
            if 2 * d.n_interior > 13000:
                raise ConfigError(
                    "dense double refused at this size; theta-dependent "
                    "coefficients are supported on desk-scale grids only"
                )
            M = self._dense_matrix()
            self._dense = M
            self._dense_lu = sla.lu_factor(M)
        self._kernel = None

    # -- assembly -------------------------------------------------------

    def _mode_T(self, m: int):
        """Per-circle k x k transmission blocks for one Fourier mode.

        Pointwise theta-constant morphism, so the block is mode independent.
        """
        d = self.disc
        k = d.rank
        half = d.n_theta * k
        T0 = self.T_used[:k, :k]
        TL = self.T_used[half : half + k, half : half + k]
        return T0, TL

    def _mode_block(self, m: int) -> np.ndarray:
        """Square block for mode m, unknowns [u+ (k n_x), u- (k n_x)]."""
        d = self.disc
        k, n_x = d.rank, d.n_x
        A, At = self.op.mode_blocks(m)
        T0, TL = self._mode_T(m)
        nk = k * n_x
        M = np.zeros((2 * nk, 2 * nk), dtype=complex)
        # plus block: A rows at x-nodes 0..n_x-2; circle-L transmission in slot n_x-1
        M[: nk - k, :nk] = A[: nk - k, :]
        rL = slice(nk - k, nk)
        M[rL, nk - k : nk] = -TL
        M[rL, 2 * nk - k : 2 * nk] = np.eye(k)
        # minus block: circle-0 transmission in slot 0; -At rows at nodes 1..n_x-1
        r0 = slice(nk, nk + k)
        M[r0, 0:k] = -T0
        M[r0, nk : nk + k] = np.eye(k)
        M[nk + k :, nk:] = -At[k:, :]
        return M

    def _dense_matrix(self) -> np.ndarray:
        d = self.disc
        k, n_x, n_t = d.rank, d.n_x, d.n_theta
        N = d.n_interior
        half = n_t * k
        A = self.op.matrix_A()
        At = self.op.matrix_At()
        M = np.zeros((2 * N, 2 * N), dtype=complex)
        M[: N - half, :N] = A[: N - half, :]
        # circle-L transmission rows in the plus block's last slots
        T = self.T_used
        M[N - half : N, N - half : N] = -T[half:, half:]
        M[N - half : N, 2 * N - half :] = np.eye(half)
        # circle-0 transmission rows in the minus block's first slots
        M[N : N + half, :half] = -T[:half, :half]
        M[N : N + half, N : N + half] = np.eye(half)
        M[N + half :, N:] = -At[half:, :]
        return M

    @property
    def matrix_AT(self) -> np.ndarray:
        """Dense double matrix (assembled on demand for the mode path)."""
        if self._mode_path:
            if not hasattr(self, "_dense_cache"):
                d = self.disc
                if 2 * d.n_interior > 13000:
                    raise ConfigError("dense double matrix refused at this size")
                self._dense_cache = self._dense_from_modes()
            return self._dense_cache
        return self._dense

    def _dense_from_modes(self) -> np.ndarray:
        d = self.disc
        N = d.n_interior
        M = np.zeros((2 * N, 2 * N), dtype=complex)
        e = np.zeros(2 * N, dtype=complex)
        for j in range(2 * N):
            e[j] = 1.0
            M[:, j] = self.apply(e)
            e[j] = 0.0
        return M

    def apply(self, pair) -> np.ndarray:
        """Apply the square double matrix to stacked (u+, u-)."""
        d = self.disc
        N = d.n_interior
        half = d.n_theta * d.rank
        pair = np.asarray(pair, dtype=complex)
        up, um = pair[:N], pair[N:]
        out = np.empty(2 * N, dtype=complex)
        Au = self.op.apply_A(up)
        Atv = self.op.apply_At(um)
        rho_p = self.traces.rho(up)
        rho_m = self.traces.rho(um)
        jump = rho_m - self.T_used @ rho_p
        out[:N] = Au
        out[N - half : N] = jump[half:]
        out[N:] = -Atv
        out[N : N + half] = jump[:half]
        return out

    # -- solving ----------------------------------------------------------

    def solve(self, rhs_plus=None, rhs_minus=None, jump=None):
        """Solve the double system.

        rhs_plus / rhs_minus are interior functions entering the kept
        collocation rows of the respective blocks; jump is boundary data
        for the transmission rows (rho u- - T rho u+ = jump).  Returns the
        pair (u_plus, u_minus) as flat grid vectors.
        """
        d = self.disc
        N = d.n_interior
        half = d.n_theta * d.rank
        gp = np.zeros(N, dtype=complex) if rhs_plus is None else np.asarray(
            rhs_plus, dtype=complex
        ).reshape(N)
        gm = np.zeros(N, dtype=complex) if rhs_minus is None else np.asarray(
            rhs_minus, dtype=complex
        ).reshape(N)
        gj = np.zeros(2 * half, dtype=complex) if jump is None else np.asarray(
            jump, dtype=complex
        ).reshape(2 * half)
        if not self._mode_path:
            rhs = self._pack_rhs_dense(gp, gm, gj)
            sol = sla.lu_solve(self._dense_lu, rhs)
            return sol[:N], sol[N:]
        return self._solve_modes(gp, gm, gj)

    def _pack_rhs_dense(self, gp, gm, gj):
        d = self.disc
        N = d.n_interior
        half = d.n_theta * d.rank
        rhs = np.empty(2 * N, dtype=complex)
        rhs[:N] = gp
        rhs[N - half : N] = gj[half:]
        rhs[N:] = gm
        rhs[N : N + half] = gj[:half]
        return rhs

    def _solve_modes(self, gp, gm, gj):
        d = self.disc
        k, n_x, n_t = d.rank, d.n_x, d.n_theta
        N = d.n_interior
        nk = k * n_x

        def to_modes(g):
            return np.fft.fft(g.reshape(n_x, n_t, k), axis=1) / n_t

        gp_m = to_modes(gp)
        gm_m = to_modes(gm)
        gj0 = np.fft.fft(gj[: n_t * k].reshape(n_t, k), axis=0) / n_t
        gjL = np.fft.fft(gj[n_t * k :].reshape(n_t, k), axis=0) / n_t

        up_m = np.zeros_like(gp_m)
        um_m = np.zeros_like(gm_m)
        for idx in range(n_t):
            rhs = np.empty(2 * nk, dtype=complex)
            rp = gp_m[:, idx, :].reshape(nk)
            rm = gm_m[:, idx, :].reshape(nk)
            rhs[: nk - k] = rp[: nk - k]
            rhs[nk - k : nk] = gjL[idx]
            rhs[nk : nk + k] = gj0[idx]
            rhs[nk + k :] = rm[k:]
            sol = sla.lu_solve(self._lus[idx], rhs)
            up_m[:, idx, :] = sol[:nk].reshape(n_x, k)
            um_m[:, idx, :] = sol[nk:].reshape(n_x, k)
        up = np.fft.ifft(up_m, axis=1) * n_t
        um = np.fft.ifft(um_m, axis=1) * n_t
        return up.reshape(N), um.reshape(N)

    # -- kernel ----------------------------------------------------------

    def kernel_data(self) -> dict:
        """Numerical kernel with singular-value gap certification."""
        if self._kernel is not None:
            return self._kernel
        d = self.disc
        if self._mode_path:
            sig_max = 0.0
            per_block = []
            for idx, M in enumerate(self._blocks):
                U, S, Vh = np.linalg.svd(M)
                per_block.append((idx, S, Vh))
                sig_max = max(sig_max, float(S[0]))
            tau = self.rank_tol * sig_max
            null_cols = []
            all_svals = []
            for idx, S, Vh in per_block:
                all_svals.extend(S.tolist())
                for j in range(len(S)):
                    if S[j] <= tau:
                        null_cols.append((idx, Vh[j].conj()))
            basis = self._embed_mode_vectors(null_cols)
            all_svals = np.sort(np.asarray(all_svals))
        else:
            S = np.linalg.svd(self._dense, compute_uv=False)
            sig_max = float(S[0])
            tau = self.rank_tol * sig_max
            n_null = int(np.sum(S <= tau))
            if n_null:
                U, S2, Vh = np.linalg.svd(self._dense)
                basis = Vh[len(S) - n_null :].conj().T
            else:
                basis = np.zeros((2 * d.n_interior, 0), dtype=complex)
            all_svals = np.sort(S)
        below = all_svals[all_svals <= tau]
        above = all_svals[all_svals > tau]
        smallest_kept = float(above[0]) if above.size else 0.0
        # empty kernel: certify by distance of sigma_min to the threshold
        largest_cut = float(below[-1]) if below.size else tau
        gap_ratio = smallest_kept / max(largest_cut, 1e-300)
        self._kernel = {
            "basis": basis,
            "dim": basis.shape[1],
            "sigma_max": sig_max,
            "smallest_kept_sv": smallest_kept,
            "gap_ratio": float(gap_ratio),
            "rank_tol": self.rank_tol,
        }
        return self._kernel

    def _embed_mode_vectors(self, cols):
        d = self.disc
        k, n_x, n_t = d.rank, d.n_x, d.n_theta
        N = d.n_interior
        nk = k * n_x
        out = np.zeros((2 * N, len(cols)), dtype=complex)
        for j, (idx, v) in enumerate(cols):
            phase = np.exp(1j * idx * 2.0 * np.pi * np.arange(n_t) / n_t)
            for half, sl in ((0, slice(0, nk)), (1, slice(nk, 2 * nk))):
                band = v[sl].reshape(n_x, k)
                grid = band[:, None, :] * phase[None, :, None]
                out[half * N : (half + 1) * N, j] = grid.reshape(N)
            out[:, j] /= np.linalg.norm(out[:, j])
        return out

    @property
    def kernel_basis(self) -> np.ndarray:
        return self.kernel_data()["basis"]


def assemble_double(
    op: AssembledOperator,
    T=None,
    traces: TraceSystem = None,
    rank_tol: float = 1e-10,
    force_dense: bool = False,
) -> DoubleOperator:
    """Build the discrete double; warns (flag) when positivity fails.

    T defaults to the spec's boundary morphism.  The Shapiro-Lopatinskii
    report is attached; positivity failure sets positivity_warning rather
    than aborting, since the construction itself remains meaningful.
    """
    from .operator import check_ellipticity_and_sl

    if traces is None:
        from .geometry import trace_and_dual

        traces = trace_and_dual(op.disc)
    if T is None:
        T = transmission_morphism(op)
    T = np.asarray(T, dtype=complex)
    if T.shape != (op.disc.n_boundary, op.disc.n_boundary):
        raise ConfigError("boundary morphism has the wrong shape")
    sv = np.linalg.svd(T, compute_uv=False)
    if sv[-1] <= 1e-12 * sv[0]:
        raise ConfigError("boundary morphism T is singular")
    report = check_ellipticity_and_sl(op.collar, T, op.disc)
    return DoubleOperator(op, T, traces, rank_tol=rank_tol, sl_report=report,
                          force_dense=force_dense)


def ghost_solutions(
    op: AssembledOperator,
    traces: TraceSystem,
    rank_tol: float = 1e-10,
    gap_min: float = 10.0,
) -> dict:
    """Bases of Z0(A) and Z0(A^t): solutions vanishing on the whole boundary.

    Numerical nullspace of the stacked system [A_h; rho] (and the adjoint
    analogue), with the singular-value gap that justifies each dimension.
    Raises RankGapError when the gap ratio is below gap_min.
    """
    d = op.disc
    out = {}
    for tag in ("A", "At"):
        if op.spec.is_theta_constant():
            dims = 0
            cols = []
            svals = []
            sig_max = 0.0
            per = []
            for m in d.mode_indices():
                Am, Atm = op.mode_blocks(int(m))
                M = Am if tag == "A" else Atm
                k, n_x = d.rank, d.n_x
                stack = np.vstack(
                    [
                        M,
                        np.eye(k * n_x)[:k, :],
                        np.eye(k * n_x)[-k:, :],
                    ]
                )
                S = np.linalg.svd(stack, compute_uv=False)
                per.append((int(m), stack, S))
                sig_max = max(sig_max, float(S[0]))
            tau = rank_tol * sig_max
            for m, stack, S in per:
                svals.extend(S.tolist())
                n_null = int(np.sum(S <= tau))
                if n_null:
                    _, _, Vh = np.linalg.svd(stack)
                    for j in range(n_null):
                        cols.append((m, Vh[-(j + 1)].conj()))
            svals = np.sort(np.asarray(svals))
            basis = _embed_single_mode_vectors(d, cols)
        else:
            A = op.matrix_A() if tag == "A" else op.matrix_At()
            R = traces.rho_matrix()
            stack = np.vstack([A, R])
            S = np.linalg.svd(stack, compute_uv=False)
            sig_max = float(S[0])
            tau = rank_tol * sig_max
            n_null = int(np.sum(S <= tau))
            if n_null:
                _, _, Vh = np.linalg.svd(stack)
                basis = Vh[-n_null:].conj().T
            else:
                basis = np.zeros((d.n_interior, 0), dtype=complex)
            svals = np.sort(S)
        below = svals[svals <= tau]
        above = svals[svals > tau]
        smallest_kept = float(above[0]) if above.size else 0.0
        largest_cut = float(below[-1]) if below.size else tau
        ratio = smallest_kept / max(largest_cut, 1e-300)
        if ratio < gap_min:
            raise RankGapError(
                f"ghost dimension unresolved for {tag}: gap ratio {ratio:.2f} < "
                f"{gap_min}"
            )
        out[tag] = {
            "basis": basis,
            "dim": basis.shape[1],
            "gap_ratio": float(ratio),
        }
    return {
        "Z0_A": out["A"]["basis"],
        "Z0_At": out["At"]["basis"],
        "dim_A": out["A"]["dim"],
        "dim_At": out["At"]["dim"],
        "gap_ratio_A": out["A"]["gap_ratio"],
        "gap_ratio_At": out["At"]["gap_ratio"],
    }


def _embed_single_mode_vectors(disc, cols):
    k, n_x, n_t = disc.rank, disc.n_x, disc.n_theta
    N = disc.n_interior
    out = np.zeros((N, len(cols)), dtype=complex)
    for j, (m, v) in enumerate(cols):
        phase = np.exp(1j * m * 2.0 * np.pi * np.arange(n_t) / n_t)
        grid = v.reshape(n_x, k)[:, None, :] * phase[None, :, None]
        out[:, j] = grid.reshape(N) / np.linalg.norm(grid)
    return out


@dataclass
class CalderonBundle:
    """Poisson operators, Calderon projections and their diagnostics."""

    K_plus: np.ndarray
    K_minus: np.ndarray
    C_plus: np.ndarray
    C_minus: np.ndarray
    T_used: np.ndarray
    diagnostics: dict

    @property
    def idem_residual(self) -> float:
        return self.diagnostics["idem_residual"]

    @property
    def compl_residual(self) -> float:
        return self.diagnostics["compl_residual"]

    @property
    def sym_residual(self) -> float:
        return self.diagnostics["sym_residual"]

    @property
    def kernel_residual(self) -> float:
        return self.diagnostics["kernel_residual"]


def calderon(
    dbl: DoubleOperator,
    op: AssembledOperator = None,
    traces: TraceSystem = None,
    ker_tol: float = 1e-8,
    residual_guard: float = 100.0,
) -> CalderonBundle:
    """Construct K+/-, C+/- column by column through the double solve.

    For each boundary basis vector xi the pair (u+, u-) solves the
    homogeneous interior equations with transmission jump -T xi; then
    K+ xi = u+, K- xi = -u-, C+ = rho K+ and C- = -T^{-1} rho u-.
    """
    op = op or dbl.op
    traces = traces or dbl.traces
    d = dbl.disc
    nb = d.n_boundary
    N = d.n_interior
    K_plus = np.empty((N, nb), dtype=complex)
    K_minus = np.empty((N, nb), dtype=complex)
    C_plus = np.empty((nb, nb), dtype=complex)
    C_minus = np.empty((nb, nb), dtype=complex)
    Tinv = np.linalg.inv(dbl.T_used)
    for j in range(nb):
        xi = np.zeros(nb, dtype=complex)
        xi[j] = 1.0
        up, um = dbl.solve(jump=-(dbl.T_used @ xi))
        K_plus[:, j] = up
        K_minus[:, j] = -um
        C_plus[:, j] = traces.rho(up)
        C_minus[:, j] = -(Tinv @ traces.rho(um))

    eye = np.eye(nb)
    idem = float(np.linalg.norm(C_plus @ C_plus - C_plus, 2))
    compl_ = float(np.linalg.norm(C_plus + C_minus - eye, 2))
    sym = float(np.linalg.norm(C_plus - C_plus.conj().T, 2))

    # interior residual away from the collar (A K+ should vanish in ker A)
    delta, _, _ = collar_cutoff(d.config.length)
    mask = (d.x_nodes > delta) & (d.x_nodes < d.config.length - delta)
    mask_flat = np.repeat(mask, d.n_theta * d.rank)
    kres = 0.0
    for j in range(0, nb, max(1, nb // 16)):
        r = op.apply_A(K_plus[:, j])
        kres = max(kres, float(np.max(np.abs(r[mask_flat]))))

    diag = {
        "idem_residual": idem,
        "compl_residual": compl_,
        "sym_residual": sym,
        "kernel_residual": kres,
        "mode_coupling": _mode_coupling_mass(d, C_plus)
        if not dbl._mode_path
        else 0.0,
        "orthogonal_choice": isinstance(op.spec.boundary_morphism, str)
        and op.spec.boundary_morphism == "inverse_J_adjoint",
        "positivity_warning": dbl.positivity_warning,
    }
    if max(idem, compl_) > residual_guard * ker_tol:
        raise NumericalInconsistencyError(
            "Calderon construction inconsistent: "
            f"idem={idem:.3e}, compl={compl_:.3e} exceed "
            f"{residual_guard} x {ker_tol:.1e}; diagnostics: {diag}"
        )
    return CalderonBundle(
        K_plus=K_plus,
        K_minus=K_minus,
        C_plus=C_plus,
        C_minus=C_minus,
        T_used=dbl.T_used,
        diagnostics=diag,
    )


def _mode_coupling_mass(disc, C) -> float:
    U, Uinv = boundary_mode_transform(disc)
    M = U @ C @ Uinv
    k2 = 2 * disc.rank
    off = M.copy()
    for m in range(disc.n_theta):
        sl = slice(k2 * m, k2 * (m + 1))
        off[sl, sl] = 0.0
    return float(np.linalg.norm(off, 2))


def mode_blocks_of_boundary_operator(disc, C) -> np.ndarray:
    """Per-mode (2k x 2k) blocks of a boundary operator, FFT conjugation."""
    U, Uinv = boundary_mode_transform(disc)
    M = U @ C @ Uinv
    k2 = 2 * disc.rank
    return np.stack(
        [M[k2 * m : k2 * (m + 1), k2 * m : k2 * (m + 1)] for m in range(disc.n_theta)]
    )


# ----------------------------------------------------------------------
# correction formula


def _collar_field_values(comp, disc, xprime):
    """Inward-frame coefficient values along the collar, per x' node."""
    th = disc.theta_nodes
    J = comp.J_in.sample(xprime, th)
    b1 = comp.beta1_in.sample(xprime, th)
    b0 = comp.beta0_in.sample(xprime, th)
    C = comp.C_in.sample(xprime, th)
    dJH = comp.J_in.dx().conj_transpose().sample(xprime, th)
    return J, b1, b0, C, dJH


def _mult(blockrow, vec, k):
    """Apply pointwise (n_theta, k, k) multiplier to stacked circle data."""
    return np.einsum("tij,tj->ti", blockrow, vec.reshape(-1, k)).reshape(-1)


def correction_formula_check(
    dbl: DoubleOperator,
    op: AssembledOperator = None,
    bundle: CalderonBundle = None,
    quad_contour=None,
    mode_limit: int = None,
    cond_guard: float = 1e8,
) -> dict:
    """Residual of the sectorial correction identity for C+.

    Rebuilds C+ from the tangential sectorial data: the jump term
    P+ - rho+ A_T^{-1} S(A,T), post-composed with (P+ + P-^*)^{-1}, where
    the minus projection absorbs the imaginary block (complementary
    contour).  Returns the per-mode residual profile and the commutator
    flag for [B0^t, J0^t T].
    """
    op = op or dbl.op
    d = dbl.disc
    k, n_t, n_x = d.rank, d.n_theta, d.n_x
    half = n_t * k
    traces = dbl.traces
    if bundle is None:
        bundle = calderon(dbl, op, traces)

    # commutator order flag: the d/dtheta coefficient of [B0^t, J0^t T]
    comm_flag = True
    comm_norm = 0.0
    for ci, comp in enumerate(dbl.op.collar):
        Tblk = dbl.T_used[ci * half : (ci + 1) * half, ci * half : (ci + 1) * half]
        for it in range(n_t):
            G = comp.J0[it].conj().T @ Tblk[it * k : (it + 1) * k, it * k : (it + 1) * k]
            c1 = -comp.beta1_0[it].conj().T
            r = float(np.max(np.abs(c1 @ G - G @ c1)))
            comm_norm = max(comm_norm, r)
            if r > 1e-10 * max(1.0, float(np.max(np.abs(G)))):
                comm_flag = False

    # per-component cluster calculus of the tangential operator
    clusters = []
    P_plus_blocks = []
    for comp in dbl.op.collar:
        B0 = comp.B0_matrix(d)
        tol = _imag_tol(B0)
        right = SchurCluster(B0, lambda z: z.real > tol)
        nonright = SchurCluster(B0, lambda z: z.real <= tol)
        clusters.append((right, nonright, B0))
        P_plus_blocks.append(right.projector())
    P_plus = sla.block_diag(*P_plus_blocks)
    P_minus_c = np.eye(2 * half) - P_plus
    denom = P_plus + P_minus_c.conj().T
    cond = np.linalg.cond(denom)
    if cond > cond_guard:
        raise NumericalInconsistencyError(
            f"correction formula ill-conditioned: cond(P+ + P-*) = {cond:.3e}"
        )

    L = d.config.length
    # The identity needs phi(0) = 1 and phi(L) = 0 exactly, nothing more.
    # An analytic taper keeps the collocation error of phi * Q(x) at
    # spectral accuracy; the geometry bump is too rough for that here.
    phi = lambda t: 0.5 * (1.0 + np.cos(np.pi * np.asarray(t, dtype=float) / L))
    dphi = lambda t: -0.5 * np.pi / L * np.sin(np.pi * np.asarray(t, dtype=float) / L)
    x = d.x_nodes

    remainder = np.empty((2 * half, 2 * half), dtype=complex)
    for ci, comp in enumerate(dbl.op.collar):
        right, nonright, B0 = clusters[ci]
        xprime = x if comp.inward_sign > 0 else (L - x)[::-1]
        node_of = np.arange(n_x) if comp.inward_sign > 0 else np.arange(n_x)[::-1]
        active = np.nonzero(np.abs(phi(xprime)) + np.abs(dphi(xprime)) > 1e-300)[0]
        J, b1, b0v, C, dJH = _collar_field_values(comp, d, xprime)
        JH = np.conj(np.swapaxes(J, 2, 3))
        b1H = np.conj(np.swapaxes(b1, 2, 3))
        b0H = np.conj(np.swapaxes(b0v, 2, 3))
        CH = np.conj(np.swapaxes(C, 2, 3))
        B00 = B0
        Dt = np.kron(d.D_theta, np.eye(k))
        Tc = dbl.T_used[ci * half : (ci + 1) * half, ci * half : (ci + 1) * half]

        # columns: all boundary basis vectors on this circle
        Qp = {i: right.exp_factor(float(xprime[i])) for i in active}
        QmH = {
            i: nonright.exp_factor(float(-xprime[i])).conj().T for i in active
        }
        for col in range(half):
            xi = np.zeros(half, dtype=complex)
            xi[col] = 1.0
            rhs_p = np.zeros(d.n_interior, dtype=complex)
            rhs_m = np.zeros(d.n_interior, dtype=complex)
            for i in active:
                xp = float(xprime[i])
                ph, dph = float(phi([xp])[0]), float(dphi([xp])[0])
                qp = Qp[i] @ xi
                # S+ = J phi' q+ + phi (J (B(x') - B0) + C) q+
                Bq = _mult(b1[i], Dt @ qp, k) + _mult(b0v[i], qp, k)
                B0q = B00 @ qp
                s_plus = dph * _mult(J[i], qp, k) + ph * (
                    _mult(J[i], Bq - B0q, k) + _mult(C[i], qp, k)
                )
                # S- = A^t (phi T q-), assembled in the inward frame
                qm = QmH[i] @ xi
                qm_d = QmH[i] @ (B00.conj().T @ xi)
                w = Tc @ (ph * qm)
                w_d = Tc @ (dph * qm + ph * qm_d)
                term_x = -(_mult(dJH[i], w, k) + _mult(JH[i], w_d, k))
                m1 = np.einsum("tij,tjl->til", b1H[i], JH[i])
                term_t = -(Dt @ _mult(m1, w, k))
                term_0 = _mult(
                    np.einsum("tij,tjl->til", b0H[i], JH[i]) + CH[i], w, k
                )
                s_minus = term_x + term_t + term_0
                node = int(node_of[i])
                sl = slice(node * half, (node + 1) * half)
                rhs_p[sl] += s_plus
                rhs_m[sl] += s_minus
            up, _ = dbl.solve(rhs_plus=rhs_p, rhs_minus=rhs_m)
            remainder[:, ci * half + col] = traces.rho(up)

    reconstructed = (P_plus - remainder) @ np.linalg.inv(denom)
    resid_full = bundle.C_plus - reconstructed

    modes = d.mode_indices()
    blocks_resid = mode_blocks_of_boundary_operator(d, resid_full)
    blocks_gap = mode_blocks_of_boundary_operator(d, bundle.C_plus - P_plus)
    per_mode_resid = np.linalg.norm(blocks_resid, ord=2, axis=(1, 2))
    per_mode_gap = np.linalg.norm(blocks_gap, ord=2, axis=(1, 2))
    limit = mode_limit if mode_limit is not None else n_t // 4
    sel = np.abs(modes) <= limit
    return {
        "residual": float(np.max(per_mode_resid[sel])),
        "mode_limit": int(limit),
        "modes": modes,
        "per_mode_residual": per_mode_resid,
        "per_mode_gap_to_sectorial": per_mode_gap,
        "commutator_order_flag": comm_flag,
        "commutator_symbol_norm": comm_norm,
        "denominator_condition": float(cond),
    }


def _theta_constant_morphism(disc: Discretization, T: np.ndarray) -> bool:
    """True when every theta node of each circle carries the same k x k block."""
    k = disc.rank
    half = disc.n_theta * k
    for off in (0, half):
        blk = T[off : off + half, off : off + half]
        first = blk[:k, :k]
        for it in range(disc.n_theta):
            sl = slice(it * k, (it + 1) * k)
            if not np.allclose(blk[sl, sl], first, atol=1e-13, rtol=0.0):
                return False
        # off-diagonal theta coupling disqualifies the mode path
        dense_offdiag = blk.copy()
        for it in range(disc.n_theta):
            sl = slice(it * k, (it + 1) * k)
            dense_offdiag[sl, sl] = 0.0
        if np.max(np.abs(dense_offdiag)) > 1e-13:
            return False
    cross = np.max(np.abs(T[:half, half:])) + np.max(np.abs(T[half:, :half]))
    return cross <= 1e-13
