"""Assembly of the first-order operator A = J(d/dx + beta1 d/dtheta + beta0) + C.

Produces the discrete operator, its formal adjoint (collocation of the
adjoint differential expression), the collar data at both boundary circles
in inward coordinates, and the structural checks: ellipticity of the
principal symbol, positive definiteness of J0*T, and the
Shapiro-Lopatinskii condition for the transmission boundary condition.

Collar convention: at the x = L circle everything is expressed in the
inward coordinate x' = L - x, so J0 = -J(L, .) and the tangential operator
flips sign there.  All signs downstream (Green's formula, the symplectic
form, the transmission morphism T) use this convention.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .coefficients import CoefficientField
from .errors import ConfigError, EllipticityError, SpectralCuttingError
from .geometry import Discretization, GeometryConfig, TraceSystem, collar_cutoff

__all__ = [
    "OperatorSpec",
    "CollarComponent",
    "CollarData",
    "AssembledOperator",
    "assemble_operator",
    "check_ellipticity_and_sl",
    "green_defect",
    "transmission_morphism",
    "cauchy_riemann_spec",
    "dirac_sigma1_spec",
    "direct_sum_spec",
]

SYMBOLIC_T = ("inverse_J_adjoint", "J_unitary_part")


@dataclass(frozen=True)
class OperatorSpec:
    """Declarative coefficients of A plus the boundary morphism choice."""

    geometry: GeometryConfig
    J: CoefficientField
    beta1: CoefficientField
    beta0: CoefficientField
    C: CoefficientField
    boundary_morphism: object = "inverse_J_adjoint"

    def __post_init__(self):
        k = self.geometry.rank
        for name in ("J", "beta1", "beta0", "C"):
            f = getattr(self, name)
            if not isinstance(f, CoefficientField):
                raise ConfigError(f"coefficient {name} must be a CoefficientField")
            if f.k != k:
                raise ConfigError(
                    f"coefficient {name} has fiber rank {f.k}, geometry has {k}"
                )
        if isinstance(self.boundary_morphism, str):
            if self.boundary_morphism not in SYMBOLIC_T:
                raise ConfigError(
                    f"unknown symbolic boundary morphism "
                    f"'{self.boundary_morphism}'; choices: {SYMBOLIC_T}"
                )

    def is_theta_constant(self) -> bool:
        return all(
            getattr(self, n).is_theta_constant() for n in ("J", "beta1", "beta0", "C")
        )


@dataclass(frozen=True)
class CollarComponent:
    """Collar data of one boundary circle in its inward coordinate."""

    name: str                 # "x0" or "xL"
    inward_sign: int          # +1 at x=0, -1 at x=L (dx = sign * dx')
    x_of_inward: float        # boundary abscissa in the global coordinate
    J0: np.ndarray            # (n_theta, k, k), inward convention
    beta1_0: np.ndarray       # (n_theta, k, k), inward tangential first-order part
    beta0_0: np.ndarray       # (n_theta, k, k)
    C0: np.ndarray            # (n_theta, k, k)
    C0_tilde: np.ndarray      # (n_theta, k, k), adjoint-side zeroth coefficient
    # coefficient fields in the inward coordinate, used by metrics / S(A,T)
    J_in: CoefficientField
    beta1_in: CoefficientField
    beta0_in: CoefficientField
    C_in: CoefficientField

    def B0_matrix(self, disc: Discretization) -> np.ndarray:
        """Discrete tangential operator B0 = beta1_0 d/dtheta + beta0_0 on S^1."""
        k = disc.rank
        n = disc.n_theta
        Dt = np.kron(disc.D_theta, np.eye(k))
        mul1 = sla.block_diag(*self.beta1_0)
        mul0 = sla.block_diag(*self.beta0_0)
        return mul1 @ Dt + mul0

    def b0_symbol(self, itheta: int, zeta: float) -> np.ndarray:
        """Leading symbol of B0 at a theta node: b0 = i zeta beta1_0."""
        return 1j * zeta * self.beta1_0[itheta]


@dataclass(frozen=True)
class CollarData:
    components: tuple  # (CollarComponent at x=0, CollarComponent at x=L)

    def __iter__(self):
        return iter(self.components)

    @property
    def at0(self) -> CollarComponent:
        return self.components[0]

    @property
    def atL(self) -> CollarComponent:
        return self.components[1]

    def J0_boundary(self, disc: Discretization) -> np.ndarray:
        """Block-diagonal J0 on the full boundary (inward convention)."""
        blocks = [sla.block_diag(*c.J0) for c in self.components]
        return sla.block_diag(*blocks)

    def B0_boundary(self, disc: Discretization) -> np.ndarray:
        return sla.block_diag(*[c.B0_matrix(disc) for c in self.components])


class AssembledOperator:
    """Discrete A, its formal adjoint, collar data and diagnostics."""

    def __init__(self, spec, disc, collar, values):
        self.spec = spec
        self.disc = disc
        self.collar = collar
        self._v = values  # dict of sampled coefficient arrays
        self.green_defect_bound = None
        self.ellipticity_constant = values["ellipticity_constant"]

    # -- application (cheap, used everywhere) ---------------------------

    def apply_A(self, u) -> np.ndarray:
        d = self.disc
        g = d.grid(np.asarray(u, dtype=complex))
        du = np.einsum("ab,btk->atk", d.D_x, g)
        dt = np.einsum("ts,ask->atk", d.D_theta, g)
        out = (
            np.einsum("atij,atj->ati", self._v["J"], du)
            + np.einsum("atij,atj->ati", self._v["Jb1"], dt)
            + np.einsum("atij,atj->ati", self._v["Jb0C"], g)
        )
        return out.reshape(-1)

    def apply_At(self, v) -> np.ndarray:
        """Collocation of A^t v = -d/dx(J* v) - d/dth(b1* J* v) + (b0* J* + C*) v."""
        d = self.disc
        g = d.grid(np.asarray(v, dtype=complex))
        Jv = np.einsum("atij,atj->ati", self._v["JH"], g)
        bJv = np.einsum("atij,atj->ati", self._v["b1HJH"], g)
        out = (
            -np.einsum("ab,btk->atk", d.D_x, Jv)
            - np.einsum("ts,ask->atk", d.D_theta, bJv)
            + np.einsum("atij,atj->ati", self._v["b0HJHCH"], g)
        )
        return out.reshape(-1)

    # -- dense matrices (built on demand; only sensible at desk scale) --

    def matrix_A(self) -> np.ndarray:
        return self._dense("A")

    def matrix_At(self) -> np.ndarray:
        return self._dense("At")

    def _dense(self, which: str) -> np.ndarray:
        key = "_dense_" + which
        cached = getattr(self, key, None)
        if cached is not None:
            return cached
        d = self.disc
        n = d.n_interior
        if n > 6200:
            raise ConfigError(
                f"dense operator matrix with {n} unknowns refused; "
                "use apply_A/apply_At or the per-mode path"
            )
        apply_fn = self.apply_A if which == "A" else self.apply_At
        out = np.empty((n, n), dtype=complex)
        e = np.zeros(n, dtype=complex)
        for j in range(n):
            e[j] = 1.0
            out[:, j] = apply_fn(e)
            e[j] = 0.0
        setattr(self, key, out)
        return out

    # -- per-mode blocks (exact for theta-constant coefficients) --------

    def mode_blocks(self, m: int):
        """(A_m, At_m) collocation blocks of size (k n_x) for Fourier mode m.

        The Nyquist bin carries the discrete symbol 0, matching the action
        of the Fourier differentiation matrix on that mode.
        """
        if not self.spec.is_theta_constant():
            raise ConfigError("mode blocks require theta-constant coefficients")
        d = self.disc
        k = d.rank
        x = d.x_nodes
        sym = 1j * m if abs(m) < d.n_theta // 2 else 0.0j
        J = self.spec.J.sample_x(x)
        b1 = self.spec.beta1.sample_x(x)
        b0 = self.spec.beta0.sample_x(x)
        C = self.spec.C.sample_x(x)
        dJH = self.spec.J.dx().conj_transpose().sample_x(x)
        JH = np.conj(np.swapaxes(J, 1, 2))
        b1H = np.conj(np.swapaxes(b1, 1, 2))
        b0H = np.conj(np.swapaxes(b0, 1, 2))
        CH = np.conj(np.swapaxes(C, 1, 2))

        Dx = d.D_x
        n = d.n_x
        A = np.zeros((n * k, n * k), dtype=complex)
        At = np.zeros((n * k, n * k), dtype=complex)
        for i in range(n):
            rows = slice(i * k, (i + 1) * k)
            for j in range(n):
                cols = slice(j * k, (j + 1) * k)
                A[rows, cols] = Dx[i, j] * J[i]
                At[rows, cols] = -Dx[i, j] * JH[j]
            zi = J[i] @ (sym * b1[i] + b0[i]) + C[i]
            A[rows, rows.start:rows.stop] += zi
            zti = -dJH[i] - sym * (b1H[i] @ JH[i]) + b0H[i] @ JH[i] + CH[i]
            At[rows, rows.start:rows.stop] += zti
        return A, At

    def selfadjoint_defect(self) -> float:
        """Max-norm distance between A and its adjoint collocation.

        Zero (to roundoff) iff the differential expression is formally
        self-adjoint and the collocations coincide.
        """
        d = self.disc
        rng = np.random.default_rng(1812)
        worst = 0.0
        for _ in range(4):
            u = rng.standard_normal(d.n_interior) + 1j * rng.standard_normal(
                d.n_interior
            )
            r = self.apply_A(u) - self.apply_At(u)
            worst = max(worst, float(np.max(np.abs(r)) / np.max(np.abs(u))))
        return worst


def _ellipticity_scan(spec: OperatorSpec, disc: Discretization, n_dir: int = 32):
    """Smallest singular value of the principal symbol on the sampled cosphere."""
    Jv = spec.J.sample(disc.x_nodes, disc.theta_nodes)
    b1v = spec.beta1.sample(disc.x_nodes, disc.theta_nodes)
    k = disc.rank
    t = np.pi * np.arange(n_dir) / n_dir  # includes the axis directions
    xi = np.cos(t)
    zeta = np.sin(t)
    worst = np.inf
    witness = None
    scale = max(np.max(np.abs(Jv)), np.max(np.abs(b1v)), 1.0)
    for idx in range(n_dir):
        sym = 1j * np.einsum(
            "atij,atjl->atil", Jv, xi[idx] * np.eye(k)[None, None] + zeta[idx] * b1v
        )
        sv = np.linalg.svd(sym, compute_uv=False)
        smin = float(sv[..., -1].min())
        if smin < worst:
            worst = smin
            flat = int(np.argmin(sv[..., -1]))
            witness = (
                flat // disc.n_theta,
                flat % disc.n_theta,
                float(xi[idx]),
                float(zeta[idx]),
            )
    if worst <= 1e-10 * scale:
        ix, it, xs, zs = witness
        raise EllipticityError(
            "ellipticity violated: principal symbol singular near node "
            f"(x={disc.x_nodes[ix]:.6g}, theta={disc.theta_nodes[it]:.6g}) "
            f"at (xi, zeta)=({xs:.4f}, {zs:.4f}), sigma_min={worst:.3e}"
        )
    return worst


def _collar_component(spec: OperatorSpec, disc: Discretization, at_L: bool):
    L = spec.geometry.length
    if at_L:
        # inward coordinate x' = L - x
        J_in = spec.J.compose_affine(-1.0, L) * (-1.0)
        b1_in = spec.beta1.compose_affine(-1.0, L) * (-1.0)
        b0_in = spec.beta0.compose_affine(-1.0, L) * (-1.0)
        C_in = spec.C.compose_affine(-1.0, L)
        name, sign, x0 = "xL", -1, L
    else:
        J_in, b1_in, b0_in, C_in = spec.J, spec.beta1, spec.beta0, spec.C
        name, sign, x0 = "x0", +1, 0.0
    th = disc.theta_nodes
    zero = np.zeros(1)
    J0 = J_in.at_x(0.0).sample(zero, th)[0]
    b1_0 = b1_in.at_x(0.0).sample(zero, th)[0]
    b0_0 = b0_in.at_x(0.0).sample(zero, th)[0]
    C0 = C_in.at_x(0.0).sample(zero, th)[0]
    # adjoint-side zeroth coefficient: C0~ = C(0)^H - (dJ/dx')(0)^H
    C0t_field = C_in.at_x(0.0).conj_transpose() - J_in.dx().at_x(0.0).conj_transpose()
    C0_tilde = C0t_field.sample(zero, th)[0]
    return CollarComponent(
        name=name,
        inward_sign=sign,
        x_of_inward=x0,
        J0=J0,
        beta1_0=b1_0,
        beta0_0=b0_0,
        C0=C0,
        C0_tilde=C0_tilde,
        J_in=J_in,
        beta1_in=b1_in,
        beta0_in=b0_in,
        C_in=C_in,
    )


def assemble_operator(spec: OperatorSpec, disc: Discretization) -> AssembledOperator:
    """Collocate A and A^t on the grid and extract collar data.

    Raises EllipticityError when the principal symbol degenerates on the
    sampled cosphere and ConfigError when J is singular at a node.
    """
    if spec.geometry != disc.config:
        raise ConfigError("spec geometry does not match the discretization")
    x, th = disc.x_nodes, disc.theta_nodes
    J = spec.J.sample(x, th)
    b1 = spec.beta1.sample(x, th)
    b0 = spec.beta0.sample(x, th)
    C = spec.C.sample(x, th)

    svJ = np.linalg.svd(J, compute_uv=False)
    cond = float(svJ[..., 0].max() / max(svJ[..., -1].min(), 1e-300))
    if svJ[..., -1].min() <= 1e-12 * svJ[..., 0].max():
        flat = int(np.argmin(svJ[..., -1]))
        ix, it = flat // disc.n_theta, flat % disc.n_theta
        raise ConfigError(
            f"J singular at node (x={x[ix]:.6g}, theta={th[it]:.6g})"
        )

    ell = _ellipticity_scan(spec, disc)

    JH = np.conj(np.swapaxes(J, 2, 3))
    b1H = np.conj(np.swapaxes(b1, 2, 3))
    b0H = np.conj(np.swapaxes(b0, 2, 3))
    CH = np.conj(np.swapaxes(C, 2, 3))
    values = {
        "J": J,
        "Jb1": np.einsum("atij,atjl->atil", J, b1),
        "Jb0C": np.einsum("atij,atjl->atil", J, b0) + C,
        "JH": JH,
        "b1HJH": np.einsum("atij,atjl->atil", b1H, JH),
        "b0HJHCH": np.einsum("atij,atjl->atil", b0H, JH) + CH,
        "J_condition": cond,
        "ellipticity_constant": ell,
    }
    collar = CollarData(
        components=(
            _collar_component(spec, disc, at_L=False),
            _collar_component(spec, disc, at_L=True),
        )
    )
    return AssembledOperator(spec, disc, collar, values)


def transmission_morphism(op: AssembledOperator) -> np.ndarray:
    """The boundary morphism T on the full boundary, per the spec choice.

    Symbolic choices are applied per component in the inward convention:
    (J0^*)^{-1}, or the unitary part J0 (J0^* J0)^{-1/2}.
    """
    choice = op.spec.boundary_morphism
    symbolic = isinstance(choice, str)
    if not symbolic:
        arr = np.asarray(choice, dtype=complex)
        if arr.shape != (2, op.disc.rank, op.disc.rank):
            raise ConfigError(
                "explicit boundary morphism must be a pair of k x k "
                "matrices (one per boundary circle)"
            )
    blocks = []
    for ci, comp in enumerate(op.collar):
        mats = []
        for Jt in comp.J0:
            if not symbolic:
                mats.append(arr[ci])
            elif choice == "inverse_J_adjoint":
                mats.append(np.linalg.inv(Jt.conj().T))
            else:  # J_unitary_part
                H = sla.sqrtm(Jt.conj().T @ Jt)
                mats.append(Jt @ np.linalg.inv(H))
        blocks.append(sla.block_diag(*mats))
    return sla.block_diag(*blocks)


def check_ellipticity_and_sl(
    collar: CollarData,
    T: np.ndarray,
    disc: Discretization,
    cutting_tol: float = 1e-9,
) -> dict:
    """Positivity of J0^* T and the Shapiro-Lopatinskii condition.

    For every theta node and zeta = +-1 the map
    (e+, e-) -> -J0^t T e+ + e-  restricted to
    im P+(b0) (+) im P-(b0^*) must be bijective.  Returns a report dict
    with boolean verdicts and the failing witnesses.
    """
    k = disc.rank
    n = disc.n_theta
    report = {
        "positivity": True,
        "sl_pass": True,
        "positivity_min_eig": np.inf,
        "sl_min_sv": np.inf,
        "witnesses": [],
    }
    for ci, comp in enumerate(collar):
        Tblk = T[
            ci * n * k : (ci + 1) * n * k,
            ci * n * k : (ci + 1) * n * k,
        ]
        for it in range(n):
            Tt = Tblk[it * k : (it + 1) * k, it * k : (it + 1) * k]
            G = comp.J0[it].conj().T @ Tt
            herm = float(np.max(np.abs(G - G.conj().T)))
            eig = np.linalg.eigvalsh(0.5 * (G + G.conj().T))
            lam = float(eig[0])
            if herm > 1e-10 * max(1.0, float(np.max(np.abs(G)))) or lam <= 0:
                report["positivity"] = False
            report["positivity_min_eig"] = min(report["positivity_min_eig"], lam)
            for zeta in (1.0, -1.0):
                b0 = comp.b0_symbol(it, zeta)
                scale = max(float(np.max(np.abs(b0))), 1e-300)
                ev = np.linalg.eigvals(b0)
                if np.min(np.abs(ev.real)) < cutting_tol * scale:
                    raise SpectralCuttingError(
                        f"symbol admits no spectral cutting at "
                        f"(component {comp.name}, theta index {it}, zeta={zeta:+.0f})"
                    )
                Vp = _invariant_basis(b0, lambda z: z.real > 0)
                Vm = _invariant_basis(b0.conj().T, lambda z: z.real < 0)
                if Vp.shape[1] + Vm.shape[1] != k:
                    report["sl_pass"] = False
                    report["witnesses"].append(
                        (comp.name, it, zeta, 0.0, "dimension mismatch")
                    )
                    continue
                S = np.hstack([-(comp.J0[it].conj().T @ Tt) @ Vp, Vm])
                sv = np.linalg.svd(S, compute_uv=False)
                smin = float(sv[-1]) if sv.size else 0.0
                report["sl_min_sv"] = min(report["sl_min_sv"], smin)
                if smin <= 1e-8 * max(1.0, float(sv[0]) if sv.size else 1.0):
                    report["sl_pass"] = False
                    report["witnesses"].append((comp.name, it, zeta, smin, "singular"))
    return report


def _invariant_basis(mat: np.ndarray, select) -> np.ndarray:
    """Orthonormal basis of the invariant subspace for selected eigenvalues."""
    T, Z, sdim = sla.schur(mat, output="complex", sort=select)
    return Z[:, :sdim]


def boundary_green_morphism(op: AssembledOperator) -> np.ndarray:
    """Block-diagonal J entering Green's formula, inward convention."""
    return op.collar.J0_boundary(op.disc)


def _smooth_probe(disc: Discretization, rng) -> np.ndarray:
    """Analytic test section with slowly decaying spectral tail.

    exp-of-trigonometric envelopes keep the tail visible on coarse grids so
    that the Green defect measures quadrature error, not roundoff.
    """
    L = disc.config.length
    xh = 2.0 * disc.x_nodes / L - 1.0
    th = disc.theta_nodes
    a = 4.0 + 3.0 * rng.random()
    b = 3.0 + 2.0 * rng.random()
    t0 = 2.0 * np.pi * rng.random()
    x0 = 2.0 * rng.random() - 1.0
    env = np.exp(a * 0.5 * (np.cos(np.pi * (xh - x0) / 2.0))) [:, None] * np.exp(
        b * np.cos(th - t0)
    )[None, :]
    phases = rng.standard_normal(disc.rank) + 1j * rng.standard_normal(disc.rank)
    g = env[:, :, None] * phases[None, None, :]
    return g.reshape(-1) / np.max(np.abs(g))


def green_defect(
    op: AssembledOperator,
    disc: Discretization,
    traces: TraceSystem,
    n_samples: int = 6,
    seed: int = 2718,
) -> float:
    """Residual of the discrete Green identity on a fixed smooth test set.

    max |(A s, s') - (s, A^t s') + <J rho s, rho s'>_dM| over the seeded
    samples; stored on the operator as green_defect_bound.
    """
    rng = np.random.default_rng(seed)
    Jb = boundary_green_morphism(op)
    mb = disc.mass_boundary
    worst = 0.0
    for _ in range(n_samples):
        s = _smooth_probe(disc, rng)
        sp = _smooth_probe(disc, rng)
        lhs = disc.inner(op.apply_A(s), sp) - disc.inner(s, op.apply_At(sp))
        bt = np.vdot(traces.rho(sp), mb * (Jb @ traces.rho(s)))
        worst = max(worst, abs(lhs + bt))
    op.green_defect_bound = worst
    return worst


# ----------------------------------------------------------------------
# bundled model operators


def cauchy_riemann_spec(
    length: float = 1.0, n_theta: int = 64, n_x: int = 48
) -> OperatorSpec:
    """A = d/dx + i d/dtheta on the rank-1 cylinder, T = (J0^*)^{-1}."""
    geo = GeometryConfig(length=length, n_theta=n_theta, n_x=n_x, rank=1)
    one = CoefficientField.constant([[1.0]])
    return OperatorSpec(
        geometry=geo,
        J=one,
        beta1=CoefficientField.constant([[1j]]),
        beta0=CoefficientField.zero(1),
        C=CoefficientField.zero(1),
        boundary_morphism="inverse_J_adjoint",
    )


def dirac_sigma1_spec(
    length: float = 1.0, n_theta: int = 64, n_x: int = 48
) -> OperatorSpec:
    """Formally self-adjoint Dirac-type model: A = J0 (d/dx + sigma1 (-i) d/dtheta)."""
    geo = GeometryConfig(length=length, n_theta=n_theta, n_x=n_x, rank=2)
    J0 = np.array([[0.0, 1.0], [-1.0, 0.0]], dtype=complex)
    sigma1 = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
    return OperatorSpec(
        geometry=geo,
        J=CoefficientField.constant(J0),
        beta1=CoefficientField.constant(-1j * sigma1),
        beta0=CoefficientField.zero(2),
        C=CoefficientField.zero(2),
        boundary_morphism="J_unitary_part",
    )


def direct_sum_spec(a: OperatorSpec, b: OperatorSpec) -> OperatorSpec:
    """Block-diagonal sum of two specs on the same grid geometry."""
    ga, gb = a.geometry, b.geometry
    if (ga.length, ga.n_theta, ga.n_x) != (gb.length, gb.n_theta, gb.n_x):
        raise ConfigError("direct sum requires identical cylinder geometry")
    if not isinstance(a.boundary_morphism, str) or (
        a.boundary_morphism != b.boundary_morphism
    ):
        raise ConfigError("direct sum supports matching symbolic boundary morphisms")
    geo = GeometryConfig(
        length=ga.length, n_theta=ga.n_theta, n_x=ga.n_x, rank=ga.rank + gb.rank
    )

    def stack(fa: CoefficientField, fb: CoefficientField) -> CoefficientField:
        P = max(fa.x_degree, fb.x_degree)
        M = max(fa.m_max, fb.m_max)
        k = fa.k + fb.k
        data = np.zeros((P + 1, 2 * M + 1, k, k), dtype=complex)
        for f, off in ((fa, 0), (fb, fa.k)):
            sl = slice(M - f.m_max, M + f.m_max + 1)
            data[: f.x_degree + 1, sl, off : off + f.k, off : off + f.k] += f.data
        return CoefficientField(data)

    return OperatorSpec(
        geometry=geo,
        J=stack(a.J, b.J),
        beta1=stack(a.beta1, b.beta1),
        beta0=stack(a.beta0, b.beta0),
        C=stack(a.C, b.C),
        boundary_morphism=a.boundary_morphism,
    )
