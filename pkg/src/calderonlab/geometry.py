"""Discretized model cylinder M = [0, L] x S^1 with rank-k fibers.

Chebyshev-Lobatto collocation in the axial variable x (boundary circles
are grid points, so traces are exact restrictions), equispaced Fourier
collocation in the angle theta.  Quadrature is Clenshaw-Curtis (x) tensor
trapezoid (theta); all discrete adjoints elsewhere in the package are
taken with respect to these mass matrices.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

__all__ = [
    "GeometryConfig",
    "Discretization",
    "TraceSystem",
    "build_discretization",
    "trace_and_dual",
    "sobolev_weighted_norm",
    "chebyshev_lobatto",
    "clenshaw_curtis_weights",
    "fourier_diff_matrix",
    "barycentric_row",
    "boundary_sobolev_weight",
    "interior_h1_gram",
    "collar_cutoff",
]


@dataclass(frozen=True)
class GeometryConfig:
    """Declarative description of the discretized cylinder."""

    length: float = 1.0
    n_theta: int = 64
    n_x: int = 48
    rank: int = 1

    def __post_init__(self):
        if not self.length > 0:
            raise ConfigError("length must be positive")
        if self.n_theta % 2 != 0:
            raise ConfigError("n_theta must be even")
        if self.n_theta < 8:
            raise ConfigError("n_theta must be >= 8")
        if self.n_x < 8:
            raise ConfigError("n_x must be >= 8")
        if self.rank < 1:
            raise ConfigError("rank must be >= 1")

    def with_resolution(self, n_theta=None, n_x=None) -> "GeometryConfig":
        return dataclasses.replace(
            self,
            n_theta=self.n_theta if n_theta is None else n_theta,
            n_x=self.n_x if n_x is None else n_x,
        )


def chebyshev_lobatto(n: int, length: float):
    """Lobatto nodes on [0, length] (increasing) and the differentiation matrix.

    Built from barycentric weights, exact on polynomials of degree n-1.
    """
    j = np.arange(n)
    x = 0.5 * length * (1.0 - np.cos(np.pi * j / (n - 1)))
    w = np.ones(n)
    w[0] = 0.5
    w[-1] = 0.5
    w *= (-1.0) ** j
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    D = (w[None, :] / w[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    np.fill_diagonal(D, -D.sum(axis=1))
    return x, D


def clenshaw_curtis_weights(n: int, length: float) -> np.ndarray:
    """Clenshaw-Curtis weights for the n Lobatto points on [0, length].

    Exact for polynomials of degree <= n-1.
    """
    N = n - 1
    theta = np.pi * np.arange(1, N) / N
    v = np.ones(N - 1)
    if N % 2 == 0:
        w0 = 1.0 / (N * N - 1)
        for k in range(1, N // 2):
            v -= 2.0 * np.cos(2.0 * k * theta) / (4.0 * k * k - 1.0)
        v -= np.cos(N * theta) / (N * N - 1.0)
    else:
        w0 = 1.0 / (N * N)
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2.0 * np.cos(2.0 * k * theta) / (4.0 * k * k - 1.0)
    w = np.empty(n)
    w[0] = w0
    w[-1] = w0
    w[1:-1] = 2.0 * v / N
    return w * (length / 2.0)


def fourier_diff_matrix(n: int) -> np.ndarray:
    """Spectral differentiation on n equispaced points of S^1 (n even).

    Exact on e^{i m theta} for |m| < n/2.
    """
    D = np.zeros((n, n))
    j = np.arange(1, n)
    col = 0.5 * (-1.0) ** j / np.tan(j * np.pi / n)
    for i in range(n):
        D[i, (i + j) % n] = -col
    return D


def barycentric_row(x_nodes: np.ndarray, x: float) -> np.ndarray:
    """Row vector evaluating the Lobatto interpolant at x (spectrally accurate)."""
    n = len(x_nodes)
    j = np.arange(n)
    w = np.ones(n)
    w[0] = 0.5
    w[-1] = 0.5
    w *= (-1.0) ** j
    d = x - x_nodes
    hit = np.nonzero(np.abs(d) < 1e-14 * max(1.0, abs(x)))[0]
    row = np.zeros(n)
    if hit.size:
        row[hit[0]] = 1.0
        return row
    row = w / d
    return row / row.sum()


def collar_cutoff(length: float):
    """Smooth bump phi used by the extension operator and the collar assembly.

    phi(0) = 1, phi vanishes identically beyond delta = min(L/4, 1/2); the
    formula is fixed so runs are reproducible.  Returns (delta, phi, dphi).
    """
    delta = min(length / 4.0, 0.5)

    def phi(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        inside = np.abs(x) < delta
        t = np.where(inside, x / delta, 0.0)
        out[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside] ** 2))
        return out

    def dphi(x):
        x = np.asarray(x, dtype=float)
        out = np.zeros_like(x)
        inside = np.abs(x) < delta
        t = np.where(inside, x / delta, 0.0)
        g = 1.0 - t**2
        out[inside] = (
            np.exp(1.0 - 1.0 / g[inside])
            * (-2.0 * t[inside] / (delta * g[inside] ** 2))
        )
        return out

    return delta, phi, dphi


@dataclass(frozen=True)
class Discretization:
    """Grids, differentiation and mass matrices for one GeometryConfig."""

    config: GeometryConfig
    theta_nodes: np.ndarray
    x_nodes: np.ndarray
    D_theta: np.ndarray
    D_x: np.ndarray
    w_x: np.ndarray          # Clenshaw-Curtis weights on [0, L]
    w_theta: float           # trapezoid weight 2*pi/n_theta (uniform)

    @property
    def n_x(self) -> int:
        return self.config.n_x

    @property
    def n_theta(self) -> int:
        return self.config.n_theta

    @property
    def rank(self) -> int:
        return self.config.rank

    @property
    def n_interior(self) -> int:
        """Total interior degrees of freedom k * n_x * n_theta."""
        return self.config.rank * self.config.n_x * self.config.n_theta

    @property
    def n_boundary(self) -> int:
        """Boundary degrees of freedom on both circles."""
        return 2 * self.config.rank * self.config.n_theta

    @property
    def mass_interior(self) -> np.ndarray:
        """Diagonal of the interior quadrature mass matrix (length n_interior)."""
        w = np.kron(self.w_x, np.full(self.n_theta, self.w_theta))
        return np.repeat(w, self.rank)

    @property
    def mass_boundary(self) -> np.ndarray:
        """Diagonal of the boundary mass matrix on circle0 + circleL."""
        return np.full(self.n_boundary, self.w_theta)

    def grid(self, u: np.ndarray) -> np.ndarray:
        """Reshape a flat interior vector to (n_x, n_theta, k)."""
        return np.asarray(u).reshape(self.n_x, self.n_theta, self.rank)

    def flat(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u).reshape(-1)

    def mode_indices(self) -> np.ndarray:
        """Signed Fourier mode for each FFT bin (Nyquist reported as +n/2)."""
        n = self.n_theta
        m = np.fft.fftfreq(n, d=1.0 / n).astype(int)
        m[n // 2] = n // 2
        return m

    def resolved_modes(self) -> np.ndarray:
        """Modes on which trigonometric differentiation is exact: |m| < n_theta/2."""
        m = self.mode_indices()
        return m[np.abs(m) < self.n_theta // 2]

    def inner(self, u, v) -> complex:
        """Mass-weighted interior inner product, linear in the first slot."""
        return complex(np.vdot(np.asarray(v).ravel(),
                               self.mass_interior * np.asarray(u).ravel()))

    def boundary_inner(self, xi, eta) -> complex:
        return complex(np.vdot(np.asarray(eta).ravel(),
                               self.mass_boundary * np.asarray(xi).ravel()))


def build_discretization(cfg: GeometryConfig) -> Discretization:
    """Construct grids and matrices for cfg; deterministic for fixed cfg."""
    theta = 2.0 * np.pi * np.arange(cfg.n_theta) / cfg.n_theta
    x, Dx = chebyshev_lobatto(cfg.n_x, cfg.length)
    Dt = fourier_diff_matrix(cfg.n_theta)
    wx = clenshaw_curtis_weights(cfg.n_x, cfg.length)
    return Discretization(
        config=cfg,
        theta_nodes=theta,
        x_nodes=x,
        D_theta=Dt,
        D_x=Dx,
        w_x=wx,
        w_theta=2.0 * np.pi / cfg.n_theta,
    )


@dataclass(frozen=True)
class TraceSystem:
    """Restriction maps to the boundary circles, their dual, and an extension.

    rho stacks the circle-0 and circle-L traces.  rho_star is the exact
    mass-matrix dual of rho, and extension_e is a right-inverse of rho
    supported in the collar.
    """

    disc: Discretization
    delta: float

    def rho_0(self, u) -> np.ndarray:
        return self.disc.grid(u)[0].reshape(-1).copy()

    def rho_L(self, u) -> np.ndarray:
        return self.disc.grid(u)[-1].reshape(-1).copy()

    def rho(self, u) -> np.ndarray:
        g = self.disc.grid(u)
        return np.concatenate([g[0].reshape(-1), g[-1].reshape(-1)])

    def r_plus(self, pair) -> np.ndarray:
        pair = np.asarray(pair)
        return pair[: self.disc.n_interior]

    def r_minus(self, pair) -> np.ndarray:
        pair = np.asarray(pair)
        return pair[self.disc.n_interior:]

    def split_boundary(self, xi):
        """Boundary data -> (circle0 part, circleL part)."""
        half = self.disc.rank * self.disc.n_theta
        xi = np.asarray(xi)
        return xi[:half], xi[half:]

    def rho_matrix(self) -> np.ndarray:
        """Dense (n_boundary x n_interior) 0/1 restriction matrix."""
        d = self.disc
        R = np.zeros((d.n_boundary, d.n_interior))
        half = d.rank * d.n_theta
        for i in range(half):
            R[i, i] = 1.0
            R[half + i, (d.n_x - 1) * half + i] = 1.0
        return R

    def rho_star(self, xi) -> np.ndarray:
        """Exact mass-matrix dual of rho: <rho_star xi, f>_M = <xi, rho f>_dM."""
        d = self.disc
        out = np.zeros(d.n_interior, dtype=complex)
        xi0, xiL = self.split_boundary(np.asarray(xi, dtype=complex))
        half = d.rank * d.n_theta
        m = d.mass_interior
        mb = d.mass_boundary
        out[:half] = mb[:half] * xi0 / m[:half]
        out[-half:] = mb[half:] * xiL / m[-half:]
        return out

    def extension_e(self, xi) -> np.ndarray:
        """Collar-supported right inverse of rho: e xi = phi(x') xi per circle."""
        d = self.disc
        _, phi, _ = collar_cutoff(d.config.length)
        xi0, xiL = self.split_boundary(np.asarray(xi, dtype=complex))
        p0 = phi(d.x_nodes)
        pL = phi(d.config.length - d.x_nodes)
        g = (
            p0[:, None] * xi0.reshape(1, -1)
            + pL[:, None] * xiL.reshape(1, -1)
        )
        return g.reshape(-1)


def trace_and_dual(disc: Discretization) -> TraceSystem:
    delta, _, _ = collar_cutoff(disc.config.length)
    return TraceSystem(disc=disc, delta=delta)


def boundary_sobolev_weight(disc: Discretization, s: float) -> np.ndarray:
    """Per-FFT-bin weights (1 + m^2)^s on one boundary circle."""
    m = disc.mode_indices().astype(float)
    return (1.0 + m * m) ** s


def sobolev_weighted_norm(v, s: float, disc: Discretization) -> float:
    """Discrete L^2_s norm of single-circle boundary data v, |s| <= 1.

    Computed through the Fourier coefficients with weights (1+m^2)^{s/2};
    coincides with the plain mass-weighted L^2 norm at s = 0.
    """
    if abs(s) > 1.0:
        raise ConfigError("sobolev_weighted_norm certified only for |s| <= 1")
    k = disc.rank
    v = np.asarray(v, dtype=complex).reshape(disc.n_theta, k)
    coeff = np.fft.fft(v, axis=0) / disc.n_theta
    w = boundary_sobolev_weight(disc, s)
    return float(np.sqrt(2.0 * np.pi * np.sum(w[:, None] * np.abs(coeff) ** 2)))


def boundary_sobolev_factor(disc: Discretization, s: float) -> np.ndarray:
    """Matrix W with ||W xi||_2 = L^2_s norm of full boundary data xi.

    W = sqrt(2 pi) * blockdiag over circles of F^{-1}-weighted DFT; used to
    turn boundary operators into maps between weighted spaces.
    """
    n, k = disc.n_theta, disc.rank
    F = np.fft.fft(np.eye(n), axis=0) / n
    w = np.sqrt(boundary_sobolev_weight(disc, s))
    Wc = np.sqrt(2.0 * np.pi) * np.kron(w[:, None] * F, np.eye(k))
    half = n * k
    out = np.zeros((2 * half, 2 * half), dtype=complex)
    out[:half, :half] = Wc
    out[half:, half:] = Wc
    return out


def interior_h1_gram(disc: Discretization):
    """Cholesky-like factor W1 with ||W1 u||_2 = discrete H^1(M) norm of u.

    The Gram is M + Dx' M Dx + Dt' M Dt in the flat-cylinder metric.
    """
    d = disc
    n = d.n_interior
    Dx = np.kron(d.D_x, np.eye(d.n_theta * d.rank))
    Dt = np.kron(np.eye(d.n_x), np.kron(d.D_theta, np.eye(d.rank)))
    m = d.mass_interior
    G = np.diag(m) + Dx.T @ (m[:, None] * Dx) + Dt.T @ (m[:, None] * Dt)
    G = 0.5 * (G + G.T)
    vals, vecs = np.linalg.eigh(G)
    vals = np.clip(vals, 1e-300, None)
    return (vecs * np.sqrt(vals)) @ vecs.T
