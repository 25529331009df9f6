"""Matrix-valued coefficient functions on the cylinder.

A coefficient is a finite sum  sum_{p<=P, |m|<=M} a[p,m] x^p e^{i m theta}
of k x k complex matrices.  All collar extractions (evaluation at x = 0 or
x = L, inward reparametrization x -> L - x, exact division by x) happen at
the coefficient level, so no numerical differentiation enters the collar
data.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ConfigError

__all__ = ["CoefficientField"]


class CoefficientField:
    """Polynomial-in-x, Fourier-in-theta matrix coefficient.

    data has shape (P+1, 2*M+1, k, k); the Fourier index i corresponds to
    the mode m = i - M.
    """

    def __init__(self, data):
        data = np.asarray(data, dtype=complex)
        if data.ndim != 4 or data.shape[1] % 2 != 1 or data.shape[2] != data.shape[3]:
            raise ConfigError(
                "coefficient data must have shape (P+1, 2*M+1, k, k)"
            )
        if not np.all(np.isfinite(data)):
            raise ConfigError("coefficient data must be finite")
        self.data = data

    # -- constructors -------------------------------------------------

    @classmethod
    def constant(cls, matrix) -> "CoefficientField":
        matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
        return cls(matrix[None, None, :, :])

    @classmethod
    def zero(cls, k: int) -> "CoefficientField":
        return cls(np.zeros((1, 1, k, k), dtype=complex))

    @classmethod
    def from_terms(cls, k: int, terms) -> "CoefficientField":
        """Build from an iterable of (p, m, matrix) monomials."""
        terms = list(terms)
        P = max((p for p, _, _ in terms), default=0)
        M = max((abs(m) for _, m, _ in terms), default=0)
        data = np.zeros((P + 1, 2 * M + 1, k, k), dtype=complex)
        for p, m, mat in terms:
            data[p, m + M] += np.asarray(mat, dtype=complex)
        return cls(data)

    # -- basic queries ------------------------------------------------

    @property
    def k(self) -> int:
        return self.data.shape[2]

    @property
    def x_degree(self) -> int:
        return self.data.shape[0] - 1

    @property
    def m_max(self) -> int:
        return (self.data.shape[1] - 1) // 2

    def is_theta_constant(self, tol: float = 0.0) -> bool:
        M = self.m_max
        if M == 0:
            return True
        off = np.delete(self.data, M, axis=1)
        return bool(np.max(np.abs(off)) <= tol)

    def term(self, p: int, m: int) -> np.ndarray:
        """Monomial coefficient a[p, m] (zero when outside the stored range)."""
        if p > self.x_degree or abs(m) > self.m_max:
            return np.zeros((self.k, self.k), dtype=complex)
        return self.data[p, m + self.m_max]

    # -- evaluation ---------------------------------------------------

    def sample(self, x_nodes, theta_nodes) -> np.ndarray:
        """Values on the tensor grid, shape (n_x, n_theta, k, k)."""
        x = np.asarray(x_nodes, dtype=float).reshape(-1)
        th = np.asarray(theta_nodes, dtype=float).reshape(-1)
        P, W = self.data.shape[0], self.data.shape[1]
        M = (W - 1) // 2
        xp = x[:, None] ** np.arange(P)[None, :]                # (n_x, P+1)
        ph = np.exp(1j * np.outer(th, np.arange(-M, M + 1)))    # (n_t, 2M+1)
        return np.einsum("ap,tm,pmij->atij", xp, ph, self.data)

    def sample_x(self, x_nodes) -> np.ndarray:
        """Values of a theta-constant field along x, shape (n_x, k, k)."""
        if not self.is_theta_constant():
            raise ConfigError("coefficient is not theta-constant")
        x = np.asarray(x_nodes, dtype=float).reshape(-1)
        P = self.data.shape[0]
        xp = x[:, None] ** np.arange(P)[None, :]
        return np.einsum("ap,pij->aij", xp, self.data[:, self.m_max])

    def mode_field(self, m: int) -> np.ndarray:
        """x-polynomial coefficients of the mode-m part, shape (P+1, k, k)."""
        if abs(m) > self.m_max:
            return np.zeros((1, self.k, self.k), dtype=complex)
        return self.data[:, m + self.m_max]

    # -- calculus and algebra ------------------------------------------

    def dx(self) -> "CoefficientField":
        """Exact derivative in x."""
        if self.x_degree == 0:
            return CoefficientField.zero(self.k)
        p = np.arange(1, self.x_degree + 1)
        return CoefficientField(self.data[1:] * p[:, None, None, None])

    def dtheta(self) -> "CoefficientField":
        """Exact derivative in theta."""
        m = np.arange(-self.m_max, self.m_max + 1)
        return CoefficientField(self.data * (1j * m)[None, :, None, None])

    def at_x(self, x0: float) -> "CoefficientField":
        """Freeze x = x0; the result depends on theta only."""
        P = self.x_degree
        pw = x0 ** np.arange(P + 1)
        frozen = np.einsum("p,pmij->mij", pw, self.data)
        return CoefficientField(frozen[None])

    def divide_x(self) -> "CoefficientField":
        """Exact division by x; requires a vanishing constant term."""
        c0 = self.data[0]
        if np.max(np.abs(c0)) > 1e-13 * max(1.0, np.max(np.abs(self.data))):
            raise ConfigError("divide_x requires a coefficient vanishing at x=0")
        if self.x_degree == 0:
            return CoefficientField.zero(self.k)
        return CoefficientField(self.data[1:])

    def compose_affine(self, a: float, b: float) -> "CoefficientField":
        """Coefficient of the substituted field f(a*t + b) as a polynomial in t."""
        P = self.x_degree
        out = np.zeros_like(self.data)
        # binomial re-expansion of (a t + b)^p
        for p in range(P + 1):
            for q in range(p + 1):
                out[q] += self.data[p] * math.comb(p, q) * (a**q) * (b ** (p - q))
        return CoefficientField(out)

    def conj_transpose(self) -> "CoefficientField":
        """Pointwise Hermitian adjoint of the matrix values.

        conj(e^{i m theta}) = e^{-i m theta}, so the mode axis flips.
        """
        flipped = np.conj(self.data[:, ::-1])
        return CoefficientField(np.swapaxes(flipped, 2, 3))

    def __add__(self, other: "CoefficientField") -> "CoefficientField":
        P = max(self.x_degree, other.x_degree)
        M = max(self.m_max, other.m_max)
        k = self.k
        if other.k != k:
            raise ConfigError("rank mismatch in coefficient arithmetic")
        data = np.zeros((P + 1, 2 * M + 1, k, k), dtype=complex)
        for f in (self, other):
            sl_m = slice(M - f.m_max, M + f.m_max + 1)
            data[: f.x_degree + 1, sl_m] += f.data
        return CoefficientField(data)

    def __sub__(self, other: "CoefficientField") -> "CoefficientField":
        return self + other * (-1.0)

    def __mul__(self, scalar) -> "CoefficientField":
        return CoefficientField(self.data * complex(scalar))

    __rmul__ = __mul__

    def matmul(self, other: "CoefficientField") -> "CoefficientField":
        """Pointwise matrix product of two coefficient fields (exact)."""
        if other.k != self.k:
            raise ConfigError("rank mismatch in coefficient product")
        P = self.x_degree + other.x_degree
        M = self.m_max + other.m_max
        data = np.zeros((P + 1, 2 * M + 1, self.k, self.k), dtype=complex)
        for p1 in range(self.x_degree + 1):
            for m1 in range(-self.m_max, self.m_max + 1):
                a = self.data[p1, m1 + self.m_max]
                if not a.any():
                    continue
                for p2 in range(other.x_degree + 1):
                    for m2 in range(-other.m_max, other.m_max + 1):
                        b = other.data[p2, m2 + other.m_max]
                        if not b.any():
                            continue
                        data[p1 + p2, m1 + m2 + M] += a @ b
        return CoefficientField(data)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.data)))

    # -- serialization -------------------------------------------------

    def to_json(self) -> dict:
        """Nested-list form indexed [p][m][row][col][re/im]."""
        re = self.data.real
        im = self.data.imag
        payload = np.stack([re, im], axis=-1)
        return {
            "P": int(self.x_degree),
            "M_max": int(self.m_max),
            "k": int(self.k),
            "data": payload.tolist(),
        }

    @classmethod
    def from_json(cls, obj) -> "CoefficientField":
        for key in ("P", "M_max", "k", "data"):
            if key not in obj:
                raise ConfigError(f"coefficient object missing key '{key}'")
        arr = np.asarray(obj["data"], dtype=float)
        expect = (obj["P"] + 1, 2 * obj["M_max"] + 1, obj["k"], obj["k"], 2)
        if arr.shape != expect:
            raise ConfigError(
                f"coefficient 'data' has shape {arr.shape}, expected {expect}"
            )
        return cls(arr[..., 0] + 1j * arr[..., 1])
