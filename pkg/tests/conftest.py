import numpy as np
import pytest

from calderonlab import (
    assemble_double,
    assemble_operator,
    build_discretization,
    calderon,
    cauchy_riemann_spec,
    dirac_sigma1_spec,
    trace_and_dual,
)


class Pipeline:
    """Assembled spec + discretization + double + Calderon bundle."""

    def __init__(self, spec):
        self.spec = spec
        self.disc = build_discretization(spec.geometry)
        self.op = assemble_operator(spec, self.disc)
        self.traces = trace_and_dual(self.disc)
        self.double = assemble_double(self.op, traces=self.traces)
        self.bundle = calderon(self.double, self.op, self.traces)


@pytest.fixture(scope="session")
def cr_small():
    return Pipeline(cauchy_riemann_spec(1.0, 16, 12))


@pytest.fixture(scope="session")
def cr_mid():
    return Pipeline(cauchy_riemann_spec(1.0, 32, 24))


@pytest.fixture(scope="session")
def cr_accept():
    return Pipeline(cauchy_riemann_spec(1.0, 64, 48))


@pytest.fixture(scope="session")
def dirac_small():
    return Pipeline(dirac_sigma1_spec(1.0, 16, 12))


@pytest.fixture(scope="session")
def dirac_accept():
    return Pipeline(dirac_sigma1_spec(1.0, 64, 48))


def smooth_section(disc, seed=0, modes=3):
    """Analytic random section used as a well-resolved test function."""
    rng = np.random.default_rng(seed)
    x = 2.0 * disc.x_nodes / disc.config.length - 1.0
    th = disc.theta_nodes
    out = np.zeros((disc.n_x, disc.n_theta, disc.rank), dtype=complex)
    for m in range(-modes, modes + 1):
        for p in range(modes):
            c = rng.standard_normal(disc.rank) + 1j * rng.standard_normal(disc.rank)
            out += (
                (x**p)[:, None, None]
                * np.exp(1j * m * th)[None, :, None]
                * c[None, None, :]
            )
    return out.reshape(-1)
