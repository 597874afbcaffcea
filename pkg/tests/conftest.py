import sys
from pathlib import Path

import numpy as np
import pytest

from eagle.linalg import SpdMatrix
from eagle.surrogate import SurrogatePosterior

FIXTURES = Path(__file__).parent / "fixtures"


def fixture_cmd(name, *args):
    return [sys.executable, str(FIXTURES / name), *map(str, args)]


def random_spd(rng, d, cond=10.0):
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    eig = np.exp(rng.uniform(0.0, np.log(cond), d))
    return (Q * eig) @ Q.T


def make_post(V, s2, nu, phi=None, sigma0_sq=1.0):
    V = np.atleast_2d(np.asarray(V, dtype=float))
    d = V.shape[0]
    return SurrogatePosterior(
        phi_hat=np.zeros(d) if phi is None else np.asarray(phi, dtype=float),
        V=SpdMatrix(V),
        precision=SpdMatrix(np.linalg.inv(V)),
        s2=s2,
        n0=float(nu),
        sigma0_sq=sigma0_sq,
        lam=1.0,
        n_obs=0,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES):
            terminalreporter.write_line(line)
