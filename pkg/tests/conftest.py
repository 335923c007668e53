import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from labelalign.adapt import AdaptConfig, RegularizedProblem
from labelalign.datasets import DigitCorpus, RawImageSet, save_matrix_csv, write_idx
from labelalign.spectral import DesignMatrix

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.register_profile("thorough", max_examples=400, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# Filled by tests/test_acceptance.py and printed at the end of the session.
ACCEPTANCE_RESULTS: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS, key=lambda k: int(k)):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[key])


def random_problem(rng, n=None, d=None, nt=None, k=None, kt=None, lam=None, well_conditioned=False):
    """Random source/target problem; with ``well_conditioned`` the system matrix has cond <= 100."""
    while True:
        dd = d or int(rng.integers(2, 8))
        nn = n or int(rng.integers(dd + 2, 60))
        nnt = nt or int(rng.integers(dd + 2, 60))
        phi = rng.standard_normal((nn, dd))
        phit = rng.standard_normal((nnt, dd)) @ (np.eye(dd) + 0.3 * rng.standard_normal((dd, dd)))
        y = rng.standard_normal(nn)
        kk = int(rng.integers(0, dd + 1)) if k is None else k
        kkt = int(rng.integers(0, kk + 1)) if kt is None else kt
        ll = float(rng.uniform(0.1, 3.0)) if lam is None else lam
        prob = RegularizedProblem(
            DesignMatrix(phi), y, DesignMatrix(phit), AdaptConfig(k=kk, k_tilde=kkt, lam=ll)
        )
        if not well_conditioned:
            return prob
        ev = np.linalg.eigvalsh(prob.system_matrix())
        if ev[0] > 0 and ev[-1] / ev[0] <= 100:
            return prob


def fake_digits(rng, n, side, noise=0.15, shift=0):
    """Images built from one fixed prototype per digit plus pixel noise.

    Prototypes come from a seed shared by both datasets (resampled to ``side``)
    and ``shift`` moves them, so the two domains differ but stay related.
    """
    proto_rng = np.random.default_rng(1234)
    base = (proto_rng.uniform(0, 1, (10, 8, 8)) > 0.6).astype(float)
    reps = int(np.ceil(side / 8))
    protos = np.kron(base, np.ones((reps, reps)))[:, :side, :side]
    protos = np.roll(protos, shift, axis=2)
    labels = np.arange(n) % 10
    rng.shuffle(labels)
    imgs = np.clip(protos[labels] + noise * rng.standard_normal((n, side, side)), 0, 1)
    return RawImageSet(imgs, labels)


@pytest.fixture(scope="session")
def fake_corpora():
    rng = np.random.default_rng(7)
    mnist = DigitCorpus("MNIST", fake_digits(rng, 1200, 28), fake_digits(rng, 600, 28))
    usps = DigitCorpus("USPS", fake_digits(rng, 800, 16, shift=1), fake_digits(rng, 400, 16, shift=1))
    return mnist, usps


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def fake_data_files(tmp_path_factory, fake_corpora):
    """The fake corpora on disk: MNIST as gzipped IDX files, USPS as CSV in [-1, 1]."""
    mnist, usps = fake_corpora
    root = tmp_path_factory.mktemp("digits")
    mnist_dir = root / "mnist"
    mnist_dir.mkdir()
    for prefix, split in (("train", mnist.train), ("t10k", mnist.test)):
        pixels = np.rint(split.images * 255).astype(np.uint8)
        write_idx(mnist_dir / f"{prefix}-images-idx3-ubyte.gz", pixels)
        write_idx(mnist_dir / f"{prefix}-labels-idx1-ubyte.gz", split.labels.astype(np.uint8))
    paths = {"mnist_dir": mnist_dir}
    for name, split in (("usps_train", usps.train), ("usps_test", usps.test)):
        path = root / f"{name}.csv"
        save_matrix_csv(path, split.images.reshape(len(split.labels), -1) * 2 - 1, split.labels)
        paths[name] = path
    return paths
