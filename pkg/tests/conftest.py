import numpy as np
import pytest

from cascademl.datatools import write_csv


def rank_k_data(n=500, dim=50, k=5, noise=1e-6, seed=0):
    """``k`` equal-variance orthogonal latent directions embedded in ``dim`` dims."""
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.normal(size=(dim, k)))
    latent = rng.normal(size=(n, k))
    X = latent @ basis.T + noise * rng.normal(size=(n, dim))
    y = (latent[:, 0] + 0.5 * latent[:, 1] > 0).astype(int)
    return X, y


def two_gaussians(n, separation=3.0, seed=0):
    """Balanced 2-D classes with unit isotropic noise.

    Class means are (0, 0) and (separation, separation): offset by
    ``separation`` sigma on each axis.
    """
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = y[:, None] * separation + rng.normal(size=(n, 2))
    return X, y


@pytest.fixture
def gaussian_csvs(tmp_path):
    Xtr, ytr = two_gaussians(400, seed=1)
    Xva, yva = two_gaussians(100, seed=2)
    names = np.array(["neg", "pos"])
    train = tmp_path / "train.csv"
    val = tmp_path / "val.csv"
    write_csv(train, Xtr, ["x0", "x1"], names[ytr], "label")
    write_csv(val, Xva, ["x0", "x1"], names[yva], "label")
    return train, val


def make_tree(root, class_sizes):
    """Class-per-directory fixture; file content encodes its own path."""
    for c, n in class_sizes.items():
        d = root / c
        d.mkdir(parents=True)
        for i in range(n):
            (d / f"f{i:03d}.txt").write_text(f"{c}/{i}\n")
    return root


ACCEPTANCE_LINES = []


def record_criterion(number, title, ok, detail=""):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number:>2}: {title}" + (f" ({detail})" if detail else ""))
    print(ACCEPTANCE_LINES[-1])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
