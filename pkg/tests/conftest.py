import numpy as np
import pytest

from stablerkhs.kernels import TruncatedKernel


def random_psd(seed: int, m: int, rank: int | None = None) -> np.ndarray:
    """Seeded random PSD matrix, full rank unless a lower rank is given."""
    rng = np.random.default_rng(seed)
    r = m if rank is None else rank
    a = rng.standard_normal((m, r))
    return a @ a.T


def as_kernel(matrix: np.ndarray, tag: str = "test") -> TruncatedKernel:
    m = np.asarray(matrix, dtype=float)
    sym = np.triu(m) + np.triu(m, 1).T
    return TruncatedKernel(sym.shape[0], sym, {"family": tag})


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
