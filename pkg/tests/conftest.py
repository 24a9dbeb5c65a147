import numpy as np
import pytest

from speechmotion import ModelConfig, init_params


def finite_diff(f, arr: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of a scalar function w.r.t. one array,
    mutating it in place and restoring it. The independent gradient oracle."""
    g = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = arr[idx]
        arr[idx] = old + step
        fp = f()
        arr[idx] = old - step
        fm = f()
        arr[idx] = old
        g[idx] = (fp - fm) / (2.0 * step)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """Norm-based relative error, safe when both sides vanish."""
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    if denom < 1e-12:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


@pytest.fixture
def rng():
    return np.random.Generator(np.random.PCG64(0))


TINY = ModelConfig(
    dim=8, heads=2, period=3, feature_rate=50.0, motion_rate=25.0,
    encoder_layers=1, decoder_layers=1, ff_dim=16, vertices=3,
    identities=2, feature_dim=4, encoder_dim=8, encoder_heads=2,
)


@pytest.fixture
def tiny_cfg():
    return TINY.validate()


@pytest.fixture
def tiny_params(tiny_cfg):
    return init_params(tiny_cfg, seed=0)
