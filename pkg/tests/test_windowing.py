import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from midas.errors import InsufficientData, InvalidArgument, MisalignedStreams
from midas.windowing import (
    NormStats,
    build_windows,
    denormalize,
    load_dataset,
    normalize,
    unwindow,
    window_count,
)


class _Comp:
    def __init__(self, mu, sigma):
        self.mu, self.sigma = mu, sigma


def _comp(rng, n=3, s=30):
    return _Comp(rng.normal(80, 5, (n, s)), rng.normal(20, 2, (n, s)))


def test_window_count_examples():
    assert window_count(12) == 1
    assert window_count(14) == 2
    assert window_count(11) == 0
    assert window_count(30) == 10


def test_channel_order_and_contents(rng):
    comp = _comp(rng)
    ds = build_windows(comp)
    assert ds.tensor.shape == (10, 12, 6)
    np.testing.assert_array_equal(ds.tensor[1, :, 0], comp.mu[0, 2:14])
    np.testing.assert_array_equal(ds.tensor[1, :, 3], comp.sigma[0, 2:14])


def test_too_short_raises(rng):
    with pytest.raises(InsufficientData):
        build_windows(_comp(rng, s=11))


def test_ragged_sequences_rejected():
    class Seg:
        mu, sigma = 1.0, 2.0
    with pytest.raises(MisalignedStreams):
        build_windows([[Seg()] * 12, [Seg()] * 13])


@given(st.integers(1, 5), st.integers(1, 6), st.integers(0, 40))
def test_unwindow_lossless_when_stride_equals_length(n, l, extra):
    rng = np.random.default_rng(n * 100 + l)
    s = l + extra
    comp = _Comp(rng.normal(size=(n, s)), rng.normal(size=(n, s)))
    ds = build_windows(comp, length=l, stride=l)
    series = np.concatenate([comp.mu, comp.sigma]).T
    covered = (s // l) * l
    np.testing.assert_array_equal(unwindow(ds), series[:covered])


def test_normalize_uses_training_stats(rng):
    train = build_windows(_comp(rng))
    test = build_windows(_comp(rng))
    ntrain = normalize(train)
    flat = ntrain.tensor.reshape(-1, 6)
    np.testing.assert_allclose(flat.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(flat.std(axis=0), 1.0, atol=1e-12)
    ntest = normalize(test, ntrain.norm_stats)
    assert ntest.norm_stats is ntrain.norm_stats
    np.testing.assert_allclose(denormalize(ntest).tensor, test.tensor, atol=1e-12)


def test_constant_channel_is_clamped(rng):
    comp = _comp(rng)
    comp.mu[1] = 5.0
    ds = normalize(build_windows(comp))
    assert ds.flags["clamped_channels"] == [1]
    np.testing.assert_array_equal(ds.tensor[..., 1], 0.0)


def test_double_normalize_rejected(rng):
    ds = normalize(build_windows(_comp(rng)))
    with pytest.raises(InvalidArgument):
        normalize(ds)


def test_save_load_round_trip(tmp_path, rng):
    ds = normalize(build_windows(_comp(rng), layout=[[0, 0], [1, 0], [0, 1]]))
    ds.save(tmp_path / "w")
    back = load_dataset(tmp_path / "w")
    assert back.tensor.tobytes() == ds.tensor.tobytes()
    assert back.normalized and back.stride == 2
    np.testing.assert_array_equal(back.layout, ds.layout)
    assert isinstance(back.norm_stats, NormStats)
    np.testing.assert_array_equal(back.norm_stats.std, ds.norm_stats.std)
