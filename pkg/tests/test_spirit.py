import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from midas import spirit
from midas.errors import InsufficientReference, InvalidArgument
from midas.spirit import SpiritState


def _stationary(rng, steps=2000, d=8, scales=(5.0, 2.0, 0.3)):
    basis, _ = np.linalg.qr(rng.normal(size=(d, d)))
    s = np.array(list(scales) + [0.1] * (d - len(scales)))
    return (rng.normal(size=(steps, d)) * s) @ basis.T


def test_zero_samples_leave_basis_unchanged():
    st0 = SpiritState.init(5)
    st1, hidden = st0.track(np.zeros((10, 5)))
    np.testing.assert_array_equal(st1.basis, st0.basis)
    np.testing.assert_array_equal(hidden, 0.0)
    assert st1.steps == 10


def test_rank_one_convergence(rng):
    u = rng.normal(size=6)
    u /= np.linalg.norm(u)
    x = rng.normal(size=(1000, 1)) * u
    state, _ = SpiritState.init(6, k=1).track(x)
    assert abs(state.basis[:, 0] @ u) > 0.99


def test_basis_stays_near_orthonormal(rng):
    state, _ = SpiritState.init(8).track(_stationary(rng))
    g = state.basis.T @ state.basis
    np.testing.assert_allclose(g, np.eye(2), atol=0.05)


def test_subspace_matches_batch_pca(rng):
    x = _stationary(rng)
    state, _ = SpiritState.init(8, forgetting=1.0).track(x)
    assert spirit.principal_angles(state.basis, spirit.batch_pca(x, 2)).max() < 5.0


@given(st.integers(0, 1000))
def test_projection_never_adds_energy(seed):
    rng = np.random.default_rng(seed)
    x = _stationary(rng, steps=300)
    state, _ = SpiritState.init(8).track(x)
    q, _ = np.linalg.qr(state.basis)
    rec = x @ q @ q.T
    assert np.all(np.sum(rec**2, axis=1) <= np.sum(x**2, axis=1) * (1 + 1e-12))


def test_delta_example():
    delta, truncated = spirit.spirit_delta([[0.0, 0.0], [1.0, 1.0]], [[3.0, 4.0], [1.0, 1.0]])
    np.testing.assert_allclose(delta, [5.0, 0.0])
    assert not truncated


def test_delta_truncates():
    delta, truncated = spirit.spirit_delta(np.zeros((5, 2)), np.ones((3, 2)))
    assert truncated and delta.shape == (3,)
    with pytest.raises(InvalidArgument):
        spirit.spirit_delta(np.zeros((0, 2)), np.ones((3, 2)))


def test_align_signs():
    ref = np.eye(3, 2)
    flipped = ref * np.array([-1.0, 1.0])
    np.testing.assert_array_equal(spirit.align_signs(flipped, ref), ref)


def test_state_validation():
    with pytest.raises(InvalidArgument):
        SpiritState.init(3, k=4)
    with pytest.raises(InvalidArgument):
        SpiritState.init(3, forgetting=1.5)
    with pytest.raises(InvalidArgument):
        SpiritState.init(3).track(np.zeros((2, 4)))


def test_reference_needs_two_chunks(rng):
    x = _stationary(rng, steps=500)
    ref = spirit.fit_reference(x, 50)
    # 100 held-out rows, chunks of 50 starting every 12 rows
    assert ref.deltas.shape == (5, 8)
    assert np.all(ref.sq_norm > 0)
    with pytest.raises(InsufficientReference):
        spirit.fit_reference(x, 90)


def test_channel_delta_grows_with_distortion(rng):
    x = _stationary(rng, steps=1600)
    ref = spirit.fit_reference(x[:1500], 100)
    clean = x[1500:]
    warped = clean.copy()
    warped[:, 0] *= 4.0
    d_clean, _ = spirit.channel_delta(ref.state, clean)
    d_warp, _ = spirit.channel_delta(ref.state, warped)
    assert d_warp[0] > d_clean[0]
