import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.metrics import f1_score, precision_score, recall_score, roc_auc_score

from midas import detect
from midas.detect import DetectionPolicy
from midas.errors import CannotBalance, InsufficientReference, InvalidArgument


def test_policy_validation():
    with pytest.raises(InvalidArgument):
        DetectionPolicy(fpr=0.0)
    with pytest.raises(InvalidArgument):
        DetectionPolicy(q=1.0)


def test_calibrate_uniform_quantile(rng):
    ref = rng.uniform(size=(20_000, 3))
    np.testing.assert_allclose(detect.calibrate_thresholds(ref, 0.05), 0.95, atol=0.01)


def test_calibrate_needs_reference():
    with pytest.raises(InsufficientReference):
        detect.calibrate_thresholds(np.ones((19, 4)))


def test_calibrated_flag_rate_on_fresh_draws(rng):
    # exchangeable train/test errors: per-sensor flag rate within 3 standard errors of fpr
    thr = detect.calibrate_thresholds(rng.gamma(2.0, size=(5000, 10)), 0.05)
    fresh = rng.gamma(2.0, size=(500, 10))
    rate = detect.anomalous_sensors(fresh, thr).mean(axis=0)
    band = 3 * np.sqrt(0.05 * 0.95 / 500)
    assert np.all(np.abs(rate - 0.05) <= band + 0.01)


@pytest.mark.parametrize("count,flag", [(0, False), (1, False), (2, True), (10, True)])
def test_q_rule_examples(count, flag):
    # q = 0.1 with 10 sensors: strictly more than one sensor must exceed
    errors = np.zeros((1, 10))
    errors[0, :count] = 2.0
    assert detect.classify_windows(errors, np.ones(10), DetectionPolicy(q=0.1))[0] == flag


@given(arrays(float, (6, 8), elements=st.floats(0, 10)), st.integers(0, 5), st.integers(0, 7), st.floats(0, 5))
def test_raising_an_error_never_unflags(errors, w, s, bump):
    thr = np.full(8, 5.0)
    before = detect.classify_windows(errors, thr)
    raised = errors.copy()
    raised[w, s] += bump
    after = detect.classify_windows(raised, thr)
    assert np.all(after >= before)


# -- balancing -----------------------------------------------------------------

def test_smote_reaches_parity_and_stays_on_segments(rng):
    X = np.vstack([rng.normal(0, 1, (30, 2)), rng.normal(5, 1, (4, 2))])
    y = np.array([0] * 30 + [1] * 4)
    Xs, ys = detect.smote(X, y, k=3, seed=1)
    assert np.sum(ys == 1) == 30 and np.sum(ys == 0) == 30
    np.testing.assert_array_equal(Xs[:34], X)
    minority = X[y == 1]
    for p in Xs[34:]:
        # every synthetic point sits on a segment between two minority samples
        on = False
        for a in minority:
            for b in minority:
                if np.allclose(a, b):
                    continue
                t = np.dot(p - a, b - a) / np.dot(b - a, b - a)
                if -1e-9 <= t <= 1 + 1e-9 and np.allclose(a + t * (b - a), p, atol=1e-9):
                    on = True
        assert on


@given(st.integers(0, 1000))
def test_smote_in_convex_hull(seed):
    rng = np.random.default_rng(seed)
    minority = rng.uniform(-1, 1, (5, 3))
    X = np.vstack([rng.normal(size=(12, 3)), minority])
    y = np.array([0] * 12 + [1] * 5)
    Xs, ys = detect.smote(X, y, seed=seed)
    synth = Xs[17:]
    # each point is a convex combination of at most two minority points, so it
    # lies in the axis-aligned box and satisfies every supporting half-space
    for direction in rng.normal(size=(20, 3)):
        assert np.all(synth @ direction <= (minority @ direction).max() + 1e-9)


def test_smote_needs_two_classes():
    with pytest.raises(CannotBalance):
        detect.smote(np.zeros((5, 2)), np.zeros(5))
    with pytest.raises(CannotBalance):
        detect.smote(np.zeros((5, 2)), np.array([0, 0, 0, 0, 1]))


def _enn_oracle(X, y, k):
    keep = []
    for i in range(len(X)):
        d = [(np.sum((X[i] - X[j]) ** 2), j) for j in range(len(X)) if j != i]
        d.sort()
        votes = sum(y[j] != y[i] for _, j in d[:k])
        keep.append(not votes > k / 2)
    return np.array(keep)


def test_enn_hand_example():
    # the lone 1 among 0s at the origin loses its vote; outliers far away keep theirs
    X = np.array([[0.0], [0.1], [0.2], [0.15], [10.0], [10.1], [10.2]])
    y = np.array([0, 0, 0, 1, 1, 1, 1])
    Xe, ye = detect.edited_nearest_neighbours(X, y, k=3)
    assert Xe.ravel().tolist() == [0.0, 0.1, 0.2, 10.0, 10.1, 10.2]
    assert ye.tolist() == [0, 0, 0, 1, 1, 1]


@given(st.integers(0, 10_000))
def test_enn_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(25, 2))
    y = (X[:, 0] + 0.7 * rng.normal(size=25) > 0).astype(int)
    d = np.sum((X[:, None] - X[None]) ** 2, axis=-1)
    np.fill_diagonal(d, np.inf)
    s = np.sort(d, axis=1)
    assume(np.all(s[:, 2] < s[:, 3]))  # unambiguous neighbourhoods
    Xe, ye = detect.edited_nearest_neighbours(X, y, k=3)
    keep = _enn_oracle(X, y, 3)
    np.testing.assert_array_equal(Xe, X[keep])
    np.testing.assert_array_equal(ye, y[keep])


# -- metrics -------------------------------------------------------------------

@given(st.integers(0, 10_000))
def test_metrics_match_sklearn(seed):
    rng = np.random.default_rng(seed)
    truth = rng.integers(0, 2, 40)
    flags = rng.integers(0, 2, 40)
    assume(truth.min() != truth.max())
    scores = np.round(rng.normal(size=40) + truth, 1)  # rounding forces ties
    rep = detect.evaluate(flags, truth, scores)
    assert rep.precision == pytest.approx(precision_score(truth, flags, zero_division=0))
    assert rep.recall == pytest.approx(recall_score(truth, flags, zero_division=0))
    assert rep.f1 == pytest.approx(f1_score(truth, flags, zero_division=0))
    assert rep.auroc == pytest.approx(roc_auc_score(truth, scores))
    assert rep.tp + rep.fp + rep.fn + rep.tn == 40


@given(arrays(np.int64, 30, elements=st.integers(-100, 100)), st.integers(0, 1000))
def test_auroc_invariant_under_monotone_transform(scores, seed):
    truth = np.random.default_rng(seed).integers(0, 2, 30)
    assume(truth.min() != truth.max())
    a = detect.auroc(scores, truth)
    b = detect.auroc(np.arctan(scores / 50.0) * 3 + 7, truth)
    assert a == pytest.approx(b)


def test_auroc_single_class_is_nan():
    assert np.isnan(detect.auroc([1, 2, 3], [1, 1, 1]))
    assert detect.evaluate([1, 0], [1, 1], [0.3, 0.1]).as_dict()["auroc"] is None


def test_evaluate_case_perfect_separation(rng):
    normal = rng.uniform(0, 1, (100, 10))
    damaged = rng.uniform(3, 4, (10, 10))
    thr = np.full(10, 2.0)
    rep = detect.evaluate_case(normal, damaged, thr)
    assert rep.f1 == 1.0 and rep.auroc == 1.0
    assert rep.tp == rep.tn  # balanced to parity before cleaning


def test_reconstruction_errors_require_matching_stats(rng):
    from midas import miae
    from midas.windowing import WindowDataset, normalize

    ds = normalize(WindowDataset(rng.normal(size=(30, 12, 6))))
    model = miae.train(ds, np.ones((3, 3)), epochs=1, layer_dims=[6, 4, 6])
    assert detect.reconstruction_errors(model, ds).shape == (30, 3)
    other = normalize(WindowDataset(rng.normal(size=(30, 12, 6))))
    with pytest.raises(InvalidArgument):
        detect.reconstruction_errors(model, other)
