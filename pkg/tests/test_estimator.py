import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from dnfs import DNFSSegmenter
from dnfs.data import make_sample
from dnfs.estimator import check_images, check_masks


@pytest.fixture(scope="module")
def tiny_data():
    samples = [make_sample(i, 5, size=16, num_horizons=2) for i in range(6)]
    X = np.stack([s.image for s in samples]).astype(np.float32)
    y = np.stack([s.mask for s in samples]).astype(np.float32)
    return X, y


def test_get_params_and_clone():
    est = DNFSSegmenter(multiplier=2, psi=0.3, epochs=1)
    params = est.get_params()
    assert params["multiplier"] == 2 and params["psi"] == 0.3 and params["family"] == "dnfs"
    twin = clone(est)
    assert twin.get_params() == params and twin is not est
    est.set_params(psi=0.9)
    assert est.psi == 0.9


def test_fit_predict(tiny_data):
    X, y = tiny_data
    est = DNFSSegmenter(multiplier=1, epochs=2, batch_size=3, random_state=1).fit(X, y, X[:2], y[:2])
    assert len(est.history_) == 2 and "val_iou" in est.history_[0]
    assert est.n_parameters_ == 1174
    proba = est.predict_proba(X)
    assert proba.shape == (6, 1, 16, 16) and np.all((proba > 0) & (proba < 1))
    pred = est.predict(X)
    assert pred.dtype == np.uint8 and set(np.unique(pred)) <= {0, 1}
    np.testing.assert_array_equal(pred, (proba >= 0.5).astype(np.uint8))
    assert 0 <= est.score(X, y) <= 1 and 0 <= est.black_recall(X, y) <= 1


def test_fit_is_deterministic(tiny_data):
    X, y = tiny_data
    a = DNFSSegmenter(multiplier=1, epochs=1, random_state=3).fit(X, y).predict_proba(X)
    b = DNFSSegmenter(multiplier=1, epochs=1, random_state=3).fit(X, y).predict_proba(X)
    assert a.tobytes() == b.tobytes()


def test_unfitted():
    with pytest.raises(NotFittedError):
        DNFSSegmenter().predict(np.zeros((1, 16, 16)))


def test_validation():
    assert check_images(np.zeros((2, 8, 8))).shape == (2, 1, 8, 8)
    with pytest.raises(ValueError, match="multiple of 8"):
        check_images(np.zeros((1, 1, 12, 12)), 8)
    with pytest.raises(ValueError, match="non-finite"):
        check_images(np.full((1, 8, 8), np.nan))
    with pytest.raises(ValueError, match="shaped"):
        check_images(np.zeros((8, 8)))
    X = check_images(np.zeros((2, 8, 8)))
    with pytest.raises(ValueError, match="binary"):
        check_masks(np.full((2, 8, 8), 0.5), X)
    with pytest.raises(ValueError, match="match"):
        check_masks(np.zeros((1, 8, 8)), X)
