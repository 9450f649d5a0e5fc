import numpy as np
import pytest

from momentlab.dataset import Dataset, sample
from momentlab.errors import EmptyDataset, LabelMismatch
from momentlab.law import Axis, JointLaw


def small_law(rng):
    axes = (Axis("y", (0.0, 0.5, 1.0)), Axis("d", (0, 1)))
    mass = rng.dirichlet(np.ones(6)).reshape(3, 2)
    return JointLaw(axes, mass)


def test_sample_reproducible_and_law_close():
    rng = np.random.default_rng(0)
    law = small_law(rng)
    d1 = sample(law, 5000, 42)
    d2 = sample(law, 5000, 42)
    assert np.array_equal(d1.codes, d2.codes)
    emp = d1.to_law()
    assert np.abs(emp.mass - law.mass).max() < 0.03


def test_sample_accepts_seed_sequence():
    rng = np.random.default_rng(1)
    law = small_law(rng)
    d1 = sample(law, 100, np.random.SeedSequence([3, 7]))
    d2 = sample(law, 100, np.random.SeedSequence([3, 7]))
    assert np.array_equal(d1.codes, d2.codes)


def test_csv_round_trip():
    rng = np.random.default_rng(2)
    law = small_law(rng)
    data = sample(law, 60, 1)
    back = Dataset.from_csv(data.to_csv(), law.axes)
    assert np.array_equal(back.codes, data.codes)


def test_from_csv_bad_label():
    rng = np.random.default_rng(3)
    law = small_law(rng)
    text = "y,d\n0.0,0\n7.5,1\n"
    with pytest.raises((LabelMismatch, KeyError, ValueError)):
        Dataset.from_csv(text, law.axes)


def test_column_returns_label_values():
    rng = np.random.default_rng(4)
    law = small_law(rng)
    data = sample(law, 50, 9)
    y = data.column("y")
    assert set(np.unique(y)).issubset({0.0, 0.5, 1.0})


def test_empty_dataset_rejected():
    axes = (Axis("y", (0.0, 1.0)),)
    with pytest.raises(EmptyDataset):
        Dataset(axes, np.zeros((0, 1), dtype=int))
