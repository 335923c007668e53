import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from labelalign.adapt import AdaptConfig, RegularizedProblem, fit_closed_form, source_least_squares
from labelalign.alignment import alignment_profile, k_epsilon, projection_energy
from labelalign.datagen import (
    RNG_ALGORITHM,
    SyntheticSpec,
    correlated_features_toy,
    label_balance,
    make_rng,
    rotation_matrix,
    synth_task,
)
from labelalign.metrics import metric_accuracy


def test_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(anisotropy=(1.0, 2.0))
    with pytest.raises(ValueError):
        SyntheticSpec(anisotropy=(1.0, 0.0))
    with pytest.raises(ValueError):
        SyntheticSpec(n_source=1)
    with pytest.raises(ValueError):
        SyntheticSpec(task="ranking")


def test_spec_records_rng_algorithm():
    assert SyntheticSpec().as_dict()["rng"] == RNG_ALGORITHM == "PCG64"


def test_rng_reproducible():
    assert np.array_equal(make_rng(5).standard_normal(4), make_rng(5).standard_normal(4))


def test_rotation_matrix_orthonormal():
    r = rotation_matrix(30)
    np.testing.assert_allclose(r @ r.T, np.eye(2), atol=1e-15)
    np.testing.assert_allclose(rotation_matrix(90) @ [1, 0], [0, 1], atol=1e-15)


@pytest.mark.parametrize("task", ["classification", "regression"])
def test_synth_task_deterministic(task):
    a = synth_task(SyntheticSpec(seed=11, task=task))
    b = synth_task(SyntheticSpec(seed=11, task=task))
    for da, db in zip(a, b):
        assert np.array_equal(da.design.data, db.design.data)
        assert np.array_equal(da.labels, db.labels)
    c = synth_task(SyntheticSpec(seed=12, task=task))
    assert not np.array_equal(a[0].design.data, c[0].design.data)


def test_synth_task_shapes_and_bias():
    src, tgt = synth_task(SyntheticSpec(n_source=300, n_target=200))
    assert src.design.data.shape == (300, 3) and tgt.design.data.shape == (200, 3)
    assert src.design.has_bias and tgt.design.has_bias
    assert set(np.unique(src.labels)) == {-1.0, 1.0}


@pytest.mark.parametrize("seed", range(5))
def test_label_balance(seed):
    src, tgt = synth_task(SyntheticSpec(seed=seed))
    assert 0.45 <= label_balance(src.labels) <= 0.55
    assert 0.45 <= label_balance(tgt.labels) <= 0.55


def test_no_rotation_means_no_shift():
    src, tgt = synth_task(SyntheticSpec(rotation_deg=0.0))
    w = source_least_squares(src.design, src.labels).weights
    assert metric_accuracy(tgt.design.data @ w, tgt.labels) >= 0.99


def test_target_labels_follow_rotated_boundary():
    src, tgt = synth_task(SyntheticSpec(rotation_deg=45.0))
    # undoing the rotation recovers the source rule: sign of the first coordinate
    back = tgt.design.data[:, :2] @ rotation_matrix(45.0)
    assert np.array_equal(np.sign(back[:, 0]), tgt.labels)


def test_regression_labels_are_top_singular_direction():
    src, tgt = synth_task(SyntheticSpec(task="regression"))
    for dom in (src, tgt):
        p = alignment_profile(dom.design, dom.labels)
        assert projection_energy(p, 1) == pytest.approx(1.0, abs=1e-10)
        assert np.linalg.norm(dom.labels) == pytest.approx(1.0)


def test_classification_labels_aligned_within_span():
    src, _ = synth_task(SyntheticSpec())
    p = alignment_profile(src.design, src.labels)
    assert k_epsilon(p, 0.1) == 1
    in_span = math.sqrt(p.total_energy) / p.label_norm
    # the top direction carries nearly all of the in-span label energy ...
    assert projection_energy(p, 1) / in_span >= 0.95
    # ... but sign labels keep about 1 - 2/pi of their energy outside the span
    assert projection_energy(p, 1) == pytest.approx(math.sqrt(2 / math.pi), abs=0.03)


def test_label_alignment_recovers_target_accuracy():
    src, tgt = synth_task(SyntheticSpec())
    unreg = source_least_squares(src.design, src.labels).weights
    prob = RegularizedProblem(src.design, src.labels, tgt.design, AdaptConfig(k=1, k_tilde=1, lam=1e3))
    reg = fit_closed_form(prob).weights
    assert metric_accuracy(tgt.design.data @ reg, tgt.labels) >= 0.95
    assert metric_accuracy(tgt.design.data @ unreg, tgt.labels) <= 0.90


@settings(max_examples=15)
@given(st.floats(-180, 180), st.integers(0, 1000), st.sampled_from(["classification", "regression"]))
def test_joint_rotation_equivariance(angle, seed, task):
    spec = SyntheticSpec(n_source=400, n_target=400, seed=seed, task=task)
    results = []
    for extra in (0.0, angle):
        src, tgt = synth_task(spec, extra_rotation_deg=extra)
        prob = RegularizedProblem(src.design, src.labels, tgt.design, AdaptConfig(k=1, k_tilde=1, lam=1e3))
        scores = tgt.design.data @ fit_closed_form(prob).weights
        if task == "classification":
            results.append(metric_accuracy(scores, tgt.labels))
        else:
            results.append(float(np.mean((scores - tgt.labels) ** 2)))
    assert results[0] == pytest.approx(results[1], abs=1e-6)


# --- correlated-features toy ------------------------------------------------


def test_toy_shapes_and_normalization():
    m, y = correlated_features_toy(0.1, seed=0)
    assert m.data.shape == (1000, 10) and not m.has_bias
    np.testing.assert_allclose(np.linalg.norm(m.data, axis=0), 1.0)
    assert np.linalg.norm(y) == pytest.approx(1.0)


def test_toy_noise_free_columns_equal_label():
    m, y = correlated_features_toy(0.0, seed=1)
    for j in range(9):
        np.testing.assert_allclose(m.data[:, j], y, atol=1e-15)
    p = alignment_profile(m, y)
    # y lies in the span of the copies and the noise column, so two directions capture it exactly
    assert projection_energy(p, 2) == pytest.approx(1.0, abs=1e-8)
    # the noise column's chance overlap with y tilts the top direction by a second-order amount
    overlap = float(m.data[:, 9] @ y)
    assert 1 - projection_energy(p, 1) <= overlap**2


def test_toy_deterministic_and_validates():
    a = correlated_features_toy(0.3, seed=4)
    b = correlated_features_toy(0.3, seed=4)
    assert np.array_equal(a[0].data, b[0].data) and np.array_equal(a[1], b[1])
    with pytest.raises(ValueError):
        correlated_features_toy(-1.0, seed=0)


def test_label_balance_value():
    assert label_balance(np.array([1.0, -1.0, 1.0, 1.0])) == 0.75
