import json

import numpy as np
import pytest

from deblora.errors import ValidationError
from deblora.features import compute_class_stats
from deblora.synth import ClassSpec, SynthSpec, benchmark_spec, generate_synthetic, load_synth_spec, make_prototypes


def test_zero_noise_one_hot_rows_equal_prototype():
    spec = SynthSpec(d=6, num_attributes=3, class_specs=(ClassSpec(3, (1.0, 0.0, 0.0)),), noise_sigma=0.0, seed=7)
    fs = generate_synthetic(spec)
    protos = make_prototypes(np.random.default_rng(7), 3, 6)
    assert fs.n == 3
    for row in fs.features:
        np.testing.assert_array_equal(row, protos[0].astype(np.float32))
    np.testing.assert_allclose(np.linalg.norm(protos, axis=1), 10.0)


def test_zero_noise_within_class_variance_is_zero():
    spec = SynthSpec(4, 2, (ClassSpec(5, (0.3, 0.7)), ClassSpec(4, (0.5, 0.5))), noise_sigma=0.0, seed=1)
    fs = generate_synthetic(spec)
    for c in range(2):
        assert fs.features[fs.labels == c].var(axis=0).max() == 0


def test_determinism():
    a = generate_synthetic(benchmark_spec(3))
    b = generate_synthetic(benchmark_spec(3))
    assert a.equals(b)
    assert not a.equals(generate_synthetic(benchmark_spec(4)))


def test_benchmark_imbalance_ratio():
    fs = generate_synthetic(benchmark_spec())
    assert (fs.n, fs.d, fs.num_classes) == (2670, 16, 6)
    assert compute_class_stats(fs).dataset_gamma == 50


def test_benchmark_small_classes_share_head_attributes():
    spec = benchmark_spec()
    for cs in spec.class_specs[4:]:
        assert max(cs.attribute_weights[:4]) >= 0.4


def test_rows_grouped_contiguously():
    fs = generate_synthetic(benchmark_spec())
    assert np.all(np.diff(fs.labels) >= 0)


def test_class_mean_converges():
    n = 4000
    spec = SynthSpec(5, 2, (ClassSpec(n, (0.25, 0.75)),), noise_sigma=1.0, seed=11)
    fs = generate_synthetic(spec)
    protos = make_prototypes(np.random.default_rng(11), 2, 5)
    expected = 0.25 * protos[0] + 0.75 * protos[1]
    assert np.all(np.abs(fs.features.mean(axis=0) - expected) < 3 / np.sqrt(n))


@pytest.mark.parametrize("weights", [(0.5, 0.6), (-0.1, 1.1), (1.0,)])
def test_invalid_weights(weights):
    with pytest.raises(ValidationError):
        SynthSpec(3, 2, (ClassSpec(2, weights),))


def test_json_round_trip(tmp_path):
    spec = benchmark_spec(5)
    p = tmp_path / "spec.json"
    p.write_text(json.dumps(spec.to_dict()))
    assert load_synth_spec(p) == spec
