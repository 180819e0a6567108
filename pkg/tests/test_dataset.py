import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from app.dataset import (
    ProtocolConfig,
    VerificationDataset,
    equalize_dataset,
    generate_synthetic_protocol,
    histogram_equalize,
    load_dataset,
    save_dataset,
)
from app.errors import (
    DatasetFileNotFound,
    DatasetFormatError,
    DimensionMismatch,
    InsufficientTraining,
    InvalidGenerationParameters,
    LengthMismatch,
    MissingRole,
    PixelRangeError,
    ProtocolError,
    UnknownIdentity,
)
from conftest import make_dataset


def _write_pair(tmp_path, rows, protocol, header=None):
    width = len(rows[0]) - 1
    header = header or [f"f{j}" for j in range(width)] + ["identity"]
    lines = [",".join(header)] + [",".join(str(v) for v in row) for row in rows]
    samples = tmp_path / "samples.csv"
    samples.write_text("\n".join(lines) + "\n")
    proto = tmp_path / "protocol.json"
    proto.write_text(json.dumps(protocol))
    return samples, proto


def _eight_rows():
    rows = []
    for identity, base in (("id1", 0.0), ("id2", 5.0)):
        for k in range(4):
            rows.append([base + k, base - k, 0.5 * k, identity])
    protocol = {
        "clients": ["id1", "id2"],
        "impostors": [],
        "roles": {
            "id1": ["train", "train", "evaluation", "test"],
            "id2": ["train", "evaluation", "train", "test"],
        },
    }
    return rows, protocol


def test_load_counts_roles(tmp_path):
    rows, protocol = _eight_rows()
    dataset = load_dataset(*_write_pair(tmp_path, rows, protocol))

    assert (dataset.N, dataset.M) == (8, 3)
    assert (dataset.n, dataset.E, dataset.I) == (4, 2, 2)
    assert dataset.clients == ("id1", "id2")
    assert dataset.client_counts() == {"id1": 2, "id2": 2}


def test_training_rows_lead_and_order_maps_back(tmp_path):
    rows, protocol = _eight_rows()
    dataset = load_dataset(*_write_pair(tmp_path, rows, protocol))

    assert list(dataset.roles[: dataset.n]) == ["train"] * 4
    # id2's second file row (file row 5) is evaluation, its third (file row 6) is train
    assert list(dataset.order[:4]) == [0, 1, 4, 6]
    original = np.array([r[:3] for r in rows], dtype=float)
    np.testing.assert_array_equal(dataset.samples, original[dataset.order])


def test_unknown_identity_in_protocol(tmp_path):
    rows, protocol = _eight_rows()
    protocol["impostors"] = ["id99"]
    protocol["roles"]["id99"] = ["evaluation"]
    with pytest.raises(UnknownIdentity):
        load_dataset(*_write_pair(tmp_path, rows, protocol))


def test_short_row_is_dimension_mismatch(tmp_path):
    rows = [[float(j) for j in range(12)] + ["a"] for _ in range(5)]
    rows.append([float(j) for j in range(10)] + ["a"])
    protocol = {"clients": ["a"], "impostors": [], "roles": {"a": ["train"] * 6}}
    with pytest.raises(DimensionMismatch):
        load_dataset(*_write_pair(tmp_path, rows, protocol))


def test_long_row_is_dimension_mismatch(tmp_path):
    rows = [[1.0, 2.0, "a"], [1.0, 2.0, "a"], [1.0, 2.0, 3.0, "a"]]
    protocol = {"clients": ["a"], "impostors": [], "roles": {"a": ["train"] * 3}}
    with pytest.raises(DimensionMismatch):
        load_dataset(*_write_pair(tmp_path, rows, protocol))


def test_missing_file(tmp_path):
    rows, protocol = _eight_rows()
    samples, _ = _write_pair(tmp_path, rows, protocol)
    with pytest.raises(DatasetFileNotFound):
        load_dataset(samples, tmp_path / "nope.json")


def test_header_must_end_with_identity(tmp_path):
    rows, protocol = _eight_rows()
    with pytest.raises(DatasetFormatError):
        load_dataset(*_write_pair(tmp_path, rows, protocol, header=["f0", "f1", "f2", "who"]))


def test_non_numeric_feature(tmp_path):
    rows, protocol = _eight_rows()
    rows[3][1] = "abc"
    with pytest.raises(DatasetFormatError):
        load_dataset(*_write_pair(tmp_path, rows, protocol))


def test_role_list_too_short(tmp_path):
    rows, protocol = _eight_rows()
    protocol["roles"]["id1"] = ["train", "train", "evaluation"]
    with pytest.raises(MissingRole):
        load_dataset(*_write_pair(tmp_path, rows, protocol))


def test_undesignated_identity_has_no_role(tmp_path):
    rows, protocol = _eight_rows()
    rows.append([9.0, 9.0, 9.0, "id3"])
    with pytest.raises(MissingRole, match="neither client nor impostor"):
        load_dataset(*_write_pair(tmp_path, rows, protocol))


def test_role_list_too_long(tmp_path):
    rows, protocol = _eight_rows()
    protocol["roles"]["id1"] = ["train", "train", "evaluation", "test", "test"]
    with pytest.raises(ProtocolError):
        load_dataset(*_write_pair(tmp_path, rows, protocol))


def test_bad_role_name_rejected_by_schema(tmp_path):
    rows, protocol = _eight_rows()
    protocol["roles"]["id1"] = ["train", "train", "holdout", "test"]
    with pytest.raises(ProtocolError):
        load_dataset(*_write_pair(tmp_path, rows, protocol))


def test_client_and_impostor_overlap():
    with pytest.raises(ProtocolError):
        ProtocolConfig(client_ids=("a",), impostor_ids=("a",), role_assignment={})


def test_impostor_cannot_train():
    with pytest.raises(ProtocolError):
        make_dataset(np.zeros((5, 2)), ["a", "a", "b", "b", "x"],
                     ["train", "train", "train", "train", "train"], ["a", "b"], ["x"])


def test_client_needs_two_training_rows():
    with pytest.raises(InsufficientTraining):
        make_dataset(np.arange(10.0).reshape(5, 2), ["a", "a", "b", "b", "b"],
                     ["train", "test", "train", "train", "evaluation"], ["a", "b"])


def test_arrays_are_read_only(toy_dataset):
    with pytest.raises(ValueError):
        toy_dataset.samples[0, 0] = 1.0


def test_identity_rows(toy_dataset):
    rows = toy_dataset.identity_rows("c1")
    assert rows.size == 6
    assert all(toy_dataset.labels[r] == "c1" for r in rows)
    with pytest.raises(UnknownIdentity):
        toy_dataset.identity_rows("zz")


def test_histogram_equalize_constant_image():
    out = histogram_equalize([128] * 16, 4, 4)
    assert out.tolist() == [0] * 16


def test_histogram_equalize_four_levels():
    out = histogram_equalize([0, 85, 170, 255], 2, 2)
    assert out.tolist() == [0, 85, 170, 255]


def test_histogram_equalize_stretches_range():
    out = histogram_equalize([10, 10, 12, 40, 40, 41], 3, 2)
    assert out.min() == 0
    assert out.max() == 255


def test_histogram_equalize_validation():
    with pytest.raises(LengthMismatch):
        histogram_equalize([1, 2, 3], 2, 2)
    with pytest.raises(PixelRangeError):
        histogram_equalize([1, 2, 3, 256], 2, 2)
    with pytest.raises(PixelRangeError):
        histogram_equalize([1, 2, 3, 4.5], 2, 2)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=255), min_size=2, max_size=64))
def test_histogram_equalize_is_idempotent_on_small_images(pixels):
    once = histogram_equalize(pixels, len(pixels), 1)
    twice = histogram_equalize(once, len(pixels), 1)
    assert once.tolist() == twice.tolist()
    if len(set(pixels)) >= 2:
        assert once.min() == 0 and once.max() == 255


def test_equalize_dataset_keeps_protocol():
    samples = np.array([[0, 0, 10, 20], [5, 5, 5, 9], [1, 2, 3, 4], [9, 8, 8, 9], [0, 255, 0, 255]])
    dataset = make_dataset(samples, ["a", "a", "b", "b", "x"],
                           ["train", "train", "train", "train", "test"], ["a", "b"], ["x"])
    out = equalize_dataset(dataset, 2, 2)
    np.testing.assert_array_equal(out.labels, dataset.labels)
    np.testing.assert_array_equal(out.roles, dataset.roles)
    np.testing.assert_array_equal(out.samples[0], histogram_equalize(samples[0], 2, 2))
    with pytest.raises(LengthMismatch):
        equalize_dataset(dataset, 3, 2)


def test_synthetic_counts():
    dataset = generate_synthetic_protocol(3, 2, 4, 5, 10.0, "none", seed=7)
    assert dataset.n == 6
    assert dataset.E == 3 + 4
    assert dataset.I == 3 + 4
    assert dataset.clients == ("c000", "c001", "c002")
    assert dataset.impostors == ("i000", "i001")


def test_synthetic_is_deterministic():
    a = generate_synthetic_protocol(3, 2, 4, 5, 10.0, "none", seed=7)
    b = generate_synthetic_protocol(3, 2, 4, 5, 10.0, "none", seed=7)
    c = generate_synthetic_protocol(3, 2, 4, 5, 10.0, "none", seed=8)
    assert a.samples.tobytes() == b.samples.tobytes()
    assert list(a.labels) == list(b.labels)
    assert not np.array_equal(a.samples, c.samples)


def test_synthetic_clusters_are_separated():
    dataset = generate_synthetic_protocol(3, 2, 8, 8, 10.0, "none", seed=7)
    means = {c: dataset.samples[dataset.identity_rows(c)].mean(axis=0)
             for c in dataset.clients + dataset.impostors}
    ids = list(means)
    gaps = [np.linalg.norm(means[a] - means[b]) for a in ids for b in ids if a < b]
    assert min(gaps) > 10.0


@pytest.mark.parametrize("warp", ["quadratic-lift", "radial"])
def test_synthetic_warps(warp):
    plain = generate_synthetic_protocol(3, 1, 4, 3, 6.0, "none", seed=3)
    warped = generate_synthetic_protocol(3, 1, 4, 3, 6.0, warp, seed=3)
    assert warped.samples.shape == plain.samples.shape
    assert not np.allclose(warped.samples, plain.samples)


@pytest.mark.parametrize("kwargs", [
    {"num_clients": 1},
    {"samples_per_identity": 3},
    {"dim": 0},
    {"separation": 0.0},
    {"warp": "spiral"},
])
def test_synthetic_rejects_bad_parameters(kwargs):
    params = dict(num_clients=3, num_impostors=1, samples_per_identity=4, dim=2,
                  separation=5.0, warp="none", seed=0)
    params.update(kwargs)
    with pytest.raises(InvalidGenerationParameters):
        generate_synthetic_protocol(**params)


def test_save_and_load_preserves_dataset(tmp_path):
    dataset = generate_synthetic_protocol(3, 2, 6, 4, 8.0, "radial", seed=11)
    save_dataset(dataset, tmp_path / "s.csv", tmp_path / "p.json")
    loaded = load_dataset(tmp_path / "s.csv", tmp_path / "p.json")

    np.testing.assert_allclose(loaded.samples, dataset.samples, rtol=0, atol=1e-12)
    assert list(loaded.labels) == list(dataset.labels)
    assert list(loaded.roles) == list(dataset.roles)
    assert loaded.clients == dataset.clients
    assert isinstance(loaded, VerificationDataset)
