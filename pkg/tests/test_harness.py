"""Dataset generation, checkpoint files, config parsing and hashing."""

import numpy as np
import pytest

from purelab.errors import ConfigurationError, IntegrityError
from purelab.harness import (
    canonical_text,
    config_hash,
    file_hash,
    load_classifier,
    load_denoiser,
    load_tensors,
    make_dataset,
    parse_config_text,
    save_classifier,
    save_denoiser,
    save_tensors,
)
from purelab.models import ClassifierParams, DenoiserParams


# -- dataset -------------------------------------------------------------------


def test_same_seed_identical():
    a = make_dataset(3, n=64)
    b = make_dataset(3, n=64)
    assert np.array_equal(a.images, b.images)
    assert np.array_equal(a.labels, b.labels)
    assert np.array_equal(a.is_train, b.is_train)


def test_different_seed_differs():
    a = make_dataset(3, n=64)
    b = make_dataset(4, n=64)
    assert not np.array_equal(a.images, b.images)


def test_one_example_per_class():
    ds = make_dataset(5, n=4, classes=4)
    assert sorted(ds.labels.tolist()) == [0, 1, 2, 3]


def test_class_balance_within_one():
    ds = make_dataset(1, n=514, classes=4)
    counts = np.bincount(ds.labels)
    assert counts.max() - counts.min() <= 1


def test_values_in_unit_box():
    ds = make_dataset(9, n=128)
    assert ds.images.min() >= 0.0 and ds.images.max() <= 1.0


def test_dataset_validation():
    with pytest.raises(ConfigurationError):
        make_dataset(0, n=2, classes=4)
    with pytest.raises(ConfigurationError):
        make_dataset(0, n=10, classes=9)


def test_split_tags_balanced():
    ds = make_dataset(2, n=400, classes=4)
    for c in range(4):
        mask = ds.labels == c
        frac = ds.is_train[mask].mean()
        assert 0.7 <= frac <= 0.8


# -- checkpoint files -------------------------------------------------------------


def test_tensor_roundtrip(tmp_path):
    path = tmp_path / "t.dpur"
    records = {
        "a": np.arange(12, dtype=np.float32).reshape(3, 4),
        "b.scalar": np.array(3.5, dtype=np.float32),
    }
    digest = save_tensors(records, path)
    assert file_hash(path) == digest
    loaded = load_tensors(path)
    assert set(loaded) == {"a", "b.scalar"}
    assert np.array_equal(loaded["a"], records["a"])
    assert loaded["b.scalar"] == np.float32(3.5)


def test_denoiser_roundtrip_value_exact(tmp_path):
    p = DenoiserParams.init(64, (32, 16), t_max=200, seed=8)
    path = tmp_path / "d.dpur"
    save_denoiser(p, path)
    q = load_denoiser(path)
    assert (q.image_dim, q.hidden, q.t_max, q.time_dim, q.activation) == \
        (p.image_dim, p.hidden, p.t_max, p.time_dim, p.activation)
    for a, b in zip(p.arrays, q.arrays):
        assert np.array_equal(a, b)


def test_classifier_roundtrip(tmp_path):
    p = ClassifierParams.init(16, (8,), 4, seed=2)
    path = tmp_path / "c.dpur"
    save_classifier(p, path)
    q = load_classifier(path)
    assert q.classes == 4 and q.hidden == (8,)
    for a, b in zip(p.arrays, q.arrays):
        assert np.array_equal(a, b)


def test_flipped_byte_detected(tmp_path):
    path = tmp_path / "x.dpur"
    save_tensors({"w": np.ones((4, 4), dtype=np.float32)}, path)
    raw = bytearray(path.read_bytes())
    raw[20] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(IntegrityError):
        load_tensors(path)


def test_payload_corruption_names_record(tmp_path):
    path = tmp_path / "y.dpur"
    save_tensors({"first": np.zeros(2, dtype=np.float32),
                  "second": np.ones(2, dtype=np.float32)}, path)
    raw = bytearray(path.read_bytes())
    # flip a payload byte of "second" and rewrite the trailing hash so only
    # the per-record crc can catch it
    idx = raw.find(b"second") + len("second") + 1 + 4 + 2
    raw[idx] ^= 0x01
    import hashlib

    body = bytes(raw[:-32])
    raw[-32:] = hashlib.sha256(body).digest()
    path.write_bytes(bytes(raw))
    with pytest.raises(IntegrityError) as err:
        load_tensors(path)
    assert "second" in str(err.value)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "z.dpur"
    save_tensors({"w": np.zeros(1, dtype=np.float32)}, path)
    raw = bytearray(path.read_bytes())
    raw[0:4] = b"NOPE"
    import hashlib

    raw[-32:] = hashlib.sha256(bytes(raw[:-32])).digest()
    path.write_bytes(bytes(raw))
    with pytest.raises(IntegrityError):
        load_tensors(path)


def test_truncated_rejected(tmp_path):
    path = tmp_path / "s.dpur"
    path.write_bytes(b"DPUR123")
    with pytest.raises(IntegrityError):
        load_tensors(path)


# -- config files -------------------------------------------------------------------


def test_parse_config_roundtrip():
    text = """
# comment
[dataset]
seed = 7
n = 512

[attack]
pathway = surrogate
budget = (30,1),(50,1),(125,5)
"""
    sections = parse_config_text(text)
    assert sections["dataset"]["seed"] == "7"
    assert sections["attack"]["budget"] == "(30,1),(50,1),(125,5)"


def test_parse_config_errors():
    with pytest.raises(ConfigurationError):
        parse_config_text("key = value")
    with pytest.raises(ConfigurationError):
        parse_config_text("[s]\nnot a pair")
    with pytest.raises(ConfigurationError):
        parse_config_text("[]\n")


def test_canonical_text_sorted():
    sections = {"b": {"z": 1, "a": 2}, "a": {"k": 3}}
    text = canonical_text(sections)
    assert text.index("[a]") < text.index("[b]")
    assert text.index("a = 2") < text.index("z = 1")


def test_config_hash_changes_iff_semantic_change():
    base = {"attack": {"eps": 0.125, "iterations": 40}}
    same = {"attack": {"iterations": 40, "eps": 0.125}}
    different = {"attack": {"eps": 0.126, "iterations": 40}}
    assert config_hash(base) == config_hash(same)
    assert config_hash(base) != config_hash(different)
