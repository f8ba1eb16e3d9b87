import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from geoseg.errors import ConsistencyError, FormatError, IncompletePredictionError
from geoseg.predict import (DirectorySource, OracleSource, decode_logits, encode_logits,
                            load_logits, make_source, oracle_logits, read_logit_header,
                            write_logits)


def test_round_trip_bitwise(tmp_path, rng):
    data = rng.standard_normal((512, 512, 3)).astype(np.float32)
    write_logits(tmp_path, 7, data)
    tile = load_logits(tmp_path, 7)
    assert tile.index == 7
    assert tile.data.tobytes() == data.tobytes()


def test_byte_layout():
    data = np.arange(12, dtype=np.float32).reshape(2, 3, 2)
    buf = encode_logits(data)
    assert buf[:4] == b"LGT1"
    assert np.frombuffer(buf[4:16], "<u4").tolist() == [2, 3, 2]
    assert np.frombuffer(buf[16:], "<f4").tolist() == list(range(12))


@given(arrays(np.float32, st.tuples(st.integers(1, 5), st.integers(1, 5), st.integers(1, 4)),
              elements=st.floats(-1e6, 1e6, width=32)))
@settings(max_examples=100)
def test_codec_identity(data):
    assert decode_logits(encode_logits(data)).tobytes() == data.tobytes()


def test_truncated_file(tmp_path):
    path = write_logits(tmp_path, 0, np.zeros((4, 4, 2), np.float32))
    raw = path.read_bytes()
    path.write_bytes(raw[:-3])
    with pytest.raises(FormatError):
        load_logits(tmp_path, 0)
    path.write_bytes(raw[:6])
    with pytest.raises(FormatError):
        read_logit_header(path)


def test_bad_magic():
    with pytest.raises(FormatError):
        decode_logits(b"XXXX" + bytes(12))


def test_class_count_mismatch(tmp_path):
    write_logits(tmp_path, 0, np.zeros((4, 4, 3), np.float32))
    with pytest.raises(ConsistencyError):
        load_logits(tmp_path, 0, class_count=2)
    src = DirectorySource(tmp_path, class_count=2)
    with pytest.raises(ConsistencyError):
        src.check([0])


def test_directory_missing(tmp_path):
    write_logits(tmp_path, 0, np.zeros((2, 2, 2), np.float32))
    src = DirectorySource(tmp_path, 2)
    assert src.missing([0, 1, 2]) == [1, 2]
    with pytest.raises(IncompletePredictionError) as err:
        src.check([0, 1, 2])
    assert err.value.missing == [1, 2]


def test_oracle_exact(rng):
    lbl = rng.integers(0, 4, (64, 64), dtype=np.uint8)
    tile = oracle_logits(lbl, 4)
    assert tile.data.dtype == np.float32 and tile.data.shape == (64, 64, 4)
    assert set(np.unique(tile.data)) == {0.0, 1.0}
    assert np.array_equal(tile.data.argmax(axis=2), lbl)


def test_oracle_full_noise(rng):
    lbl = rng.integers(0, 3, (64, 64), dtype=np.uint8)
    assert (oracle_logits(lbl, 3, 1.0, seed=2).data.argmax(axis=2) != lbl).all()


def test_oracle_noise_rate(rng):
    lbl = rng.integers(0, 3, (512, 512), dtype=np.uint8)
    wrong = (oracle_logits(lbl, 3, 0.1, seed=4).data.argmax(axis=2) != lbl).mean()
    assert abs(wrong - 0.1) <= 0.01


def test_oracle_deterministic(rng):
    lbl = rng.integers(0, 3, (32, 32), dtype=np.uint8)
    a = oracle_logits(lbl, 3, 0.3, seed=1, index=5).data
    assert np.array_equal(a, oracle_logits(lbl, 3, 0.3, seed=1, index=5).data)
    assert not np.array_equal(a, oracle_logits(lbl, 3, 0.3, seed=1, index=6).data)


def test_oracle_source_from_dataset(dataset):
    src = make_source("oracle", dataset)
    assert src.kind == "oracle"
    assert np.array_equal(src[4].argmax(axis=2), dataset.label(4))
    assert make_source("noisy-oracle", dataset, noise_rate=0.2).kind == "noisy-oracle"
    with pytest.raises(ValueError):
        OracleSource(dataset, 3, noise_rate=1.5)


def test_directory_source_memmaps(tmp_path, rng):
    data = rng.random((8, 8, 2), dtype=np.float32)
    write_logits(tmp_path, 3, data)
    got = DirectorySource(tmp_path, 2, (8, 8))[3]
    assert isinstance(got, np.memmap)
    assert np.array_equal(got, data)
