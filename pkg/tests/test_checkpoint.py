import struct

import numpy as np
import pytest

from exf import checkpoint
from exf.errors import ParseError
from exf.model import init


def test_round_trip(tmp_path):
    m = init((5, 7, 3), 11)
    path = tmp_path / "m.ckpt"
    checkpoint.save(m, path, {"role": "source", "seed": 11})
    back, header = checkpoint.load(path)
    assert back.layer_dims == (5, 7, 3)
    assert header["metadata"] == {"role": "source", "seed": 11}
    assert header["param_count"] == m.param_count()
    for a, b in zip(m.params(), back.params()):
        assert np.array_equal(a, b)


def test_bytes_are_deterministic():
    m = init((4, 6, 2), 0)
    assert checkpoint.to_bytes(m, {"b": 1, "a": 2}) == checkpoint.to_bytes(m.copy(), {"a": 2, "b": 1})


def test_layout():
    m = init((2, 3), 0)
    raw = checkpoint.to_bytes(m)
    (hlen,) = struct.unpack_from("<I", raw, 4)
    assert raw[:4] == b"EXFC"
    assert len(raw) == 8 + hlen + 8 * m.param_count()
    blob = np.frombuffer(raw[8 + hlen :], dtype="<f8")
    assert np.array_equal(blob[:6], m.weights[0].ravel())


def test_bad_magic():
    with pytest.raises(ParseError, match="bad magic"):
        checkpoint.from_bytes(b"NOPE" + b"\0" * 20)


def test_truncated_blob():
    raw = checkpoint.to_bytes(init((3, 2), 0))
    with pytest.raises(ParseError, match="parameter bytes"):
        checkpoint.from_bytes(raw[:-8])


def test_param_count_mismatch():
    raw = checkpoint.to_bytes(init((3, 2), 0))
    bad = raw.replace(b'"param_count": 8', b'"param_count": 9')
    with pytest.raises(ParseError, match="param_count"):
        checkpoint.from_bytes(bad)


def test_unreadable_header():
    raw = b"EXFC" + struct.pack("<I", 4) + b"\xff\xfe{}"
    with pytest.raises(ParseError, match="header"):
        checkpoint.from_bytes(raw)
