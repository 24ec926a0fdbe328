import io
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import array_shapes, arrays

from icd import checkpoint
from icd.checkpoint import CheckpointError, VersionMismatch
from icd.diffusion import make_schedule
from icd.solver import OdeDirection


def _same_params(a, b):
    assert list(a.params) == list(b.params)
    for k in a.params:
        np.testing.assert_array_equal(a.params[k].value, b.params[k].value)


def test_roundtrip_teacher_and_guided(small_teacher, small_guided, rng):
    for den, kind in ((small_teacher, "teacher"), (small_guided, "guided")):
        ck = checkpoint.loads(checkpoint.dumps(den))
        assert ck.kind == kind and ck.plan is None
        _same_params(den, ck.den)
        assert ck.den.cfg == den.cfg and ck.den.w_set == den.w_set
        x = rng.standard_normal((8, 2))
        np.testing.assert_array_equal(ck.den(x, 300, 2, 8.0 if den.has_guidance else None),
                                      den(x, 300, 2, 8.0 if den.has_guidance else None))


def test_roundtrip_students(small_icd):
    for cm, kind in ((small_icd.cd, "cd"), (small_icd.fcd, "fcd")):
        ck = checkpoint.loads(checkpoint.dumps(cm.den, cm.plan, cm.direction))
        assert ck.kind == kind and ck.plan == cm.plan and ck.direction is cm.direction
        _same_params(cm.den, ck.den)


def test_bytes_are_deterministic(small_guided):
    assert checkpoint.dumps(small_guided) == checkpoint.dumps(small_guided.copy())


def test_save_creates_directory(tmp_path, small_teacher):
    path = tmp_path / "a" / "b" / "teacher.ckpt"
    checkpoint.save(path, small_teacher)
    _same_params(small_teacher, checkpoint.load(path).den)


def test_schedule_survives(small_teacher):
    ck = checkpoint.loads(checkpoint.dumps(small_teacher))
    assert checkpoint.same_schedule(ck.den.schedule, small_teacher.schedule)
    assert not checkpoint.same_schedule(ck.den.schedule, make_schedule(25))


def test_version_mismatch_names_versions(small_teacher):
    data = bytearray(checkpoint.dumps(small_teacher))
    data[4:8] = struct.pack("<I", 7)
    with pytest.raises(VersionMismatch) as info:
        checkpoint.loads(bytes(data))
    assert info.value.found == 7 and info.value.expected == checkpoint.FORMAT_VERSION
    assert "7" in str(info.value) and "1" in str(info.value)


@pytest.mark.parametrize("mutate", [
    lambda d: b"XXXX" + d[4:],
    lambda d: d[:-3],
    lambda d: d + b"\0",
])
def test_corrupt_files_rejected(small_teacher, mutate):
    with pytest.raises(CheckpointError):
        checkpoint.loads(mutate(checkpoint.dumps(small_teacher)))


def test_missing_model_description():
    buf = io.BytesIO()
    buf.write(checkpoint.MAGIC + struct.pack("<I", 1) + struct.pack("<3I2d", 49, 1000, 19, 1e-4, 0.02))
    checkpoint.write_tensors(buf, {"w0": np.zeros((2, 2))})
    with pytest.raises(CheckpointError):
        checkpoint.loads(buf.getvalue())


def test_direction_flags():
    assert checkpoint._DIRECTIONS[OdeDirection.REVERSE] < 0 < checkpoint._DIRECTIONS[OdeDirection.FORWARD]


@given(st.dictionaries(st.text(min_size=1, max_size=8),
                       arrays(np.float64, array_shapes(min_dims=0, max_dims=3, max_side=4),
                              elements=st.floats(allow_nan=False)),
                       max_size=4))
@settings(max_examples=60, deadline=None)
def test_tensor_blocks_roundtrip(tensors):
    buf = io.BytesIO()
    checkpoint.write_tensors(buf, tensors)
    buf.seek(0)
    out = checkpoint.read_tensors(buf)
    assert list(out) == list(tensors)
    for k in tensors:
        np.testing.assert_array_equal(out[k], tensors[k])
