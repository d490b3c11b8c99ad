import struct

import numpy as np
import pytest

from b1predictor import niftiio
from b1predictor.errors import InvalidArgumentError


def test_round_trip_float32(tmp_path):
    rng = np.random.default_rng(0)
    data = rng.normal(size=(8, 7, 6)).astype(np.float32)
    affine = np.diag([4.0, 4.0, 4.0, 1.0])
    affine[:3, 3] = (-10.0, 2.0, 3.5)
    path = tmp_path / "v.nii"
    niftiio.save_nifti(path, data, affine, "RELATIVE_B1")
    back, back_affine, intent = niftiio.load_nifti(path)
    assert np.array_equal(back, data)
    assert np.array_equal(back_affine, affine)
    assert intent == "RELATIVE_B1"


def test_round_trip_int16(tmp_path):
    data = np.arange(27, dtype=np.int16).reshape(3, 3, 3)
    path = tmp_path / "m.nii"
    niftiio.save_nifti(path, data, np.eye(4), "MASK")
    back, _, intent = niftiio.load_nifti(path)
    assert np.array_equal(back, data)
    assert intent == "MASK"


def test_wire_format_fields(tmp_path):
    # the byte-level contract shared with the planning toolkit
    data = np.zeros((4, 5, 6), np.float32)
    path = tmp_path / "v.nii"
    niftiio.save_nifti(path, data, np.eye(4), "INTENSITY")
    raw = path.read_bytes()
    assert struct.unpack_from("<i", raw, 0)[0] == 348
    assert raw[344:348] == b"n+1\x00"
    assert struct.unpack_from("<8h", raw, 40)[:4] == (3, 4, 5, 6)
    assert struct.unpack_from("<h", raw, 70)[0] == 16  # float32
    assert struct.unpack_from("<f", raw, 108)[0] == 352.0
    assert len(raw) == 352 + 4 * 5 * 6 * 4


def test_x_fastest_order(tmp_path):
    data = np.zeros((3, 3, 3), np.float32)
    data[1, 0, 0] = 9.0
    path = tmp_path / "v.nii"
    niftiio.save_nifti(path, data, np.eye(4), "INTENSITY")
    raw = path.read_bytes()
    assert struct.unpack_from("<f", raw, 352 + 4)[0] == 9.0


def test_unsupported_dtype(tmp_path):
    with pytest.raises(InvalidArgumentError):
        niftiio.save_nifti(tmp_path / "v.nii", np.zeros((2, 2, 2)), np.eye(4),
                           "INTENSITY")


def test_geometry_json(tmp_path):
    path = tmp_path / "geom.json"
    niftiio.save_geometry_json(path, 10, (0, 0, 1), (0, 0, -76.5), 17.0, 17.0,
                               (256.0, 256.0))
    import json

    doc = json.loads(path.read_text())
    assert doc["n_slices"] == 10
    assert doc["spacing_mm"] == 17.0
    assert doc["normal"] == [0.0, 0.0, 1.0]
