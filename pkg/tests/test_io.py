import json

import numpy as np
import pytest
from PIL import Image

from covis import io
from covis.errors import (
    DecodeError,
    DimensionMismatchError,
    DuplicateEntryError,
    EmptyManifestError,
    MissingFileError,
    ParseError,
)


def _write_png(path, arr, mode="L"):
    Image.fromarray(arr, mode=mode).save(path, format="PNG")


def test_gray_values_map_to_v_over_255(tmp_path):
    arr = np.arange(256, dtype=np.uint8).reshape(16, 16)
    p = tmp_path / "g.png"
    _write_png(p, arr)
    m = io.load_gray_mask(p)
    assert np.array_equal(m.values, arr / 255.0)


def test_png_pixel_128_value(tmp_path):
    p = tmp_path / "mid.png"
    _write_png(p, np.full((2, 2), 128, dtype=np.uint8))
    m = io.load_gray_mask(p)
    assert m.values[0, 0] == 128 / 255
    assert abs(m.values[0, 0] - 0.50196) < 1e-5


def test_rgb_gray_pixel_luma_is_exact(tmp_path):
    # (v, v, v) must decode to exactly v / 255 for every v
    v = np.arange(256, dtype=np.uint8)
    arr = np.stack([v, v, v], axis=-1).reshape(16, 16, 3)
    p = tmp_path / "rgb.png"
    _write_png(p, arr, mode="RGB")
    m = io.load_gray_mask(p)
    assert np.array_equal(m.values, (v / 255.0).reshape(16, 16))


def test_rgb_luma_weights(tmp_path):
    arr = np.zeros((1, 3, 3), dtype=np.uint8)
    arr[0, 0] = (255, 0, 0)
    arr[0, 1] = (0, 255, 0)
    arr[0, 2] = (0, 0, 255)
    p = tmp_path / "rgb.png"
    _write_png(p, arr, mode="RGB")
    m = io.load_gray_mask(p)
    assert m.values[0, 0] == pytest.approx(0.299, abs=1e-12)
    assert m.values[0, 1] == pytest.approx(0.587, abs=1e-12)
    assert m.values[0, 2] == pytest.approx(0.114, abs=1e-12)


def test_round_trip_error_bound(tmp_path):
    rng = np.random.default_rng(7)
    vals = rng.random((23, 17))
    p = tmp_path / "rt.png"
    io.save_gray_mask(io.GrayMask(vals), p)
    back = io.load_gray_mask(p)
    assert np.abs(back.values - vals).max() <= 1 / 510 + 1e-12


def test_missing_file():
    with pytest.raises(MissingFileError):
        io.load_gray_mask("/nonexistent/nope.png")


def test_corrupt_file(tmp_path):
    p = tmp_path / "bad.png"
    p.write_bytes(b"\x89PNG\r\n\x1a\nnot really a png")
    with pytest.raises(DecodeError):
        io.load_gray_mask(p)


def test_16bit_png_rejected(tmp_path):
    p = tmp_path / "deep.png"
    Image.fromarray(np.zeros((4, 4), dtype=np.uint16)).save(p, format="PNG")
    with pytest.raises(DecodeError):
        io.load_gray_mask(p)


def test_binarize_cut_at_128():
    m = io.GrayMask(np.array([[127 / 255, 128 / 255]]))
    b = io.binarize(m)
    assert b.values.tolist() == [[False, True]]


def test_binarize_idempotent():
    rng = np.random.default_rng(3)
    m = io.GrayMask(rng.random((9, 9)))
    once = io.binarize(m)
    again = io.binarize(io.GrayMask(once.values.astype(float)))
    assert np.array_equal(once.values, again.values)


def test_mask_validation():
    with pytest.raises(ValueError):
        io.GrayMask(np.array([[1.5]]))
    with pytest.raises(ValueError):
        io.GrayMask(np.array([[-0.1]]))
    with pytest.raises(ValueError):
        io.GrayMask(np.array([1.0]))  # 1-d
    with pytest.raises(ValueError):
        io.BinaryMask(np.array([[1, 0]]))  # not bool


def test_masks_are_frozen():
    m = io.GrayMask(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        m.values[0, 0] = 1.0


def test_load_pair_dimension_mismatch(tmp_path):
    _write_png(tmp_path / "p.png", np.zeros((4, 4), dtype=np.uint8))
    _write_png(tmp_path / "g.png", np.zeros((5, 4), dtype=np.uint8))
    with pytest.raises(DimensionMismatchError):
        io.load_pair(tmp_path / "p.png", tmp_path / "g.png")


def _manifest_doc(entries):
    return {"name": "demo", "entries": entries}


def test_manifest_round_trip(tmp_path):
    doc = _manifest_doc([{"pred": "a.png", "gt": "gt/a.png"}, {"pred": "b.png", "gt": "gt/b.png"}])
    p = tmp_path / "m.json"
    p.write_text(json.dumps(doc))
    m = io.load_manifest(p)
    assert m.name == "demo"
    assert len(m.entries) == 2
    assert m.entries[0].pred == tmp_path / "a.png"
    assert m.entries[1].gt == tmp_path / "gt" / "b.png"


def test_manifest_duplicate_entry(tmp_path):
    doc = _manifest_doc([{"pred": "a.png", "gt": "g1.png"}, {"pred": "a.png", "gt": "g2.png"}])
    p = tmp_path / "m.json"
    p.write_text(json.dumps(doc))
    with pytest.raises(DuplicateEntryError):
        io.load_manifest(p)


def test_manifest_empty(tmp_path):
    p = tmp_path / "m.json"
    p.write_text(json.dumps(_manifest_doc([])))
    with pytest.raises(EmptyManifestError):
        io.load_manifest(p)


def test_manifest_parse_errors(tmp_path):
    p = tmp_path / "m.json"
    p.write_text("{not json")
    with pytest.raises(ParseError):
        io.load_manifest(p)
    p.write_text(json.dumps({"entries": []}))
    with pytest.raises(ParseError):
        io.load_manifest(p)
    p.write_text(json.dumps({"name": "x", "entries": [{"pred": "a.png"}]}))
    with pytest.raises(ParseError):
        io.load_manifest(p)
