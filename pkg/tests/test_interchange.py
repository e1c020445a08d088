import json
import struct
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mribench.errors import FormatError, LabelError, LengthError, ValidationError
from mribench.interchange import (
    FeatureMap,
    LabelMask,
    Manifest,
    ManifestEntry,
    load_image_png,
    load_mask_png,
    read_fmap,
    save_image_png,
    save_mask_png,
    write_fmap,
)

DATA = Path(__file__).parent / "data"


def test_fmap_identity_case(tmp_path):
    fm = FeatureMap(values=np.zeros((1, 1, 1), dtype=np.float32))
    path = tmp_path / "one.fmap"
    write_fmap(fm, path)
    back = read_fmap(path)
    assert back.values.shape == (1, 1, 1)
    assert back.values[0, 0, 0] == 0.0


def test_fmap_header_is_24_bytes_for_rank3(tmp_path):
    fm = FeatureMap(values=np.arange(12, dtype=np.float32).reshape(2, 2, 3))
    path = tmp_path / "m.fmap"
    write_fmap(fm, path)
    blob = path.read_bytes()
    # magic(4) + version(1) + dtype(1) + reserved(2) + rank(4) + 3 dims(12) = 24
    assert len(blob) == 24 + 12 * 4
    assert blob[:4] == b"FMAP"
    assert blob[4] == 1
    assert struct.unpack_from("<I", blob, 8) == (3,)
    assert struct.unpack_from("<3I", blob, 12) == (2, 2, 3)


def test_fmap_round_trip_bitwise(tmp_path):
    rng = np.random.default_rng(7)
    fm = FeatureMap(values=rng.normal(size=(5, 4, 7)).astype(np.float32),
                    slice_ref="P0/S0/3", encoder_id="enc-a")
    path = tmp_path / "rt.fmap"
    write_fmap(fm, path)
    back = read_fmap(path)
    assert back.values.tobytes() == fm.values.tobytes()
    assert back.slice_ref == "P0/S0/3"
    assert back.encoder_id == "enc-a"


@settings(max_examples=25, deadline=None)
@given(
    h=st.integers(1, 6), w=st.integers(1, 6), c=st.integers(1, 5),
    seed=st.integers(0, 2**32 - 1),
)
def test_fmap_round_trip_property(tmp_path_factory, h, w, c, seed):
    rng = np.random.default_rng(seed)
    fm = FeatureMap(values=rng.normal(size=(h, w, c)).astype(np.float32))
    path = tmp_path_factory.mktemp("fmap") / "x.fmap"
    write_fmap(fm, path)
    assert read_fmap(path).values.tobytes() == fm.values.tobytes()


def test_fmap_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.fmap"
    good = FeatureMap(values=np.ones((1, 1, 2), dtype=np.float32))
    write_fmap(good, path)
    blob = bytearray(path.read_bytes())
    blob[:4] = b"XXXX"
    path.write_bytes(bytes(blob))
    with pytest.raises(FormatError):
        read_fmap(path)


def test_fmap_truncated_payload_rejected(tmp_path):
    path = tmp_path / "short.fmap"
    write_fmap(FeatureMap(values=np.ones((2, 2, 2), dtype=np.float32)), path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-4])
    with pytest.raises(LengthError):
        read_fmap(path)


def test_fmap_rejects_nonfinite():
    vals = np.ones((1, 1, 2), dtype=np.float32)
    vals[0, 0, 0] = np.nan
    with pytest.raises(ValidationError):
        FeatureMap(values=vals)


def test_fmap_golden_bytes_little_endian(tmp_path):
    """The on-disk layout is frozen; compare against an independently
    assembled byte string and the stored golden file."""
    values = np.array([[[1.0, -2.0, 0.5]], [[3.25, 4.0, -0.125]]], dtype=np.float32)
    fm = FeatureMap(values=values, slice_ref="gold", encoder_id="gold-enc")
    path = tmp_path / "golden.fmap"
    write_fmap(fm, path)
    expected = struct.pack("<4sBBHI3I", b"FMAP", 1, 1, 0, 3, 2, 1, 3)
    expected += struct.pack("<6f", 1.0, -2.0, 0.5, 3.25, 4.0, -0.125)
    assert path.read_bytes() == expected
    golden = DATA / "golden.fmap"
    assert path.read_bytes() == golden.read_bytes()


def test_mask_png_round_trip_zeros(tmp_path):
    mask = np.zeros((4, 4), dtype=np.uint8)
    path = tmp_path / "m.png"
    save_mask_png(LabelMask(labels=mask), path)
    assert np.array_equal(load_mask_png(path).labels, mask)


def test_mask_png_round_trip_label_set(tmp_path):
    mask = np.array([[0, 1, 2], [2, 1, 0], [0, 0, 2]], dtype=np.uint8)
    path = tmp_path / "m.png"
    save_mask_png(LabelMask(labels=mask), path)
    back = load_mask_png(path).labels
    assert np.array_equal(back, mask)
    assert set(np.unique(back)) == {0, 1, 2}


def test_mask_png_rejects_rgb(tmp_path):
    from PIL import Image

    path = tmp_path / "rgb.png"
    Image.new("RGB", (4, 4), (10, 20, 30)).save(path)
    with pytest.raises(FormatError):
        load_mask_png(path)


def test_mask_png_rejects_16bit(tmp_path):
    from PIL import Image

    path = tmp_path / "deep.png"
    deep = Image.new("I;16", (4, 4))
    deep.putdata([1000] * 16)
    deep.save(path)
    with pytest.raises(FormatError):
        load_mask_png(path)


def test_label_mask_validates_declared_names():
    with pytest.raises(LabelError):
        LabelMask(labels=np.array([[0, 5]], dtype=np.uint8), label_names={0: "bg", 1: "fg"})


def test_image_png_rounding_rule(tmp_path):
    from PIL import Image

    img = np.array([[1.0, 0.5], [0.0, 127.49 / 255.0]])
    path = tmp_path / "img.png"
    save_image_png(img, path)
    raw = np.asarray(Image.open(path))
    assert raw[0, 0] == 255
    assert raw[0, 1] == 128          # 0.5*255 = 127.5 rounds away from zero
    assert raw[1, 0] == 0
    assert raw[1, 1] == 127


def test_manifest_round_trip_and_uniqueness(tmp_path):
    entries = [
        ManifestEntry("P0", "S0", 0, "a.png", mask_path="a_m.png", class_label="x"),
        ManifestEntry("P0", "S0", 1, "b.png"),
        ManifestEntry("P1", "S1", 0, "c.png", attrs={"Modality": "MR"}),
    ]
    m = Manifest(entries=entries, dataset_name="demo")
    path = tmp_path / "m.jsonl"
    m.save(path)
    back = Manifest.load(path)
    assert back.dataset_name == "demo"
    assert [e.key for e in back.entries] == [e.key for e in entries]
    assert back.entries[0].class_label == "x"
    assert back.entries[2].attrs == {"Modality": "MR"}


def test_manifest_duplicate_rejected_at_load(tmp_path):
    path = tmp_path / "dup.jsonl"
    row = json.dumps({"patient_id": "P", "series_id": "S", "slice_index": 0,
                      "image_path": "x.png"})
    path.write_text(row + "\n" + row + "\n")
    with pytest.raises(ValidationError):
        Manifest.load(path)


def test_image_png_load_scales_to_unit(tmp_path):
    img = np.linspace(0, 1, 16).reshape(4, 4)
    path = tmp_path / "g.png"
    save_image_png(img, path)
    back = load_image_png(path)
    assert back.min() >= 0.0 and back.max() <= 1.0
    assert np.abs(back - img).max() <= 1.0 / 255.0
