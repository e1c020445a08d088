import hashlib
from pathlib import Path

import numpy as np
import pytest

from mribench.errors import ValidationError
from mribench.ingest import parse_dicom_series, validate_continuity
from mribench.interchange import load_mask_png, read_fmap
from mribench.synth import (
    SynthSpec,
    make_dataset,
    make_dicom_series,
    make_features,
    reference_dicom_volume,
    shifted_copy,
)
from mribench.zeroshot import select_single_object


def tree_digest(root: Path) -> str:
    h = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            h.update(path.name.encode())
            h.update(path.read_bytes())
    return h.hexdigest()


def test_ellipse_masks_are_single_object(tmp_path):
    spec = SynthSpec(seed=0, image_size=(32, 32), n_volumes=3, slices_per_volume=4)
    manifest, _, masks = make_dataset(spec, tmp_path / "d")
    assert len(manifest.entries) == 12
    for mask in masks:
        assert mask.any()
        assert select_single_object(mask)


def test_two_blobs_fail_single_object(tmp_path):
    spec = SynthSpec(seed=1, image_size=(32, 32), n_volumes=1, slices_per_volume=2,
                     object_kind="two_blobs")
    _, _, masks = make_dataset(spec, tmp_path / "d")
    for mask in masks:
        assert not select_single_object(mask)


def test_dataset_bitwise_deterministic(tmp_path):
    spec = SynthSpec(seed=5, image_size=(24, 24), n_volumes=2, slices_per_volume=3)
    make_dataset(spec, tmp_path / "a")
    make_dataset(spec, tmp_path / "b")
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")


def test_mask_matches_rendered_geometry(tmp_path):
    spec = SynthSpec(seed=2, image_size=(32, 32), n_volumes=1, slices_per_volume=1,
                     noise_sigma=0.0)
    manifest, images, masks = make_dataset(spec, tmp_path / "d")
    stored = load_mask_png(manifest.entries[0].mask_path).labels
    assert np.array_equal(stored, masks[0])
    # object pixels carry the class intensity, background stays dark
    img = images[0]
    assert img[masks[0] == 1].min() > img[masks[0] == 0].max()


def test_features_onehot_oracle_matches_mask(tmp_path):
    spec = SynthSpec(seed=3, image_size=(16, 16), n_volumes=1, slices_per_volume=2)
    manifest, _, masks = make_dataset(spec, tmp_path / "d")
    feats = make_features(manifest, "onehot_oracle", tmp_path / "f", patch_size=1)
    fmap = read_fmap(feats.entries[0].feature_path)
    assert fmap.grid_h == 16 and fmap.channels == 2
    assert np.array_equal(fmap.values[..., 1] > 0.5, masks[0] == 1)
    assert fmap.encoder_id == "oracle:onehot_oracle"


def test_features_intensity_positional_deterministic(tmp_path):
    spec = SynthSpec(seed=4, image_size=(32, 32), n_volumes=1, slices_per_volume=2)
    manifest, _, _ = make_dataset(spec, tmp_path / "d")
    a = make_features(manifest, "intensity_positional", tmp_path / "fa", seed=1)
    b = make_features(manifest, "intensity_positional", tmp_path / "fb", seed=1)
    for ea, eb in zip(a.entries, b.entries):
        assert read_fmap(ea.feature_path).values.tobytes() == \
               read_fmap(eb.feature_path).values.tobytes()


def test_features_grid_arithmetic(tmp_path):
    spec = SynthSpec(seed=4, image_size=(48, 32), n_volumes=1, slices_per_volume=1)
    manifest, _, _ = make_dataset(spec, tmp_path / "d")
    feats = make_features(manifest, "intensity_positional", tmp_path / "f", patch_size=8)
    fmap = read_fmap(feats.entries[0].feature_path)
    assert (fmap.grid_h, fmap.grid_w) == (6, 4)


def test_dicom_series_accepted_and_rejected(tmp_path):
    spec = SynthSpec(seed=6, image_size=(16, 16), slices_per_volume=8)
    ok_dir = make_dicom_series(spec, tmp_path / "ok")
    assert validate_continuity(parse_dicom_series(ok_dir)).ok
    bad_dir = make_dicom_series(spec, tmp_path / "bad", drop_slice=3)
    result = validate_continuity(parse_dicom_series(bad_dir))
    assert not result.ok
    assert result.index + 1 == 3        # gap index sits just before the hole


def test_dicom_roundtrip_quantization(tmp_path):
    spec = SynthSpec(seed=7, image_size=(16, 16), slices_per_volume=5)
    vol = parse_dicom_series(make_dicom_series(spec, tmp_path / "s"))
    ref = reference_dicom_volume(spec)
    slope = (ref.max() - ref.min()) / 65535.0
    assert np.abs(vol.voxels - ref).max() <= slope / 2 + 1e-4


def test_shifted_copy_shifts(tmp_path):
    spec = SynthSpec(seed=8, image_size=(16, 16), n_volumes=1, slices_per_volume=2)
    manifest, images, _ = make_dataset(spec, tmp_path / "d")
    shifted = shifted_copy(manifest, tmp_path / "s", 0.2)
    from mribench.interchange import load_image_png

    a = load_image_png(manifest.entries[0].image_path)
    b = load_image_png(shifted.entries[0].image_path)
    moved = (a < 0.79) & (a > 0.01)
    assert np.allclose(b[moved] - a[moved], 0.2, atol=2 / 255)


def test_spec_validation():
    with pytest.raises(ValidationError):
        SynthSpec(object_kind="cube")
    with pytest.raises(ValidationError):
        SynthSpec(feature_mode="resnet")
