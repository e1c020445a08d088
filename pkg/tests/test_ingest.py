import numpy as np
import pytest

from mribench.dicomio import DicomSlice, read_dicom, write_dicom
from mribench.errors import DuplicateSliceError, FormatError, MixedSeriesError
from mribench.ingest import (
    NormalizationMode,
    Volume,
    export_slices,
    normalize,
    parse_dicom_series,
    validate_continuity,
)
from mribench.interchange import load_image_png
from mribench.synth import SynthSpec, make_dicom_series, reference_dicom_volume


def write_series(tmp_path, positions, series_uid="1.2.3.4", shape=(8, 8)):
    rng = np.random.default_rng(0)
    for i, z in enumerate(positions):
        write_dicom(tmp_path / f"s{i:03d}.dcm", DicomSlice(
            patient_id="P0",
            study_uid="1.2.3",
            series_uid=series_uid,
            sop_instance_uid=f"1.2.3.4.{i}",
            instance_number=i + 1,
            position=(0.0, 0.0, float(z)),
            pixels=rng.integers(0, 400, size=shape).astype(np.uint16),
        ))
    return tmp_path


def make_volume(positions, voxels=None):
    positions = np.asarray(positions, dtype=np.float64)
    if voxels is None:
        voxels = np.random.default_rng(1).random((len(positions), 4, 4)).astype(np.float32)
    return Volume(
        voxels=voxels, spacing_mm=(float(np.median(np.diff(positions))), 1.0, 1.0),
        patient_id="P", series_id="S", orientation=np.eye(3),
        slice_positions=positions,
    )


def test_parse_synthetic_eight_slice_series(tmp_path):
    write_series(tmp_path, positions=range(0, 16, 2))
    vol = parse_dicom_series(tmp_path)
    assert vol.voxels.shape[0] == 8
    assert vol.spacing_mm[0] == pytest.approx(2.0)


def test_parse_sorts_by_position_not_filename(tmp_path):
    rng = np.random.default_rng(5)
    order = [3, 0, 2, 1]
    for i, z in enumerate(order):
        write_dicom(tmp_path / f"f{i}.dcm", DicomSlice(
            series_uid="1.9", sop_instance_uid=f"1.9.{i}", patient_id="P",
            position=(0.0, 0.0, 2.0 * z),
            pixels=np.full((4, 4), z, dtype=np.uint16)))
    vol = parse_dicom_series(tmp_path)
    assert [int(vol.voxels[i, 0, 0]) for i in range(4)] == [0, 1, 2, 3]


def test_parse_mixed_series_rejected(tmp_path):
    write_series(tmp_path, positions=[0, 2])
    write_dicom(tmp_path / "other.dcm", DicomSlice(
        series_uid="9.9.9", sop_instance_uid="9.9.9.1",
        position=(0, 0, 4.0), pixels=np.zeros((8, 8), dtype=np.uint16)))
    with pytest.raises(MixedSeriesError):
        parse_dicom_series(tmp_path)


def test_parse_duplicate_position_rejected(tmp_path):
    write_series(tmp_path, positions=[0, 2, 2, 4])
    with pytest.raises(DuplicateSliceError):
        parse_dicom_series(tmp_path)


def test_parse_unreadable_file_rejected(tmp_path):
    (tmp_path / "junk.dcm").write_bytes(b"not dicom at all")
    with pytest.raises(FormatError):
        parse_dicom_series(tmp_path)


def test_parse_applies_rescale(tmp_path):
    write_dicom(tmp_path / "a.dcm", DicomSlice(
        series_uid="1.5", sop_instance_uid="1.5.1", position=(0, 0, 0.0),
        rescale_slope=2.0, rescale_intercept=-100.0,
        pixels=np.full((4, 4), 75, dtype=np.uint16)))
    write_dicom(tmp_path / "b.dcm", DicomSlice(
        series_uid="1.5", sop_instance_uid="1.5.2", position=(0, 0, 1.0),
        rescale_slope=2.0, rescale_intercept=-100.0,
        pixels=np.full((4, 4), 100, dtype=np.uint16)))
    vol = parse_dicom_series(tmp_path)
    assert vol.voxels[0, 0, 0] == pytest.approx(50.0)
    assert vol.voxels[1, 0, 0] == pytest.approx(100.0)


def test_parse_drops_reference_slices_with_other_orientation(tmp_path):
    write_series(tmp_path, positions=[0, 2, 4])
    write_dicom(tmp_path / "ref.dcm", DicomSlice(
        series_uid="1.2.3.4", sop_instance_uid="1.2.3.4.99",
        orientation=(0, 1, 0, 0, 0, -1),   # sagittal localizer in an axial series
        position=(0, 0, 99.0), pixels=np.zeros((8, 8), dtype=np.uint16)))
    vol = parse_dicom_series(tmp_path)
    assert vol.voxels.shape[0] == 3


def test_continuity_uniform_gaps_accepted():
    assert validate_continuity(make_volume([0, 2, 4, 6, 8])).ok


def test_continuity_missing_slice_rejected_at_gap_index():
    result = validate_continuity(make_volume([0, 2, 4, 8, 10]))
    assert not result.ok
    assert result.index == 2


def test_continuity_one_percent_boundary():
    # gaps 2.0 and 2.01 both sit within 1% of their median
    result = validate_continuity(make_volume([0.0, 2.0, 4.01]), rel_tol=0.01)
    assert result.ok


def test_continuity_rejects_after_removing_any_interior_slice():
    positions = np.arange(0, 20, 2.0)
    vol = make_volume(positions)
    assert validate_continuity(vol).ok
    for drop in range(1, len(positions) - 1):
        remaining = np.delete(positions, drop)
        assert not validate_continuity(make_volume(remaining)).ok


def test_normalize_slice_range():
    voxels = np.stack([np.linspace(0, 255, 16).reshape(4, 4)]).astype(np.float32)
    voxels = np.repeat(voxels, 2, axis=0)
    vol = make_volume([0, 2], voxels=voxels)
    out = normalize(vol, NormalizationMode("slice_wise"))
    assert out.voxels.min() == 0.0
    assert out.voxels.max() == 1.0


def test_normalize_constant_slice_becomes_zero():
    voxels = np.full((2, 4, 4), 7.0, dtype=np.float32)
    out = normalize(make_volume([0, 2], voxels=voxels), NormalizationMode("slice_wise"))
    assert (out.voxels == 0).all()


def test_normalize_two_slice_hand_computation():
    """slice 0 spans [0,1], slice 1 spans [0,10]: slice-wise maps both to
    [0,1]; volume-wise leaves slice 0 spanning only [0, 0.1]."""
    voxels = np.zeros((2, 2, 2), dtype=np.float32)
    voxels[0] = [[0.0, 0.5], [1.0, 0.25]]
    voxels[1] = [[0.0, 5.0], [10.0, 2.5]]
    vol = make_volume([0, 2], voxels=voxels)
    sw = normalize(vol, NormalizationMode("slice_wise")).voxels
    vw = normalize(vol, NormalizationMode("volume_wise")).voxels
    assert sw[0].max() == 1.0 and sw[1].max() == 1.0
    assert np.allclose(sw[0], [[0.0, 0.5], [1.0, 0.25]])
    assert np.allclose(sw[1], [[0.0, 0.5], [1.0, 0.25]])
    assert vw[0].max() == pytest.approx(0.1)
    assert vw[1].max() == 1.0


def test_normalize_idempotent():
    rng = np.random.default_rng(2)
    vol = make_volume([0, 2, 4], voxels=rng.random((3, 8, 8)).astype(np.float32) * 50)
    for mode in ("slice_wise", "volume_wise"):
        once = normalize(vol, NormalizationMode(mode))
        twice = normalize(once, NormalizationMode(mode))
        assert np.abs(twice.voxels - once.voxels).max() <= 1e-7


def test_export_pixel_rounding(tmp_path):
    voxels = np.zeros((2, 2, 2), dtype=np.float32)
    voxels[0] = [[0.0, 0.5], [1.0, 0.75]]
    voxels[1] = [[0.0, 1.0], [0.25, 0.5]]
    vol = make_volume([0, 2], voxels=voxels)
    manifest = export_slices(vol, NormalizationMode("slice_wise"), tmp_path)
    from PIL import Image

    raw = np.asarray(Image.open(manifest.entries[0].image_path))
    assert raw[0, 1] == 128          # 0.5 -> round-half-away -> 128
    assert raw[1, 0] == 255


def test_export_roundtrip_quantization_bound(tmp_path):
    rng = np.random.default_rng(4)
    voxels = (rng.random((5, 16, 16)) * 900 - 100).astype(np.float32)
    vol = make_volume(np.arange(5) * 2.0, voxels=voxels)
    manifest = export_slices(vol, NormalizationMode("slice_wise"), tmp_path)
    norm = normalize(vol, NormalizationMode("slice_wise")).voxels
    for i, entry in enumerate(manifest.entries):
        back = load_image_png(entry.image_path)
        assert np.abs(back - norm[i]).max() <= 1.0 / 255.0 + 1e-9
    assert len(manifest.entries) == 5
    assert all(e.attrs is None or "Modality" in e.attrs for e in manifest.entries)


def test_full_synthetic_series_to_png_manifest(tmp_path):
    spec = SynthSpec(seed=1, image_size=(16, 16), slices_per_volume=6)
    series_dir = make_dicom_series(spec, tmp_path / "dicom")
    vol = parse_dicom_series(series_dir)
    assert validate_continuity(vol).ok
    ref = reference_dicom_volume(spec)
    slope = (ref.max() - ref.min()) / 65535.0
    assert np.abs(vol.voxels - ref).max() <= slope / 2 + 1e-4
    manifest = export_slices(vol, NormalizationMode("slice_wise"), tmp_path / "png")
    assert len(manifest.entries) == 6
    assert manifest.entries[0].attrs["BodyPartExamined"] == "PHANTOM"
