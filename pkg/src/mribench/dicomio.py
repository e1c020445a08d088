"""Minimal single-frame DICOM Part-10 reader/writer.

Covers exactly what the curation pipeline and the synthetic generator need:
explicit/implicit VR little endian, uncompressed 16-bit grayscale pixel
data, and the handful of attributes used for series assembly. Undefined
length sequences and any other transfer syntax are rejected.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError

EXPLICIT_VR_LE = "1.2.840.10008.1.2.1"
IMPLICIT_VR_LE = "1.2.840.10008.1.2"
MR_IMAGE_STORAGE = "1.2.840.10008.5.1.4.1.1.4"
_IMPLEMENTATION_UID = "1.2.826.0.1.3680043.10.1465.1"

_LONG_VRS = {"OB", "OW", "OF", "SQ", "UT", "UN"}

TAG_SOP_CLASS = (0x0008, 0x0016)
TAG_SOP_INSTANCE = (0x0008, 0x0018)
TAG_MODALITY = (0x0008, 0x0060)
TAG_SERIES_DESCRIPTION = (0x0008, 0x103E)
TAG_PATIENT_ID = (0x0010, 0x0020)
TAG_BODY_PART = (0x0018, 0x0015)
TAG_SLICE_THICKNESS = (0x0018, 0x0050)
TAG_STUDY_UID = (0x0020, 0x000D)
TAG_SERIES_UID = (0x0020, 0x000E)
TAG_INSTANCE_NUMBER = (0x0020, 0x0013)
TAG_POSITION = (0x0020, 0x0032)
TAG_ORIENTATION = (0x0020, 0x0037)
TAG_SAMPLES_PER_PIXEL = (0x0028, 0x0002)
TAG_PHOTOMETRIC = (0x0028, 0x0004)
TAG_ROWS = (0x0028, 0x0010)
TAG_COLS = (0x0028, 0x0011)
TAG_PIXEL_SPACING = (0x0028, 0x0030)
TAG_BITS_ALLOCATED = (0x0028, 0x0100)
TAG_BITS_STORED = (0x0028, 0x0101)
TAG_HIGH_BIT = (0x0028, 0x0102)
TAG_PIXEL_REPRESENTATION = (0x0028, 0x0103)
TAG_RESCALE_INTERCEPT = (0x0028, 0x1052)
TAG_RESCALE_SLOPE = (0x0028, 0x1053)
TAG_PIXEL_DATA = (0x7FE0, 0x0010)

# VR lookup for implicit little endian parsing of the tags we consume.
_TAG_VRS = {
    TAG_SOP_CLASS: "UI", TAG_SOP_INSTANCE: "UI", TAG_MODALITY: "CS",
    TAG_SERIES_DESCRIPTION: "LO", TAG_PATIENT_ID: "LO", TAG_BODY_PART: "CS",
    TAG_SLICE_THICKNESS: "DS", TAG_STUDY_UID: "UI", TAG_SERIES_UID: "UI",
    TAG_INSTANCE_NUMBER: "IS", TAG_POSITION: "DS", TAG_ORIENTATION: "DS",
    TAG_SAMPLES_PER_PIXEL: "US", TAG_PHOTOMETRIC: "CS", TAG_ROWS: "US",
    TAG_COLS: "US", TAG_PIXEL_SPACING: "DS", TAG_BITS_ALLOCATED: "US",
    TAG_BITS_STORED: "US", TAG_HIGH_BIT: "US", TAG_PIXEL_REPRESENTATION: "US",
    TAG_RESCALE_INTERCEPT: "DS", TAG_RESCALE_SLOPE: "DS", TAG_PIXEL_DATA: "OW",
}


@dataclass
class DicomSlice:
    patient_id: str = ""
    study_uid: str = ""
    series_uid: str = ""
    sop_instance_uid: str = ""
    modality: str = ""
    instance_number: int = 0
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    orientation: tuple[float, ...] = (1, 0, 0, 0, 1, 0)
    pixel_spacing: tuple[float, float] = (1.0, 1.0)
    slice_thickness: float = 1.0
    rescale_slope: float = 1.0
    rescale_intercept: float = 0.0
    pixels: np.ndarray = field(default_factory=lambda: np.zeros((1, 1), dtype=np.uint16))
    attrs: dict = field(default_factory=dict)


def _pad_even(value: bytes, pad: bytes) -> bytes:
    return value + pad if len(value) % 2 else value


def _element(tag: tuple[int, int], vr: str, value: bytes) -> bytes:
    head = struct.pack("<HH", tag[0], tag[1]) + vr.encode("ascii")
    if vr in _LONG_VRS:
        return head + b"\x00\x00" + struct.pack("<I", len(value)) + value
    if len(value) > 0xFFFF:
        raise FormatError(f"value too long for short VR {vr}")
    return head + struct.pack("<H", len(value)) + value


def _str_el(tag, vr, text: str) -> bytes:
    pad = b"\x00" if vr == "UI" else b" "
    return _element(tag, vr, _pad_even(text.encode("ascii"), pad))


def _ds(values) -> str:
    return "\\".join(format(float(v), ".10g") for v in np.atleast_1d(values))


def write_dicom(path: str | Path, s: DicomSlice) -> None:
    """Write one single-frame MR slice as explicit VR little endian Part-10."""
    pixels = np.ascontiguousarray(s.pixels, dtype="<u2")
    rows, cols = pixels.shape

    meta = b"".join([
        _element((0x0002, 0x0001), "OB", b"\x00\x01"),
        _str_el((0x0002, 0x0002), "UI", MR_IMAGE_STORAGE),
        _str_el((0x0002, 0x0003), "UI", s.sop_instance_uid),
        _str_el((0x0002, 0x0010), "UI", EXPLICIT_VR_LE),
        _str_el((0x0002, 0x0012), "UI", _IMPLEMENTATION_UID),
    ])
    group_len = _element((0x0002, 0x0000), "UL", struct.pack("<I", len(meta)))

    body = [
        _str_el(TAG_SOP_CLASS, "UI", MR_IMAGE_STORAGE),
        _str_el(TAG_SOP_INSTANCE, "UI", s.sop_instance_uid),
        _str_el(TAG_MODALITY, "CS", s.modality or "MR"),
        _str_el(TAG_PATIENT_ID, "LO", s.patient_id),
        _str_el(TAG_SLICE_THICKNESS, "DS", _ds(s.slice_thickness)),
        _str_el(TAG_STUDY_UID, "UI", s.study_uid),
        _str_el(TAG_SERIES_UID, "UI", s.series_uid),
        _str_el(TAG_INSTANCE_NUMBER, "IS", str(s.instance_number)),
        _str_el(TAG_POSITION, "DS", _ds(s.position)),
        _str_el(TAG_ORIENTATION, "DS", _ds(s.orientation)),
        _element(TAG_SAMPLES_PER_PIXEL, "US", struct.pack("<H", 1)),
        _str_el(TAG_PHOTOMETRIC, "CS", "MONOCHROME2"),
        _element(TAG_ROWS, "US", struct.pack("<H", rows)),
        _element(TAG_COLS, "US", struct.pack("<H", cols)),
        _str_el(TAG_PIXEL_SPACING, "DS", _ds(s.pixel_spacing)),
        _element(TAG_BITS_ALLOCATED, "US", struct.pack("<H", 16)),
        _element(TAG_BITS_STORED, "US", struct.pack("<H", 16)),
        _element(TAG_HIGH_BIT, "US", struct.pack("<H", 15)),
        _element(TAG_PIXEL_REPRESENTATION, "US", struct.pack("<H", 0)),
        _str_el(TAG_RESCALE_INTERCEPT, "DS", _ds(s.rescale_intercept)),
        _str_el(TAG_RESCALE_SLOPE, "DS", _ds(s.rescale_slope)),
    ]
    for tag, text in sorted(s.attrs.items()):
        if tag == "BodyPartExamined":
            body.append(_str_el(TAG_BODY_PART, "CS", text))
        elif tag == "SeriesDescription":
            body.append(_str_el(TAG_SERIES_DESCRIPTION, "LO", text))
    body.sort(key=lambda el: struct.unpack_from("<HH", el, 0))
    body.append(_element(TAG_PIXEL_DATA, "OW", pixels.tobytes(order="C")))

    Path(path).write_bytes(b"\x00" * 128 + b"DICM" + group_len + meta + b"".join(body))


class _Cursor:
    def __init__(self, blob: bytes, pos: int = 0):
        self.blob = blob
        self.pos = pos

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise FormatError("truncated DICOM element")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    @property
    def exhausted(self) -> bool:
        return self.pos >= len(self.blob)


def _read_element(cur: _Cursor, explicit: bool):
    group, elem = struct.unpack("<HH", cur.take(4))
    tag = (group, elem)
    if explicit or group == 0x0002:
        vr = cur.take(2).decode("ascii", errors="replace")
        if vr in _LONG_VRS:
            cur.take(2)
            (length,) = struct.unpack("<I", cur.take(4))
        else:
            (length,) = struct.unpack("<H", cur.take(2))
    else:
        vr = _TAG_VRS.get(tag, "UN")
        (length,) = struct.unpack("<I", cur.take(4))
    if length == 0xFFFFFFFF:
        raise FormatError(f"undefined-length element {tag} not supported")
    return tag, vr, cur.take(length)


def _text(raw: bytes) -> str:
    return raw.decode("ascii", errors="replace").strip(" \x00")


def _floats(raw: bytes) -> tuple[float, ...]:
    return tuple(float(p) for p in _text(raw).split("\\") if p)


def read_dicom(path: str | Path) -> DicomSlice:
    """Parse one Part-10 file; raises FormatError for anything unsupported."""
    blob = Path(path).read_bytes()
    if len(blob) < 132 or blob[128:132] != b"DICM":
        raise FormatError(f"{path}: missing DICM magic")
    cur = _Cursor(blob, 132)

    transfer_syntax = EXPLICIT_VR_LE
    elements: dict[tuple[int, int], tuple[str, bytes]] = {}
    # file meta group: always explicit little endian
    while not cur.exhausted:
        peek = struct.unpack_from("<HH", blob, cur.pos)
        if peek[0] != 0x0002:
            break
        tag, vr, value = _read_element(cur, explicit=True)
        if tag == (0x0002, 0x0010):
            transfer_syntax = _text(value)
    if transfer_syntax not in (EXPLICIT_VR_LE, IMPLICIT_VR_LE):
        raise FormatError(f"{path}: unsupported transfer syntax {transfer_syntax}")
    explicit = transfer_syntax == EXPLICIT_VR_LE
    while not cur.exhausted:
        tag, vr, value = _read_element(cur, explicit)
        elements[tag] = (vr, value)

    if TAG_PIXEL_DATA not in elements:
        raise FormatError(f"{path}: no pixel data")
    get = lambda tag, default=b"": elements.get(tag, ("", default))[1]

    bits = struct.unpack("<H", get(TAG_BITS_ALLOCATED, b"\x10\x00"))[0]
    if bits != 16:
        raise FormatError(f"{path}: only 16-bit pixel data supported, got {bits}")
    rows = struct.unpack("<H", get(TAG_ROWS))[0]
    cols = struct.unpack("<H", get(TAG_COLS))[0]
    raw_pixels = get(TAG_PIXEL_DATA)
    if len(raw_pixels) < rows * cols * 2:
        raise FormatError(f"{path}: pixel payload shorter than Rows*Columns*2")
    pixels = np.frombuffer(raw_pixels[:rows * cols * 2], dtype="<u2").reshape(rows, cols)

    attrs = {}
    if TAG_MODALITY in elements:
        attrs["Modality"] = _text(get(TAG_MODALITY))
    if TAG_BODY_PART in elements:
        attrs["BodyPartExamined"] = _text(get(TAG_BODY_PART))
    if TAG_SERIES_DESCRIPTION in elements:
        attrs["SeriesDescription"] = _text(get(TAG_SERIES_DESCRIPTION))

    position = _floats(get(TAG_POSITION, b"0\\0\\0"))
    orientation = _floats(get(TAG_ORIENTATION, b"1\\0\\0\\0\\1\\0"))
    if len(position) != 3 or len(orientation) != 6:
        raise FormatError(f"{path}: malformed position/orientation")
    spacing = _floats(get(TAG_PIXEL_SPACING, b"1\\1"))

    return DicomSlice(
        patient_id=_text(get(TAG_PATIENT_ID)),
        study_uid=_text(get(TAG_STUDY_UID)),
        series_uid=_text(get(TAG_SERIES_UID)),
        sop_instance_uid=_text(get(TAG_SOP_INSTANCE)),
        modality=attrs.get("Modality", ""),
        instance_number=int(_text(get(TAG_INSTANCE_NUMBER, b"0")) or 0),
        position=position,
        orientation=orientation,
        pixel_spacing=(spacing + (1.0, 1.0))[:2],
        slice_thickness=(_floats(get(TAG_SLICE_THICKNESS, b"1")) + (1.0,))[0],
        rescale_slope=(_floats(get(TAG_RESCALE_SLOPE, b"1")) + (1.0,))[0],
        rescale_intercept=(_floats(get(TAG_RESCALE_INTERCEPT, b"0")) + (0.0,))[0],
        pixels=pixels,
        attrs=attrs,
    )
