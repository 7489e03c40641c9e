"""Restricted DICOM reader/writer for uncompressed CT slices.

Supports the two little-endian transfer syntaxes (explicit and implicit
VR) and stops after Pixel Data. Sequences are skipped whole, never
descended into; compressed or big-endian pixel data is rejected.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass

import numpy as np

from .errors import DataError

log = logging.getLogger(__name__)

Tag = tuple[int, int]

# Tags the pipeline cares about.
TRANSFER_SYNTAX_UID: Tag = (0x0002, 0x0010)
MODALITY: Tag = (0x0008, 0x0060)
PATIENT_ID: Tag = (0x0010, 0x0020)
SLICE_THICKNESS: Tag = (0x0018, 0x0050)
INSTANCE_NUMBER: Tag = (0x0020, 0x0013)
ROWS: Tag = (0x0028, 0x0010)
COLUMNS: Tag = (0x0028, 0x0011)
BITS_ALLOCATED: Tag = (0x0028, 0x0100)
BITS_STORED: Tag = (0x0028, 0x0101)
PIXEL_REPRESENTATION: Tag = (0x0028, 0x0103)
RESCALE_INTERCEPT: Tag = (0x0028, 0x1052)
RESCALE_SLOPE: Tag = (0x0028, 0x1053)
PIXEL_DATA: Tag = (0x7FE0, 0x0010)

ITEM: Tag = (0xFFFE, 0xE000)
ITEM_DELIM: Tag = (0xFFFE, 0xE00D)
SEQ_DELIM: Tag = (0xFFFE, 0xE0DD)

IMPLICIT_VR_LE = "1.2.840.10008.1.2"
EXPLICIT_VR_LE = "1.2.840.10008.1.2.1"

UNDEFINED_LENGTH = 0xFFFFFFFF

# VRs that use the long (reserved + 32-bit) length form in explicit files.
_LONG_FORM_VRS = {"OB", "OW", "OF", "OD", "OL", "SQ", "UC", "UR", "UN", "UT"}
_KNOWN_VRS = _LONG_FORM_VRS | {
    "AE", "AS", "AT", "CS", "DA", "DS", "DT", "FL", "FD", "IS", "LO", "LT",
    "PN", "SH", "SL", "SS", "ST", "TM", "UI", "UL", "US",
}

# Default VR per tag, used when writing and when decoding implicit files.
TAG_VR = {
    TRANSFER_SYNTAX_UID: "UI",
    MODALITY: "CS",
    PATIENT_ID: "LO",
    SLICE_THICKNESS: "DS",
    INSTANCE_NUMBER: "IS",
    ROWS: "US",
    COLUMNS: "US",
    BITS_ALLOCATED: "US",
    BITS_STORED: "US",
    PIXEL_REPRESENTATION: "US",
    RESCALE_INTERCEPT: "DS",
    RESCALE_SLOPE: "DS",
    PIXEL_DATA: "OW",
}


class TruncatedFile(DataError):
    """Input ends before the dataset (through Pixel Data) is complete."""


class MissingMagic(DataError):
    """Neither a DICM preamble nor a plausible raw element stream."""


class UnsupportedTransferSyntax(DataError):
    """Anything other than the two uncompressed little-endian syntaxes."""


class MissingRequiredTag(DataError):
    def __init__(self, tag: Tag):
        super().__init__(f"missing required tag ({tag[0]:04X},{tag[1]:04X})")
        self.tag = tag


class PixelDataSizeMismatch(DataError):
    """Pixel Data byte count disagrees with rows*cols*bits_allocated/8."""


class EmptySeries(DataError):
    """No slices retained after parsing and thickness filtering."""


@dataclass(frozen=True)
class DicomElement:
    """One parsed data element: tag, optional VR, raw value bytes."""

    tag: Tag
    vr: str | None
    value: bytes
    # Sequences written with undefined length keep the 0xFFFFFFFF marker so
    # re-serialization reproduces the original bytes.
    undefined_length: bool = False


@dataclass
class CtSlice:
    """A single CT slice: stored pixel matrix plus the metadata used downstream."""

    patient_id: str
    instance_number: int
    rows: int
    cols: int
    bits_allocated: int
    bits_stored: int
    pixel_representation: int
    rescale_slope: float
    rescale_intercept: float
    slice_thickness_mm: float
    pixels: np.ndarray
    source_path: str = ""  # provenance for logging/caching; "" for in-memory slices

    def __post_init__(self):
        if self.rows <= 0 or self.cols <= 0:
            raise ValueError("rows and cols must be positive")
        if self.pixels.shape != (self.rows, self.cols):
            raise ValueError("pixel matrix shape does not match rows x cols")
        if not (self.bits_stored <= self.bits_allocated <= 16):
            raise ValueError("need bits_stored <= bits_allocated <= 16")
        if self.slice_thickness_mm <= 0:
            raise ValueError("slice thickness must be positive")


def _u16(buf: bytes, pos: int) -> int:
    return int.from_bytes(buf[pos:pos + 2], "little")


def _u32(buf: bytes, pos: int) -> int:
    return int.from_bytes(buf[pos:pos + 4], "little")


def _require(buf: bytes, pos: int, n: int) -> None:
    if pos + n > len(buf):
        raise TruncatedFile(
            f"need {n} bytes at offset {pos}, only {len(buf) - pos} remain")


def _looks_explicit(buf: bytes, pos: int) -> bool:
    """Heuristic for streams with no file meta: a known VR code at pos+4."""
    if pos + 6 > len(buf):
        return False
    try:
        vr = buf[pos + 4:pos + 6].decode("ascii")
    except UnicodeDecodeError:
        return False
    return vr in _KNOWN_VRS


def _read_element_header(buf: bytes, pos: int, explicit: bool):
    """Return (tag, vr, length, value_offset)."""
    _require(buf, pos, 8)
    tag = (_u16(buf, pos), _u16(buf, pos + 2))
    if tag in (ITEM, ITEM_DELIM, SEQ_DELIM):
        # Delimitation items never carry a VR regardless of syntax.
        return tag, None, _u32(buf, pos + 4), pos + 8
    if explicit:
        vr = buf[pos + 4:pos + 6].decode("ascii", errors="replace")
        if vr not in _KNOWN_VRS:
            raise UnsupportedTransferSyntax(
                f"unknown VR {vr!r} at offset {pos} (big-endian or corrupt stream?)")
        if vr in _LONG_FORM_VRS:
            _require(buf, pos, 12)
            return tag, vr, _u32(buf, pos + 8), pos + 12
        return tag, vr, _u16(buf, pos + 6), pos + 8
    return tag, None, _u32(buf, pos + 4), pos + 8


def _skip_undefined_sequence(buf: bytes, pos: int, explicit: bool) -> int:
    """Advance past an undefined-length SQ body; return offset after its delimiter."""
    while True:
        _require(buf, pos, 8)
        tag = (_u16(buf, pos), _u16(buf, pos + 2))
        length = _u32(buf, pos + 4)
        pos += 8
        if tag == SEQ_DELIM:
            return pos
        if tag != ITEM:
            raise TruncatedFile(
                f"malformed sequence item tag ({tag[0]:04X},{tag[1]:04X}) at {pos - 8}")
        if length == UNDEFINED_LENGTH:
            pos = _skip_undefined_item(buf, pos, explicit)
        else:
            _require(buf, pos, length)
            pos += length


def _skip_undefined_item(buf: bytes, pos: int, explicit: bool) -> int:
    """Advance past an undefined-length item: walk elements to the item delimiter."""
    while True:
        tag, _vr, length, vpos = _read_element_header(buf, pos, explicit)
        if tag == ITEM_DELIM:
            return vpos
        if length == UNDEFINED_LENGTH:
            pos = _skip_undefined_sequence(buf, vpos, explicit)
        else:
            _require(buf, vpos, length)
            pos = vpos + length


def parse_dicom(data: bytes) -> dict[Tag, DicomElement]:
    """Parse a DICOM byte stream into an ordered tag -> element map.

    Accepts the standard 128-byte preamble + "DICM" form, or a stream that
    starts directly with a group 0002/0008 element. Parsing stops after
    Pixel Data; a stream that ends before Pixel Data is truncated.
    """
    pos = 0
    if len(data) >= 132 and data[128:132] == b"DICM":
        pos = 132
    else:
        if len(data) >= 4 and _u16(data, 0) in (0x0002, 0x0008):
            pos = 0  # headerless stream
        elif len(data) < 132:
            raise TruncatedFile("input shorter than preamble + magic")
        else:
            raise MissingMagic("no DICM magic and no plausible element stream")

    explicit = _looks_explicit(data, pos)
    elements: dict[Tag, DicomElement] = {}
    syntax_pending = True

    while True:
        if pos >= len(data):
            raise TruncatedFile("stream ended before Pixel Data")
        # File meta (group 0002) is always explicit VR; the transfer syntax
        # it declares governs everything after it.
        _require(data, pos, 4)
        group = _u16(data, pos)
        elem_explicit = True if group == 0x0002 else explicit
        tag, vr, length, vpos = _read_element_header(data, pos, elem_explicit)

        if tag == PIXEL_DATA and length == UNDEFINED_LENGTH:
            raise UnsupportedTransferSyntax(
                "encapsulated (compressed) pixel data is not supported")

        if length == UNDEFINED_LENGTH:
            if vr is not None and vr != "SQ":
                raise UnsupportedTransferSyntax(
                    f"undefined length on non-sequence VR {vr}")
            end = _skip_undefined_sequence(data, vpos, elem_explicit)
            # Value holds the sequence body only; the 8-byte delimiter is
            # re-emitted by encode_elements.
            elements[tag] = DicomElement(tag, vr or "SQ", data[vpos:end - 8],
                                         undefined_length=True)
            pos = end
            continue

        _require(data, vpos, length)
        value = data[vpos:vpos + length]
        elements[tag] = DicomElement(tag, vr, value)
        pos = vpos + length

        if tag == TRANSFER_SYNTAX_UID and syntax_pending:
            uid = value.rstrip(b"\x00 ").decode("ascii", errors="replace")
            if uid == IMPLICIT_VR_LE:
                explicit = False
            elif uid == EXPLICIT_VR_LE:
                explicit = True
            else:
                raise UnsupportedTransferSyntax(f"transfer syntax {uid!r}")
            syntax_pending = False

        if tag == PIXEL_DATA:
            break

    return elements


def encode_elements(elements: dict[Tag, DicomElement] | list[DicomElement],
                    explicit: bool, preamble: bool = True) -> bytes:
    """Serialize elements back to bytes (inverse of parse_dicom).

    Elements are written in the order given; group 0002 is always explicit.
    """
    if isinstance(elements, dict):
        elements = list(elements.values())
    out = bytearray()
    if preamble:
        out += b"\x00" * 128 + b"DICM"
    for el in elements:
        group, elem = el.tag
        el_explicit = True if group == 0x0002 else explicit
        out += group.to_bytes(2, "little") + elem.to_bytes(2, "little")
        length = UNDEFINED_LENGTH if el.undefined_length else len(el.value)
        if el_explicit:
            vr = el.vr or TAG_VR.get(el.tag, "UN")
            out += vr.encode("ascii")
            if vr in _LONG_FORM_VRS:
                out += b"\x00\x00" + length.to_bytes(4, "little")
            else:
                if length > 0xFFFF:
                    raise ValueError(f"value too long for short-form VR {vr}")
                out += length.to_bytes(2, "little")
        else:
            out += length.to_bytes(4, "little")
        out += el.value
        if el.undefined_length:
            out += (SEQ_DELIM[0].to_bytes(2, "little")
                    + SEQ_DELIM[1].to_bytes(2, "little") + b"\x00" * 4)
    return bytes(out)


def _decode_string(value: bytes) -> str:
    return value.rstrip(b"\x00 ").decode("ascii", errors="replace").strip()


def _decode_int(el: DicomElement) -> int:
    vr = el.vr or TAG_VR.get(el.tag)
    if vr in ("US", "SS"):
        return int.from_bytes(el.value[:2], "little", signed=(vr == "SS"))
    if vr in ("UL", "SL"):
        return int.from_bytes(el.value[:4], "little", signed=(vr == "SL"))
    return int(_decode_string(el.value))


def _decode_float(el: DicomElement) -> float:
    return float(_decode_string(el.value))


_REQUIRED_TAGS = (ROWS, COLUMNS, BITS_ALLOCATED, BITS_STORED,
                  PIXEL_REPRESENTATION, RESCALE_INTERCEPT, RESCALE_SLOPE,
                  PIXEL_DATA)


def extract_ct_slice(elements: dict[Tag, DicomElement],
                     source_path: str = "") -> CtSlice:
    """Build a CtSlice from a parsed element map.

    Patient ID, instance number and slice thickness are optional and default
    to "UNKNOWN", 0 and 1.0 so minimal synthetic fixtures stay small.
    """
    for tag in _REQUIRED_TAGS:
        if tag not in elements:
            raise MissingRequiredTag(tag)

    rows = _decode_int(elements[ROWS])
    cols = _decode_int(elements[COLUMNS])
    bits_alloc = _decode_int(elements[BITS_ALLOCATED])
    bits_stored = _decode_int(elements[BITS_STORED])
    pixel_rep = _decode_int(elements[PIXEL_REPRESENTATION])
    slope = _decode_float(elements[RESCALE_SLOPE])
    intercept = _decode_float(elements[RESCALE_INTERCEPT])

    patient = (_decode_string(elements[PATIENT_ID].value)
               if PATIENT_ID in elements else "UNKNOWN")
    instance = (_decode_int(elements[INSTANCE_NUMBER])
                if INSTANCE_NUMBER in elements else 0)
    thickness = (_decode_float(elements[SLICE_THICKNESS])
                 if SLICE_THICKNESS in elements else 1.0)

    if bits_alloc not in (8, 16):
        raise PixelDataSizeMismatch(f"bits_allocated {bits_alloc} not supported")
    raw = elements[PIXEL_DATA].value
    expected = rows * cols * bits_alloc // 8
    if len(raw) != expected:
        raise PixelDataSizeMismatch(
            f"pixel data holds {len(raw)} bytes, expected {expected}")

    if bits_alloc == 16:
        dtype = "<i2" if pixel_rep == 1 else "<u2"
    else:
        dtype = "i1" if pixel_rep == 1 else "u1"
    pixels = np.frombuffer(raw, dtype=dtype).reshape(rows, cols).astype(np.int32)

    return CtSlice(
        patient_id=patient,
        instance_number=instance,
        rows=rows,
        cols=cols,
        bits_allocated=bits_alloc,
        bits_stored=bits_stored,
        pixel_representation=pixel_rep,
        rescale_slope=slope,
        rescale_intercept=intercept,
        slice_thickness_mm=thickness,
        pixels=pixels,
        source_path=source_path,
    )


def list_series_files(root: str, allowlist_path: str | None = None) -> list[str]:
    """Deterministic list of candidate files under root.

    With an allowlist (one relative path per line) only those files are
    returned, in allowlist order; otherwise a sorted recursive walk.
    """
    if allowlist_path:
        with open(allowlist_path, "r", encoding="utf-8") as fh:
            rels = [line.strip() for line in fh if line.strip()]
        return [os.path.join(root, rel) for rel in rels]
    found = []
    for dirpath, dirnames, filenames in os.walk(root):
        dirnames.sort()
        for name in sorted(filenames):
            found.append(os.path.join(dirpath, name))
    return found


def scan_series(root: str, thickness_filter_mm: float,
                allowlist_path: str | None = None) -> dict[str, list[CtSlice]]:
    """Parse every file under root and group retained slices by patient.

    Slices whose thickness differs from the filter by >= 0.01 mm are
    dropped; unparseable files are skipped with a warning. Output order is
    deterministic: patients lexicographic, slices by instance number.
    """
    groups: dict[str, list[CtSlice]] = {}
    for path in list_series_files(root, allowlist_path):
        try:
            with open(path, "rb") as fh:
                data = fh.read()
            ct = extract_ct_slice(parse_dicom(data), source_path=path)
        except (DataError, OSError, ValueError) as exc:
            log.warning("skipping %s: %s", path, exc)
            continue
        if abs(ct.slice_thickness_mm - thickness_filter_mm) >= 0.01:
            continue
        groups.setdefault(ct.patient_id, []).append(ct)

    if not groups:
        raise EmptySeries(
            f"no slices with thickness {thickness_filter_mm} mm under {root}")

    ordered: dict[str, list[CtSlice]] = {}
    for patient in sorted(groups):
        ordered[patient] = sorted(groups[patient],
                                  key=lambda s: (s.instance_number, s.source_path))
    return ordered


def _string_value(text: str, pad: bytes = b" ") -> bytes:
    raw = text.encode("ascii")
    return raw + pad if len(raw) % 2 else raw


def build_ct_elements(pixels: np.ndarray,
                      patient_id: str = "UNKNOWN",
                      instance_number: int = 0,
                      slice_thickness_mm: float = 1.0,
                      rescale_slope: float = 1.0,
                      rescale_intercept: float = -1024.0,
                      pixel_representation: int = 1,
                      bits_allocated: int = 16,
                      transfer_syntax: str = EXPLICIT_VR_LE,
                      include_optional: bool = True) -> dict[Tag, DicomElement]:
    """Assemble the element map for a synthetic CT slice file."""
    rows, cols = pixels.shape
    if bits_allocated == 16:
        dtype = "<i2" if pixel_representation == 1 else "<u2"
    else:
        dtype = "i1" if pixel_representation == 1 else "u1"
    raw = np.ascontiguousarray(pixels.astype(dtype)).tobytes()
    if len(raw) % 2:
        raw += b"\x00"

    def el(tag: Tag, value: bytes) -> DicomElement:
        return DicomElement(tag, TAG_VR[tag], value)

    def us(n: int) -> bytes:
        return int(n).to_bytes(2, "little")

    elements: dict[Tag, DicomElement] = {}
    elements[TRANSFER_SYNTAX_UID] = el(
        TRANSFER_SYNTAX_UID, _string_value(transfer_syntax, pad=b"\x00"))
    elements[MODALITY] = el(MODALITY, _string_value("CT"))
    if include_optional:
        elements[PATIENT_ID] = el(PATIENT_ID, _string_value(patient_id))
        elements[SLICE_THICKNESS] = el(
            SLICE_THICKNESS, _string_value(f"{slice_thickness_mm:g}"))
        elements[INSTANCE_NUMBER] = el(
            INSTANCE_NUMBER, _string_value(str(instance_number)))
    elements[ROWS] = el(ROWS, us(rows))
    elements[COLUMNS] = el(COLUMNS, us(cols))
    elements[BITS_ALLOCATED] = el(BITS_ALLOCATED, us(bits_allocated))
    elements[BITS_STORED] = el(BITS_STORED, us(bits_allocated))
    elements[PIXEL_REPRESENTATION] = el(PIXEL_REPRESENTATION, us(pixel_representation))
    elements[RESCALE_INTERCEPT] = el(
        RESCALE_INTERCEPT, _string_value(f"{rescale_intercept:g}"))
    elements[RESCALE_SLOPE] = el(RESCALE_SLOPE, _string_value(f"{rescale_slope:g}"))
    elements[PIXEL_DATA] = el(PIXEL_DATA, raw)
    return elements


def write_ct_file(path: str, pixels: np.ndarray, **kwargs) -> bytes:
    """Encode a synthetic slice to disk; returns the written bytes."""
    syntax = kwargs.get("transfer_syntax", EXPLICIT_VR_LE)
    elements = build_ct_elements(pixels, **kwargs)
    data = encode_elements(elements, explicit=(syntax == EXPLICIT_VR_LE))
    with open(path, "wb") as fh:
        fh.write(data)
    return data
