"""Dataset ingestion, template serialization, and manifest parsing.

Template file layout (version 1, all integers little-endian):

    offset  size  field
    0       4     magic "PCC1"
    4       2     format version (u16) == 1
    6       4     width (u32)
    10      4     height (u32)
    14      8     mask keep fraction (f64)
    22      1     flags (u8): bit 0 = degenerate mask
    23      32    bank fingerprint (raw SHA-256 bytes)
    55      2+s   subject id: u16 byte length + UTF-8 bytes
    ..      2+a   sample id: u16 byte length + UTF-8 bytes
    ..      w*h   code payload, one byte per pixel, values 0..5, row-major
    ..      h*ceil(w/8)  mask payload, row-major, each row bit-packed
                  MSB-first and padded to a whole byte

Every parse is strict: wrong magic or version, truncation, trailing bytes,
or out-of-range code values all fail instead of yielding a partial
template.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .coding import CompetitiveCode, PalmLineMask, Template
from .errors import (
    DataError,
    FormatError,
    InvalidParameterError,
    ManifestError,
    UnsupportedImageError,
)

TEMPLATE_MAGIC = b"PCC1"
TEMPLATE_VERSION = 1
_FLAG_DEGENERATE = 0x01
_HEADER = struct.Struct("<4sHIIdB32s")


# ---------------------------------------------------------------------------
# images


def load_image(path) -> np.ndarray:
    """Read an 8-bit grayscale PNG or PGM as a (H, W) uint8 array.

    Color or paletted inputs are rejected outright; silent conversion would
    make codes depend on an undocumented luma transform.
    """
    path = Path(path)
    try:
        with Image.open(path) as img:
            if img.mode != "L":
                raise UnsupportedImageError(
                    f"{path}: expected 8-bit grayscale, got mode {img.mode!r}"
                )
            arr = np.asarray(img, dtype=np.uint8)
    except FileNotFoundError:
        raise
    except UnidentifiedImageError as exc:
        raise FormatError(f"{path}: not a readable image file") from exc
    if arr.ndim != 2:
        raise UnsupportedImageError(f"{path}: expected a single-channel image")
    return arr


def save_image(path, image: np.ndarray) -> None:
    """Write a uint8 grayscale image (format chosen by the file suffix)."""
    arr = np.asarray(image)
    if arr.ndim != 2 or arr.dtype != np.uint8:
        raise InvalidParameterError("expected a 2-D uint8 image")
    Image.fromarray(arr, mode="L").save(Path(path))


# ---------------------------------------------------------------------------
# templates


def serialize_template(template: Template) -> bytes:
    code = template.code.codes
    mask = template.mask.mask
    h, w = code.shape
    try:
        fingerprint = bytes.fromhex(template.bank_fingerprint)
    except ValueError as exc:
        raise InvalidParameterError("bank fingerprint must be hex") from exc
    if len(fingerprint) != 32:
        raise InvalidParameterError("bank fingerprint must encode 32 bytes")
    flags = _FLAG_DEGENERATE if template.mask.degenerate else 0
    parts = [_HEADER.pack(TEMPLATE_MAGIC, TEMPLATE_VERSION, w, h,
                          template.mask.keep_fraction, flags, fingerprint)]
    for text in (template.subject_id, template.sample_id):
        raw = text.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise InvalidParameterError("id longer than 65535 bytes")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
    parts.append(code.astype(np.uint8).tobytes())
    parts.append(np.packbits(mask, axis=1).tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes, origin: str):
        self.data = data
        self.pos = 0
        self.origin = origin

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"{self.origin}: truncated payload")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def done(self) -> None:
        if self.pos != len(self.data):
            raise FormatError(
                f"{self.origin}: {len(self.data) - self.pos} trailing bytes"
            )


def parse_template(data: bytes, origin: str = "<bytes>") -> Template:
    r = _Reader(data, origin)
    magic, version, w, h, keep_fraction, flags, fingerprint = _HEADER.unpack(
        r.take(_HEADER.size)
    )
    if magic != TEMPLATE_MAGIC:
        raise FormatError(f"{origin}: bad magic {magic!r}")
    if version != TEMPLATE_VERSION:
        raise FormatError(f"{origin}: unknown template version {version}")
    if w < 1 or h < 1:
        raise FormatError(f"{origin}: invalid dimensions {w}x{h}")
    ids = []
    for label in ("subject", "sample"):
        (length,) = struct.unpack("<H", r.take(2))
        try:
            ids.append(r.take(length).decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise FormatError(f"{origin}: {label} id is not UTF-8") from exc
    code = np.frombuffer(r.take(w * h), dtype=np.uint8).reshape(h, w)
    if code.max(initial=0) > 5:
        raise FormatError(f"{origin}: code byte above 5")
    row_bytes = (w + 7) // 8
    packed = np.frombuffer(r.take(h * row_bytes), dtype=np.uint8)
    r.done()
    mask = np.unpackbits(packed.reshape(h, row_bytes), axis=1, count=w).astype(bool)
    return Template(
        code=CompetitiveCode(codes=code.copy()),
        mask=PalmLineMask(mask=mask, keep_fraction=keep_fraction,
                          degenerate=bool(flags & _FLAG_DEGENERATE)),
        subject_id=ids[0],
        sample_id=ids[1],
        bank_fingerprint=fingerprint.hex(),
    )


def save_template(template: Template, path) -> None:
    Path(path).write_bytes(serialize_template(template))


def load_template(path) -> Template:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    return parse_template(data, origin=str(path))


# ---------------------------------------------------------------------------
# manifests


MANIFEST_FIELDS = ("subject_id", "sample_id", "image_path", "session", "excluded")
_TRUE_WORDS = {"1", "true", "yes", "y"}
_FALSE_WORDS = {"0", "false", "no", "n", ""}


@dataclass(frozen=True)
class ManifestEntry:
    subject_id: str
    sample_id: str
    image_path: str
    session: str
    excluded: bool
    line_no: int


@dataclass(frozen=True)
class Manifest:
    entries: tuple[ManifestEntry, ...]
    base_dir: Path

    def active_entries(self) -> tuple[ManifestEntry, ...]:
        return tuple(e for e in self.entries if not e.excluded)

    def resolve_path(self, entry: ManifestEntry) -> Path:
        p = Path(entry.image_path)
        return p if p.is_absolute() else self.base_dir / p


def parse_manifest(path) -> Manifest:
    """Load and validate a dataset manifest CSV.

    Rows flagged excluded are retained but marked, duplicate
    (subject_id, sample_id) keys are an error naming both lines, and image
    paths are resolved lazily relative to the manifest's directory.
    """
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    if not rows:
        raise ManifestError(f"{path}: empty manifest")
    header = tuple(cell.strip() for cell in rows[0])
    if header != MANIFEST_FIELDS:
        raise ManifestError(
            f"{path}: header must be {','.join(MANIFEST_FIELDS)}, got {','.join(header)}"
        )
    entries = []
    seen: dict[tuple[str, str], int] = {}
    for idx, row in enumerate(rows[1:], start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(MANIFEST_FIELDS):
            raise ManifestError(f"{path}: line {idx}: expected {len(MANIFEST_FIELDS)} fields")
        subject, sample, image_path, session, excluded_raw = (c.strip() for c in row)
        if not subject or not sample or not image_path:
            raise ManifestError(f"{path}: line {idx}: empty required field")
        word = excluded_raw.lower()
        if word in _TRUE_WORDS:
            excluded = True
        elif word in _FALSE_WORDS:
            excluded = False
        else:
            raise ManifestError(f"{path}: line {idx}: bad excluded flag {excluded_raw!r}")
        key = (subject, sample)
        if key in seen:
            raise ManifestError(
                f"{path}: duplicate entry {key} at lines {seen[key]} and {idx}"
            )
        seen[key] = idx
        entries.append(ManifestEntry(subject, sample, image_path, session,
                                     excluded, idx))
    if not entries:
        raise ManifestError(f"{path}: manifest lists no samples")
    return Manifest(entries=tuple(entries), base_dir=path.parent)


def write_manifest(path, entries) -> None:
    """Write manifest rows; accepts ManifestEntry or (subject, sample, path, session, excluded)."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_FIELDS)
        for e in entries:
            if isinstance(e, ManifestEntry):
                row = (e.subject_id, e.sample_id, e.image_path, e.session,
                       "1" if e.excluded else "0")
            else:
                subject, sample, image_path, session, excluded = e
                row = (subject, sample, image_path, session,
                       "1" if excluded else "0")
            writer.writerow(row)
