"""Image and manifest I/O plus protected-dataset writing.

Supported image formats are deliberately narrow: 8-bit PNG (gray or RGB) and
binary PPM/PGM (P6/P5, maxval 255). Stored pixels are uint8 in [0, 255]; all
perturbation math happens in float64 on [0, 1] and is quantized exactly once
at write time, rounding half away from zero.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .codebook import AttributeCodebook
from .errors import (
    CorruptImageError,
    ManifestError,
    MissingInputError,
    UnsupportedFormatError,
)
from .validation import check_image_f, check_image_u8

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


# ---------------------------------------------------------------------------
# quantization


def to_float(img_u8: np.ndarray) -> np.ndarray:
    """uint8 storage -> float64 working scale [0, 1]."""
    return check_image_u8(img_u8).astype(np.float64) / 255.0


def to_uint8(img_f: np.ndarray) -> np.ndarray:
    """float working scale -> uint8, rounding half away from zero.

    Values are clamped to [0, 1] first, so the rounding reduces to
    floor(255 x + 0.5). This is the single quantization point of the pipeline.
    """
    img_f = np.clip(np.asarray(img_f, dtype=np.float64), 0.0, 1.0)
    return np.floor(img_f * 255.0 + 0.5).astype(np.uint8)


# ---------------------------------------------------------------------------
# image codecs


def load_image(path) -> np.ndarray:
    """Decode an 8-bit PNG or binary PPM/PGM into a (H, W, C) uint8 array."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError:
        raise MissingInputError(f"no such image: {path}") from None
    if data[:8] == _PNG_MAGIC:
        return _decode_png(data, path)
    if data[:2] in (b"P5", b"P6"):
        return _decode_pnm(data, path)
    raise UnsupportedFormatError(f"{path}: not an 8-bit PNG or binary PPM/PGM")


def save_image(path, img_u8: np.ndarray) -> None:
    """Encode a (H, W, C) uint8 array; format chosen by file suffix."""
    img_u8 = check_image_u8(img_u8)
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix == ".png":
        mode = "L" if img_u8.shape[2] == 1 else "RGB"
        arr = img_u8[:, :, 0] if mode == "L" else img_u8
        Image.fromarray(arr, mode=mode).save(path, format="PNG")
    elif suffix in (".ppm", ".pgm", ".pnm"):
        path.write_bytes(encode_pnm(img_u8))
    else:
        raise UnsupportedFormatError(f"unsupported output suffix {suffix!r}")


def encode_pnm(img_u8: np.ndarray) -> bytes:
    """Canonical binary PPM (P6) / PGM (P5) bytes, maxval 255."""
    img_u8 = check_image_u8(img_u8)
    h, w, c = img_u8.shape
    magic = b"P5" if c == 1 else b"P6"
    return magic + f"\n{w} {h}\n255\n".encode("ascii") + img_u8.tobytes()


def _decode_png(data: bytes, path) -> np.ndarray:
    # IHDR is mandatory and first: bit depth at offset 24, color type at 25.
    if len(data) < 26:
        raise CorruptImageError(f"{path}: truncated PNG header")
    bit_depth, color_type = data[24], data[25]
    if bit_depth != 8:
        raise UnsupportedFormatError(f"{path}: unsupported bit depth {bit_depth}")
    if color_type not in (0, 2):
        raise UnsupportedFormatError(
            f"{path}: unsupported PNG color type {color_type} (need gray or RGB)"
        )
    try:
        with Image.open(io.BytesIO(data)) as im:
            im.load()
            arr = np.asarray(im)
    except (OSError, UnidentifiedImageError, SyntaxError) as exc:
        raise CorruptImageError(f"{path}: undecodable PNG ({exc})") from exc
    if arr.dtype != np.uint8:
        raise UnsupportedFormatError(f"{path}: unsupported bit depth")
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return np.ascontiguousarray(arr)


def _decode_pnm(data: bytes, path) -> np.ndarray:
    channels = 1 if data[:2] == b"P5" else 3
    pos = 2
    fields = []
    while len(fields) < 3:
        # skip whitespace and '#' comment lines between header tokens
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise CorruptImageError(f"{path}: truncated PNM header")
        token = data[start:pos]
        if not token.isdigit():
            raise CorruptImageError(f"{path}: bad PNM header token {token!r}")
        fields.append(int(token))
    w, h, maxval = fields
    if maxval > 255:
        raise UnsupportedFormatError(f"{path}: unsupported bit depth (maxval {maxval})")
    if maxval != 255:
        raise UnsupportedFormatError(f"{path}: unsupported maxval {maxval} (need 255)")
    pos += 1  # single whitespace byte after maxval
    raw = data[pos : pos + h * w * channels]
    if len(raw) < h * w * channels:
        raise CorruptImageError(f"{path}: truncated PNM pixel data")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, channels).copy()


# ---------------------------------------------------------------------------
# manifests


@dataclass(frozen=True)
class ManifestRecord:
    path: str
    attributes: tuple


@dataclass(frozen=True)
class DatasetManifest:
    """Relative file paths plus per-file attribute values.

    The header row declares the schema: `path,attr1,...,attrk` where each
    attribute cell is either a bare name (binary, arity 2) or `name:arity`
    for categorical attributes, e.g. `category:20`.
    """

    names: tuple
    arities: tuple
    records: tuple

    def codebook(self, seed: int = 0) -> AttributeCodebook:
        return AttributeCodebook(names=self.names, arities=self.arities, seed=seed)

    def select(self, names) -> "DatasetManifest":
        """Restrict to a subset of attribute columns, in the given order."""
        names = tuple(names)
        for n in names:
            if n not in self.names:
                raise ManifestError(f"unknown attribute column {n!r}")
        idx = [self.names.index(n) for n in names]
        records = tuple(
            ManifestRecord(r.path, tuple(r.attributes[i] for i in idx))
            for r in self.records
        )
        return DatasetManifest(
            names=names,
            arities=tuple(self.arities[i] for i in idx),
            records=records,
        )

    def codes(self, codebook: AttributeCodebook) -> np.ndarray:
        return np.array([codebook.encode(r.attributes) for r in self.records])

    def __len__(self):
        return len(self.records)


def parse_manifest(path) -> DatasetManifest:
    """Parse a manifest CSV (UTF-8, comma separated, mandatory header)."""
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ManifestError(f"{path}: empty manifest")
    header = rows[0]
    if not header or header[0].strip() != "path":
        raise ManifestError(f"{path}: first header column must be 'path'")
    if len(header) < 2:
        raise ManifestError(f"{path}: manifest declares no attribute columns")
    names, arities = [], []
    for cell in header[1:]:
        cell = cell.strip()
        name, _, arity = cell.partition(":")
        if not name:
            raise ManifestError(f"{path}: empty attribute name in header")
        try:
            arities.append(int(arity) if arity else 2)
        except ValueError:
            raise ManifestError(f"{path}: bad arity in header cell {cell!r}") from None
        names.append(name)

    records = []
    seen = set()
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise ManifestError(
                f"{path}:{lineno}: expected {len(header)} columns, got {len(row)}"
            )
        rel = row[0].strip()
        if not rel:
            raise ManifestError(f"{path}:{lineno}: empty path")
        if rel in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate path {rel!r}")
        seen.add(rel)
        values = []
        for name, arity, cell in zip(names, arities, row[1:]):
            try:
                value = int(cell)
            except ValueError:
                raise ManifestError(
                    f"{path}:{lineno}: attribute {name!r} value {cell!r} is not an integer"
                ) from None
            if not 0 <= value < arity:
                raise ManifestError(
                    f"{path}:{lineno}: attribute {name!r} value {value} outside arity {arity}"
                )
            values.append(value)
        records.append(ManifestRecord(rel, tuple(values)))
    if not records:
        raise ManifestError(f"{path}: manifest has no records")
    return DatasetManifest(names=tuple(names), arities=tuple(arities), records=tuple(records))


def write_manifest(path, manifest: DatasetManifest) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["path"] + [
            n if a == 2 else f"{n}:{a}" for n, a in zip(manifest.names, manifest.arities)
        ]
        writer.writerow(header)
        for rec in manifest.records:
            writer.writerow([rec.path, *rec.attributes])


# ---------------------------------------------------------------------------
# protected dataset writing


@dataclass
class ProtectionEntry:
    path: str
    code: int
    linf: float
    l2: float
    psnr_db: float

    def to_json_dict(self) -> dict:
        return {
            "path": self.path,
            "code": self.code,
            "linf": self.linf,
            "l2": self.l2,
            # JSON has no +inf; null means "identical images"
            "psnr_db": None if math.isinf(self.psnr_db) else self.psnr_db,
        }


@dataclass
class ProtectionReport:
    codebook: dict
    shortcut: dict
    entries: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    version: int = 1

    @property
    def max_linf(self) -> float:
        return max((e.linf for e in self.entries), default=0.0)

    @property
    def min_psnr(self) -> float:
        return min((e.psnr_db for e in self.entries), default=float("inf"))

    def header_dict(self) -> dict:
        head = {
            "type": "header",
            "version": self.version,
            "codebook": self.codebook,
            "shortcut": self.shortcut,
        }
        if self.skipped:
            head["skipped"] = list(self.skipped)
        return head

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(self.header_dict(), sort_keys=True) + "\n")
            for entry in self.entries:
                fh.write(json.dumps(entry.to_json_dict(), sort_keys=True) + "\n")

    @classmethod
    def read(cls, path) -> "ProtectionReport":
        with open(path, encoding="utf-8") as fh:
            lines = [json.loads(line) for line in fh if line.strip()]
        if not lines or lines[0].get("type") != "header":
            raise ManifestError(f"{path}: missing report header line")
        head = lines[0]
        entries = [
            ProtectionEntry(
                path=obj["path"],
                code=obj["code"],
                linf=obj["linf"],
                l2=obj["l2"],
                psnr_db=float("inf") if obj["psnr_db"] is None else obj["psnr_db"],
            )
            for obj in lines[1:]
        ]
        return cls(
            codebook=head["codebook"],
            shortcut=head["shortcut"],
            entries=entries,
            skipped=head.get("skipped", []),
            version=head.get("version", 1),
        )


def write_protected_dataset(
    manifest: DatasetManifest,
    in_dir,
    out_dir,
    spec,
    codebook: AttributeCodebook,
    strict: bool = False,
    keep_partial: bool = False,
    threads: int | None = None,
) -> ProtectionReport:
    """Write a perturbed mirror of `in_dir` under `out_dir`.

    Every manifest image is perturbed according to its attribute-derived code,
    quantized once, and saved under the same relative path. Input files are
    never touched. In strict mode a perceptibility budget violation aborts the
    run; unless keep_partial is set, files written so far are removed again so
    failure leaves no partial output.
    """
    from .perceptibility import check_budget, compare
    from .shortcuts import protect_image

    in_dir, out_dir = Path(in_dir), Path(out_dir)
    missing = [r.path for r in manifest.records if not (in_dir / r.path).is_file()]
    if missing and not keep_partial:
        raise MissingInputError(
            f"{len(missing)} manifest file(s) missing under {in_dir}; first: {missing[0]}"
        )
    todo = [r for r in manifest.records if r.path not in set(missing)]

    def process(record: ManifestRecord):
        original = to_float(load_image(in_dir / record.path))
        code = codebook.encode(record.attributes)
        protected = protect_image(original, record.attributes, codebook, spec)
        stored = to_uint8(protected)
        report = compare(original, to_float(stored))
        budget = check_budget(report, spec, code=code, capacity=codebook.capacity)
        return record, code, report, budget, stored

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(process, todo))
    else:
        results = [process(r) for r in todo]

    report = ProtectionReport(
        codebook=codebook.to_json_dict(),
        shortcut=spec.to_json_dict(),
        skipped=list(missing),
    )
    written = []
    try:
        for record, code, percept, budget, stored in results:
            if strict and not budget.passed:
                from .errors import BudgetExceededError

                raise BudgetExceededError(
                    f"{record.path}: {'; '.join(budget.reasons)}"
                )
            target = out_dir / record.path
            target.parent.mkdir(parents=True, exist_ok=True)
            save_image(target, stored)
            written.append(target)
            report.entries.append(
                ProtectionEntry(
                    path=record.path,
                    code=code,
                    linf=percept.linf,
                    l2=percept.l2,
                    psnr_db=percept.psnr_db,
                )
            )
    except Exception:
        if not keep_partial:
            for target in written:
                try:
                    os.unlink(target)
                except OSError:
                    pass
        raise
    return report
