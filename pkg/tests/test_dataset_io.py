import numpy as np
import pytest
from PIL import Image

from shortcutforge import (
    CorruptImageError,
    ManifestError,
    MissingInputError,
    UnsupportedFormatError,
    load_image,
    parse_manifest,
    save_image,
    to_float,
    to_uint8,
    write_manifest,
)
from shortcutforge.dataset_io import DatasetManifest, ManifestRecord, encode_pnm


# ---------------------------------------------------------------------------
# quantization


def test_quantization_rounds_half_away_from_zero():
    # 127.5/255 == 0.5 must round up to 128, not banker's-round to 127
    f = np.array([[[0.5, 127.0 / 255.0, 1.0]]])
    assert to_uint8(f).ravel().tolist() == [128, 127, 255]


def test_quantization_clamps():
    f = np.array([[[1.7, -0.3, 0.0]]])
    assert to_uint8(f).ravel().tolist() == [255, 0, 0]


def test_float_uint8_round_trip_exact(rng):
    u8 = rng.integers(0, 256, size=(5, 7, 3)).astype(np.uint8)
    assert np.array_equal(to_uint8(to_float(u8)), u8)


# ---------------------------------------------------------------------------
# PPM / PGM


def test_ppm_decode_known_bytes(tmp_path):
    # 2x2 P6, every pixel (128,128,128)
    p = tmp_path / "gray.ppm"
    p.write_bytes(b"P6\n2 2\n255\n" + b"\x80" * 12)
    img = load_image(p)
    assert img.shape == (2, 2, 3)
    assert np.all(img == 128)


def test_ppm_header_comments_and_whitespace(tmp_path):
    p = tmp_path / "c.ppm"
    p.write_bytes(b"P6 # a comment\n# another\n 2\t1 # w h\n255\n" + b"\x01" * 6)
    img = load_image(p)
    assert img.shape == (1, 2, 3)


def test_ppm_round_trip_byte_identical(tmp_path, rng):
    u8 = rng.integers(0, 256, size=(9, 4, 3)).astype(np.uint8)
    p = tmp_path / "x.ppm"
    save_image(p, u8)
    raw = p.read_bytes()
    save_image(p, load_image(p))
    assert p.read_bytes() == raw
    assert raw == encode_pnm(u8)


def test_pgm_grayscale_round_trip(tmp_path, rng):
    u8 = rng.integers(0, 256, size=(6, 6, 1)).astype(np.uint8)
    p = tmp_path / "x.pgm"
    save_image(p, u8)
    assert p.read_bytes().startswith(b"P5\n")
    assert np.array_equal(load_image(p), u8)


def test_ppm_truncated(tmp_path):
    p = tmp_path / "t.ppm"
    p.write_bytes(b"P6\n2 2\n255\n" + b"\x80" * 5)
    with pytest.raises(CorruptImageError):
        load_image(p)


def test_ppm_16bit_rejected(tmp_path):
    p = tmp_path / "deep.ppm"
    p.write_bytes(b"P6\n1 1\n65535\n" + b"\x00" * 6)
    with pytest.raises(UnsupportedFormatError, match="bit depth"):
        load_image(p)


def test_ppm_nonstandard_maxval_rejected(tmp_path):
    p = tmp_path / "m.ppm"
    p.write_bytes(b"P6\n1 1\n100\n" + b"\x00" * 3)
    with pytest.raises(UnsupportedFormatError):
        load_image(p)


# ---------------------------------------------------------------------------
# PNG


def test_png_round_trip_rgb(tmp_path, rng):
    u8 = rng.integers(0, 256, size=(11, 5, 3)).astype(np.uint8)
    p = tmp_path / "x.png"
    save_image(p, u8)
    assert np.array_equal(load_image(p), u8)


def test_png_round_trip_gray(tmp_path, rng):
    u8 = rng.integers(0, 256, size=(4, 8, 1)).astype(np.uint8)
    p = tmp_path / "g.png"
    save_image(p, u8)
    assert np.array_equal(load_image(p), u8)


def test_png_16bit_rejected(tmp_path):
    p = tmp_path / "deep.png"
    Image.fromarray(np.zeros((3, 3), dtype=np.uint16)).save(p)
    assert p.read_bytes()[24] == 16  # really wrote a 16-bit PNG
    with pytest.raises(UnsupportedFormatError, match="bit depth"):
        load_image(p)


def test_png_palette_rejected(tmp_path):
    p = tmp_path / "pal.png"
    Image.fromarray(np.zeros((3, 3), dtype=np.uint8), mode="L").convert("P").save(p)
    with pytest.raises(UnsupportedFormatError, match="color type"):
        load_image(p)


def test_png_rgba_rejected(tmp_path):
    p = tmp_path / "a.png"
    Image.new("RGBA", (2, 2)).save(p)
    with pytest.raises(UnsupportedFormatError, match="color type"):
        load_image(p)


def test_png_truncated(tmp_path, rng):
    p = tmp_path / "x.png"
    save_image(p, rng.integers(0, 256, size=(16, 16, 3)).astype(np.uint8))
    data = p.read_bytes()
    p.write_bytes(data[: len(data) // 2])  # cut into the IDAT stream
    with pytest.raises(CorruptImageError):
        load_image(p)


def test_unknown_format_rejected(tmp_path):
    p = tmp_path / "x.jpg"
    p.write_bytes(b"\xff\xd8\xff\xe0 not really a jpeg")
    with pytest.raises(UnsupportedFormatError):
        load_image(p)


def test_missing_file():
    with pytest.raises(MissingInputError):
        load_image("/nonexistent/zzz.png")


def test_save_unsupported_suffix(tmp_path):
    with pytest.raises(UnsupportedFormatError):
        save_image(tmp_path / "x.jpeg", np.zeros((2, 2, 3), dtype=np.uint8))


# ---------------------------------------------------------------------------
# manifests


def _write(tmp_path, text):
    p = tmp_path / "m.csv"
    p.write_text(text, encoding="utf-8")
    return p


def test_manifest_happy_path(tmp_path):
    m = parse_manifest(_write(tmp_path, "path,male,young\na.png,1,0\nb.png,0,1\n"))
    assert m.names == ("male", "young")
    assert m.arities == (2, 2)
    assert m.records[0] == ManifestRecord("a.png", (1, 0))


def test_manifest_duplicate_path(tmp_path):
    with pytest.raises(ManifestError, match="duplicate path"):
        parse_manifest(_write(tmp_path, "path,male\na.png,1\na.png,0\n"))


def test_manifest_value_outside_arity(tmp_path):
    with pytest.raises(ManifestError, match="outside arity"):
        parse_manifest(_write(tmp_path, "path,male,young\nb.png,2,0\n"))


def test_manifest_missing_column(tmp_path):
    with pytest.raises(ManifestError, match="columns"):
        parse_manifest(_write(tmp_path, "path,male,young\na.png,1\n"))


def test_manifest_categorical_arity(tmp_path):
    m = parse_manifest(_write(tmp_path, "path,category:20\na.png,19\n"))
    assert m.arities == (20,)
    assert m.codebook().capacity == 20


def test_manifest_non_integer_value(tmp_path):
    with pytest.raises(ManifestError, match="not an integer"):
        parse_manifest(_write(tmp_path, "path,male\na.png,yes\n"))


def test_manifest_requires_header(tmp_path):
    with pytest.raises(ManifestError):
        parse_manifest(_write(tmp_path, "a.png,1\nb.png,0\n"))


def test_manifest_select_columns(tmp_path):
    m = parse_manifest(_write(tmp_path, "path,a,b,c\nx.png,1,0,1\n"))
    sel = m.select(["c", "a"])
    assert sel.names == ("c", "a")
    assert sel.records[0].attributes == (1, 1)
    with pytest.raises(ManifestError, match="unknown attribute"):
        m.select(["nope"])


def test_manifest_write_round_trip(tmp_path):
    m = DatasetManifest(
        names=("kind", "shade"),
        arities=(7, 2),
        records=(ManifestRecord("d/a.png", (6, 1)), ManifestRecord("b.png", (0, 0))),
    )
    p = tmp_path / "out.csv"
    write_manifest(p, m)
    assert parse_manifest(p) == m


def test_manifest_codes(tmp_path, class4_codebook):
    m = parse_manifest(_write(tmp_path, "path,shape:4\na.png,3\nb.png,0\n"))
    assert m.codes(class4_codebook).tolist() == [3, 0]
