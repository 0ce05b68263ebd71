"""Grayscale image files (binary PGM and PNG), normalization, atomic writes."""

import io
import os
import re
import tempfile
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import DomainError, ParseError

__all__ = [
    "ImageFile",
    "NormalizationRecord",
    "atomic_write",
    "read_pgm",
    "write_pgm",
    "load_image",
    "save_image",
    "normalize",
    "denormalize",
    "LUMA",
]

# ITU-R BT.601 weights used when a colour file is reduced to grayscale
LUMA = (0.299, 0.587, 0.114)


@dataclass
class ImageFile:
    pixels: np.ndarray          # (h, w, 1) float64
    bit_depth: int = 8
    path: str = None
    maxval: int = None
    from_color: bool = False

    def __post_init__(self):
        if self.maxval is None:
            self.maxval = 2**self.bit_depth - 1


def atomic_write(path, data):
    """Write ``data`` to a temp file beside ``path`` and rename it into place."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def read_pgm(data, path=None):
    """Parse a binary (P5) PGM from bytes."""
    if data[:2] != b"P5":
        raise ParseError("not a binary PGM (expected magic P5)", 0)
    pos = 2
    fields, starts = [], []
    for name in ("width", "height", "maxval"):
        m = _TOKEN.match(data, pos)
        if m is None:
            raise ParseError(f"missing {name} in PGM header", pos)
        try:
            fields.append(int(m.group(1)))
        except ValueError:
            raise ParseError(f"bad {name} {m.group(1)!r} in PGM header", m.start(1)) from None
        starts.append(m.start(1))
        pos = m.end(1)
    w, h, maxval = fields
    if w < 1 or h < 1:
        raise ParseError(f"invalid PGM size {w}x{h}", starts[0] if w < 1 else starts[1])
    if not 1 <= maxval <= 65535:
        raise ParseError(f"PGM maxval {maxval} outside 1..65535", starts[2])
    if pos >= len(data) or not data[pos:pos + 1].isspace():
        raise ParseError("expected a single whitespace byte after maxval", pos)
    pos += 1
    nbytes = 1 if maxval < 256 else 2
    expected = w * h * nbytes
    actual = len(data) - pos
    if actual < expected:
        raise ParseError(f"truncated PGM payload: expected {expected} bytes, got {actual}", pos)
    dtype = np.uint8 if nbytes == 1 else np.dtype(">u2")
    pix = np.frombuffer(data, dtype=dtype, count=w * h, offset=pos).reshape(h, w)
    return ImageFile(pix.astype(np.float64)[..., None], 8 * nbytes, path, maxval)


def write_pgm(pixels, maxval=255):
    pix = _quantize(pixels, maxval)
    header = b"P5\n%d %d\n%d\n" % (pix.shape[1], pix.shape[0], maxval)
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    return header + pix.astype(dtype).tobytes()


def _quantize(pixels, maxval):
    pix = np.asarray(pixels, dtype=np.float64)
    if pix.ndim == 3 and pix.shape[2] == 1:
        pix = pix[..., 0]
    if pix.ndim != 2:
        raise DomainError(f"expected a grayscale image, got shape {pix.shape}")
    if not np.all(np.isfinite(pix)):
        raise DomainError("image contains non-finite values")
    return np.clip(np.rint(pix), 0, maxval)


def _read_png(data, path):
    try:
        img = Image.open(io.BytesIO(data))
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ParseError(f"cannot decode image: {exc}", 0) from exc
    mode = img.mode
    if mode in ("L", "1"):
        arr = np.asarray(img.convert("L"), dtype=np.float64)
        return ImageFile(arr[..., None], 8, path)
    if mode.startswith("I;16") or mode == "I":
        arr = np.asarray(img, dtype=np.float64)
        return ImageFile(arr[..., None], 16, path)
    if mode in ("RGB", "RGBA", "P", "LA"):
        rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
        gray = rgb @ np.array(LUMA)
        return ImageFile(gray[..., None], 8, path, from_color=True)
    raise ParseError(f"unsupported image mode {mode}", 0)


def load_image(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:2] == b"P5":
        return read_pgm(data, str(path))
    return _read_png(data, str(path))


def save_image(path, pixels, bit_depth=8, maxval=None):
    """Write ``pixels`` as PGM (``.pgm``) or PNG (anything else), rounding and clipping."""
    maxval = maxval or 2**bit_depth - 1
    if str(path).lower().endswith(".pgm"):
        atomic_write(path, write_pgm(pixels, maxval))
        return
    pix = _quantize(pixels, maxval)
    arr = pix.astype(np.uint8 if maxval < 256 else np.uint16)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    atomic_write(path, buf.getvalue())


@dataclass(frozen=True)
class NormalizationRecord:
    mean: float
    std: float


def normalize(image):
    """Zero-mean, unit-(population)-std copy of ``image`` and its record."""
    x = np.asarray(image, dtype=np.float64)
    mean = float(x.mean())
    std = float(x.std())
    if not std > 0:
        raise DomainError("cannot normalize a constant image")
    return (x - mean) / std, NormalizationRecord(mean, std)


def denormalize(image, record):
    return np.asarray(image, dtype=np.float64) * record.std + record.mean
