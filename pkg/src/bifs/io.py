"""
Image and array files.

Supported formats, chosen by extension:

``.pgm``
    Portable graymap, ASCII (P2) or binary (P5), 8 or 16 bit.
``.png``
    Grayscale PNG, 8 or 16 bit (via Pillow).
``.raw`` / ``.f32``
    A one-line ASCII header followed by little-endian float32 data::

        BIFSRAW count=<n> width=<w> height=<h> [key=value ...]\\n

    The same container holds single images, sample stacks and the two-plane
    empirical prior; extra ``key=value`` pairs carry metadata.
"""

import os
import re

import numpy as np

from .exceptions import DimensionError, FormatError

__all__ = [
    "load_image",
    "save_image",
    "load_image_stack",
    "rescale",
    "write_raw",
    "read_raw",
    "write_sample_set",
    "read_sample_set",
]

_RAW_MAGIC = "BIFSRAW"
_RAW_EXT = (".raw", ".f32")
_IMAGE_SUFFIXES = (".pgm", ".png") + tuple(_RAW_EXT)


def rescale(image, lo=0.0, hi=1.0):
    """Map ``[min, max]`` of ``image`` linearly onto ``[lo, hi]``.

    A constant image has no range to stretch and maps to the midpoint.
    """
    image = np.asarray(image, dtype=np.float64)
    mn, mx = float(image.min()), float(image.max())
    if mx == mn:
        return np.full(image.shape, 0.5 * (lo + hi))
    return lo + (image - mn) * ((hi - lo) / (mx - mn))


def _format_of(path):
    ext = os.path.splitext(str(path))[1].lower()
    if ext == ".pgm":
        return "pgm"
    if ext == ".png":
        return "png"
    if ext in _RAW_EXT:
        return "raw"
    raise FormatError(f"unknown image format for {path!r} (use .pgm, .png, .raw or .f32)")


# -- raw float32 container ---------------------------------------------------------


def write_raw(path, stack, **meta):
    """Write a ``(count, height, width)`` (or 2-D) array with a text header."""
    stack = np.asarray(stack, dtype=np.float64)
    if stack.ndim == 2:
        stack = stack[None]
    if stack.ndim != 3:
        raise DimensionError(f"expected a 2-D image or 3-D stack, got shape {stack.shape}")
    n, h, w = stack.shape
    fields = [_RAW_MAGIC, f"count={n}", f"width={w}", f"height={h}"]
    for key, value in meta.items():
        text = str(value)
        if not re.fullmatch(r"[A-Za-z0-9_.+\-]+", key) or re.search(r"\s", text) or not text:
            raise FormatError(f"metadata {key}={text!r} must be a single token")
        fields.append(f"{key}={text}")
    with open(path, "wb") as fh:
        fh.write((" ".join(fields) + "\n").encode("ascii"))
        fh.write(stack.astype("<f4").tobytes())


def read_raw(path):
    """Read a raw container; returns ``(stack, meta)`` with ``stack`` of shape ``(count, h, w)``."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace").split()
        body = fh.read()
    if not header or header[0] != _RAW_MAGIC:
        raise FormatError(f"{path}: missing {_RAW_MAGIC} header")
    meta = {}
    for token in header[1:]:
        key, sep, value = token.partition("=")
        if not sep:
            raise FormatError(f"{path}: malformed header field {token!r}")
        meta[key] = value
    try:
        n, w, h = int(meta.pop("count")), int(meta.pop("width")), int(meta.pop("height"))
    except (KeyError, ValueError):
        raise FormatError(f"{path}: header needs integer count, width and height") from None
    if len(body) != 4 * n * w * h:
        raise FormatError(f"{path}: expected {4 * n * w * h} data bytes, found {len(body)}")
    stack = np.frombuffer(body, dtype="<f4").reshape(n, h, w).astype(np.float64)
    return stack, meta


def write_sample_set(path, images):
    write_raw(path, images)


def read_sample_set(path):
    return read_raw(path)[0]


# -- PGM ---------------------------------------------------------------------------


def _pgm_tokens(data):
    # header tokens with '#' comments stripped; returns tokens and offset past the 4th
    tokens, i = [], 0
    while len(tokens) < 4:
        while i < len(data) and data[i : i + 1].isspace():
            i += 1
        if data[i : i + 1] == b"#":
            while i < len(data) and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < len(data) and not data[i : i + 1].isspace():
            i += 1
        if start == i:
            raise FormatError("truncated PGM header")
        tokens.append(data[start:i])
    return tokens, i + 1


def _load_pgm(path):
    with open(path, "rb") as fh:
        data = fh.read()
    try:
        tokens, offset = _pgm_tokens(data)
        magic = tokens[0]
        w, h, maxval = (int(t) for t in tokens[1:4])
    except (ValueError, IndexError):
        raise FormatError(f"{path}: cannot parse PGM header") from None
    if magic not in (b"P2", b"P5") or not 0 < maxval < 65536:
        raise FormatError(f"{path}: unsupported PGM variant {magic!r} maxval {maxval}")
    if magic == b"P2":
        values = np.array(data[offset:].split()[: w * h], dtype=np.float64)
    else:
        dtype = ">u2" if maxval > 255 else "u1"
        values = np.frombuffer(data[offset:], dtype=dtype, count=w * h).astype(np.float64)
    if values.size != w * h:
        raise FormatError(f"{path}: expected {w * h} pixels, found {values.size}")
    return values.reshape(h, w)


def _save_pgm(path, q, maxval, binary=True):
    h, w = q.shape
    with open(path, "wb") as fh:
        if binary:
            fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
            fh.write(q.astype(">u2" if maxval > 255 else "u1").tobytes())
        else:
            fh.write(f"P2\n{w} {h}\n{maxval}\n".encode("ascii"))
            for row in q:
                fh.write((" ".join(str(int(v)) for v in row) + "\n").encode("ascii"))


# -- PNG ---------------------------------------------------------------------------


def _load_png(path):
    from PIL import Image

    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L", "I", "L"):
            return np.asarray(im, dtype=np.float64)
        return np.asarray(im.convert("L"), dtype=np.float64)


def _save_png(path, q, bits):
    from PIL import Image

    if bits == 8:
        Image.fromarray(q.astype(np.uint8), mode="L").save(path)
    else:
        Image.fromarray(q.astype(np.uint16)).save(path)


# -- public ------------------------------------------------------------------------


def load_image(path):
    """Read a 2-D grayscale image as float64."""
    fmt = _format_of(path)
    if fmt == "pgm":
        return _load_pgm(path)
    if fmt == "png":
        return _load_png(path)
    stack, _ = read_raw(path)
    if stack.shape[0] != 1:
        raise FormatError(f"{path}: holds {stack.shape[0]} images; use read_raw for stacks")
    return stack[0]


def save_image(image, path, rescale_range=True, bits=8, ascii_pgm=False):
    """Write ``image``.

    Raw files keep float values as they are. For PGM and PNG, ``rescale_range``
    stretches ``[min, max]`` onto ``[0, 2**bits - 1]``; otherwise values are
    rounded and clipped to that range.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise DimensionError(f"expected a 2-D image, got shape {image.shape}")
    fmt = _format_of(path)
    if fmt == "raw":
        write_raw(path, image)
        return
    if bits not in (8, 16):
        raise FormatError("bits must be 8 or 16")
    top = 2**bits - 1
    scaled = rescale(image, 0.0, top) if rescale_range else image
    q = np.clip(np.rint(scaled), 0, top)
    if fmt == "pgm":
        _save_pgm(path, q, top, binary=not ascii_pgm)
    else:
        _save_png(path, q, bits)


def load_image_stack(path):
    """A ``(count, n_y, n_x)`` stack from a raw container or a directory of images (sorted by name)."""
    if os.path.isdir(path):
        names = sorted(f for f in os.listdir(path) if os.path.splitext(f)[1].lower() in _IMAGE_SUFFIXES)
        if not names:
            raise FormatError(f"{path}: no images found")
        imgs = [load_image(os.path.join(path, f)) for f in names]
        if len({im.shape for im in imgs}) > 1:
            raise DimensionError(f"{path}: images differ in size")
        return np.stack(imgs)
    return read_raw(path)[0]
