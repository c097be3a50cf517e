"""Reading and writing images and latent vectors.

Two interchange formats:

* binary PGM (P5, 8 bit) for single channel images, mapping pixel values
  from [-1, 1] onto bytes 0..255,
* JSON tensors {"shape": [c, h, w], "data": [flat floats]} for anything
  that must survive a round trip exactly.

Latent vectors travel as JSON {"z": [floats]}.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Union

import numpy as np

from .net import ImageTensor

PathLike = Union[str, Path]


class ImageFormatError(ValueError):
    """A file is not a valid image or latent in a supported format."""


def pixel_bytes(data: np.ndarray) -> np.ndarray:
    """Map pixels in [-1, 1] to uint8, saturating anything outside."""
    scaled = np.rint((np.asarray(data, dtype=np.float64) + 1.0) * 127.5)
    return np.clip(scaled, 0.0, 255.0).astype(np.uint8)


def write_pgm(path: PathLike, image: ImageTensor) -> None:
    """Write a single channel image as binary 8 bit PGM."""
    c, h, w = image.shape
    if c != 1:
        raise ImageFormatError(f"pgm holds one channel, image has {c}")
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    Path(path).write_bytes(header + pixel_bytes(image.data).tobytes())


def _pgm_tokens(blob: bytes, n: int) -> tuple[list[bytes], int]:
    # header tokens are whitespace separated; '#' starts a comment to EOL
    tokens = []
    i = 0
    while len(tokens) < n:
        if i >= len(blob):
            raise ImageFormatError("truncated pgm header")
        ch = blob[i : i + 1]
        if ch == b"#":
            while i < len(blob) and blob[i : i + 1] not in (b"\n", b"\r"):
                i += 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < len(blob) and not blob[j : j + 1].isspace():
                j += 1
            tokens.append(blob[i:j])
            i = j
    # exactly one whitespace byte separates the header from the raster
    return tokens, i + 1


def read_pgm(path: PathLike) -> ImageTensor:
    """Read a binary PGM back into a single channel image in [-1, 1]."""
    blob = Path(path).read_bytes()
    if not blob.startswith(b"P5"):
        raise ImageFormatError("not a binary pgm (missing P5 magic)")
    try:
        (magic, ws, hs, maxs), start = _pgm_tokens(blob, 4)
        w, h, maxval = int(ws), int(hs), int(maxs)
    except (ValueError, ImageFormatError) as exc:
        raise ImageFormatError(f"bad pgm header: {exc}") from None
    if magic != b"P5":
        raise ImageFormatError("not a binary pgm (missing P5 magic)")
    if w <= 0 or h <= 0:
        raise ImageFormatError(f"bad pgm dimensions {w}x{h}")
    if maxval != 255:
        raise ImageFormatError(f"only 8 bit pgm supported, maxval={maxval}")
    raster = blob[start : start + w * h]
    if len(raster) < w * h:
        raise ImageFormatError(
            f"pgm raster holds {len(raster)} bytes, expected {w * h}"
        )
    values = np.frombuffer(raster, dtype=np.uint8).astype(np.float64)
    return ImageTensor((1, h, w), values / 127.5 - 1.0)


def write_json_tensor(path: PathLike, image: ImageTensor) -> None:
    doc = {"shape": list(image.shape), "data": image.data.tolist()}
    Path(path).write_text(json.dumps(doc), encoding="ascii")


def read_json_tensor(path: PathLike) -> ImageTensor:
    try:
        doc = json.loads(Path(path).read_text(encoding="ascii"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ImageFormatError(f"bad json tensor: {exc}") from None
    if not isinstance(doc, dict) or set(doc) != {"shape", "data"}:
        raise ImageFormatError("json tensor needs exactly 'shape' and 'data'")
    shape = doc["shape"]
    if (
        not isinstance(shape, list)
        or len(shape) != 3
        or not all(isinstance(v, int) and v > 0 for v in shape)
    ):
        raise ImageFormatError(f"bad tensor shape {shape!r}")
    data = doc["data"]
    if not isinstance(data, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in data
    ):
        raise ImageFormatError("tensor data must be a flat list of numbers")
    c, h, w = shape
    if len(data) != c * h * w:
        raise ImageFormatError(
            f"tensor data holds {len(data)} values, shape wants {c * h * w}"
        )
    values = np.array(data, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ImageFormatError("tensor data must be finite")
    return ImageTensor((c, h, w), values)


def read_image(path: PathLike) -> ImageTensor:
    """Dispatch on suffix: .pgm binary, anything else JSON tensor."""
    if Path(path).suffix.lower() == ".pgm":
        return read_pgm(path)
    return read_json_tensor(path)


def write_image(path: PathLike, image: ImageTensor) -> None:
    if Path(path).suffix.lower() == ".pgm":
        write_pgm(path, image)
    else:
        write_json_tensor(path, image)


def write_latent(path: PathLike, z: np.ndarray) -> None:
    doc = {"z": np.asarray(z, dtype=np.float64).tolist()}
    Path(path).write_text(json.dumps(doc), encoding="ascii")


def read_latent(path: PathLike) -> np.ndarray:
    try:
        doc = json.loads(Path(path).read_text(encoding="ascii"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise ImageFormatError(f"bad latent file: {exc}") from None
    if not isinstance(doc, dict) or "z" not in doc:
        raise ImageFormatError("latent file needs a 'z' list")
    z = doc["z"]
    if not isinstance(z, list) or not z or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in z
    ):
        raise ImageFormatError("latent 'z' must be a non-empty list of numbers")
    values = np.array(z, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ImageFormatError("latent values must be finite")
    return values
