"""Reproducible construction and bit-exact persistence of desk-scale generators.

Two architectures are supported: a plain MLP and a small DCGAN-shaped stack
(dense projection to a 4x4x32 volume, then two stride-2 transposed
convolutions up to 16x16x1), both ending in tanh. Weights are drawn from a
generator seeded only by the spec, so the same spec always yields bitwise
identical networks.

Weight files ("GENNET v1") are a single ASCII header line carrying JSON
metadata, a raw little-endian float64 payload in layer order, and a trailing
64-bit FNV-1a checksum of the payload.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .net import Activation, Affine, ConvTranspose2d, GeneratorNetwork
from .streams import mask64

__all__ = [
    "ARCHITECTURES",
    "ConfigError",
    "GeneratorSpec",
    "WeightFormatError",
    "build",
    "fingerprint",
    "fnv1a64",
    "load",
    "save",
]

ARCH_MLP = "mlp"
ARCH_DCGAN_SMALL = "dcgan_small"
ARCHITECTURES = (ARCH_MLP, ARCH_DCGAN_SMALL)

# dcgan_small geometry: dense to 4x4x32, two x2 upsamplings down to one channel
_DCGAN_BASE = (32, 4, 4)
_DCGAN_KERNEL = 4
_DCGAN_STRIDE = 2
_DCGAN_OUT_SHAPE = (1, 16, 16)
_DCGAN_KERNEL_STD = 0.02

_MAGIC = b"GENNET"
_VERSION = b"v1"


class ConfigError(ValueError):
    """A generator spec is internally inconsistent."""


class WeightFormatError(ValueError):
    """A weight file is malformed; the message names the offending field."""


@dataclass(frozen=True)
class GeneratorSpec:
    """Everything needed to rebuild a generator from scratch."""

    architecture: str
    latent_dim: int = 100
    hidden_sizes: tuple[int, ...] = ()
    output_shape: tuple[int, int, int] = field(default=_DCGAN_OUT_SHAPE)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        object.__setattr__(self, "output_shape", tuple(int(s) for s in self.output_shape))
        object.__setattr__(self, "latent_dim", int(self.latent_dim))
        object.__setattr__(self, "seed", int(self.seed))
        if self.architecture not in ARCHITECTURES:
            raise ConfigError(f"unknown architecture {self.architecture!r}")
        if self.latent_dim < 1:
            raise ConfigError("latent_dim must be >= 1")
        if len(self.output_shape) != 3 or any(s < 1 for s in self.output_shape):
            raise ConfigError(f"bad output_shape {self.output_shape!r}")
        if any(h < 1 for h in self.hidden_sizes):
            raise ConfigError("hidden sizes must be positive")
        if self.output_size < self.latent_dim:
            raise ConfigError(
                f"output size {self.output_size} is smaller than latent_dim "
                f"{self.latent_dim}; inversion must be overdetermined"
            )
        if self.architecture == ARCH_DCGAN_SMALL:
            if self.output_shape != _DCGAN_OUT_SHAPE:
                raise ConfigError(
                    f"dcgan_small output_shape is fixed at {_DCGAN_OUT_SHAPE}"
                )
            if self.hidden_sizes:
                raise ConfigError("hidden_sizes only apply to the mlp architecture")

    @property
    def output_size(self) -> int:
        c, h, w = self.output_shape
        return c * h * w


def _layer_plan(spec: GeneratorSpec) -> list[tuple]:
    """Ordered layer descriptions; shared by build() and load()."""
    if spec.architecture == ARCH_MLP:
        plan = []
        size = spec.latent_dim
        for h in spec.hidden_sizes:
            plan.append(("affine", h, size))
            plan.append(("act", "relu"))
            size = h
        plan.append(("affine", spec.output_size, size))
        plan.append(("act", "tanh"))
        return plan
    c0, h0, w0 = _DCGAN_BASE
    plan = [
        ("affine", c0 * h0 * w0, spec.latent_dim),
        ("act", "relu"),
        ("convt", c0, c0 // 2, _DCGAN_KERNEL, _DCGAN_STRIDE, (c0, h0, w0)),
        ("act", "relu"),
        ("convt", c0 // 2, 1, _DCGAN_KERNEL, _DCGAN_STRIDE,
         (c0 // 2, h0 * _DCGAN_STRIDE, w0 * _DCGAN_STRIDE)),
        ("act", "tanh"),
    ]
    return plan


def build(spec: GeneratorSpec) -> GeneratorNetwork:
    """Construct the network for a spec with seeded random weights.

    Affine weights are Normal(0, 1/sqrt(fan_in)), transposed-conv kernels
    Normal(0, 0.02), all biases zero, drawn in layer order from a single
    stream seeded by spec.seed.
    """
    rng = np.random.default_rng(mask64(spec.seed))
    layers = []
    for entry in _layer_plan(spec):
        if entry[0] == "affine":
            _, out, fan_in = entry
            weight = rng.standard_normal((out, fan_in)) / math.sqrt(fan_in)
            layers.append(Affine(weight, np.zeros(out)))
        elif entry[0] == "convt":
            _, c_in, c_out, k, stride, in_shape = entry
            kernel = rng.standard_normal((c_in, c_out, k, k)) * _DCGAN_KERNEL_STD
            layers.append(ConvTranspose2d(kernel, np.zeros(c_out), stride, in_shape))
        else:
            layers.append(Activation(entry[1]))
    return GeneratorNetwork(layers, spec.latent_dim, spec.output_shape, spec.seed, spec=spec)


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash of a byte string."""
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def _payload(net: GeneratorNetwork) -> bytes:
    parts = []
    for layer in net.layers:
        for arr in layer.weight_arrays():
            parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(parts)


def save(net: GeneratorNetwork, path) -> None:
    """Write a GENNET v1 weight file; round-trips bitwise through load()."""
    if net.spec is None:
        raise ConfigError("cannot persist a network that was not built from a spec")
    meta = {
        "architecture": net.spec.architecture,
        "latent_dim": net.spec.latent_dim,
        "hidden_sizes": list(net.spec.hidden_sizes),
        "output_shape": list(net.spec.output_shape),
        "seed": net.spec.seed,
    }
    header = b"%s %s %s\n" % (
        _MAGIC,
        _VERSION,
        json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("ascii"),
    )
    payload = _payload(net)
    footer = struct.pack("<Q", fnv1a64(payload))
    with open(path, "wb") as fh:
        fh.write(header + payload + footer)


def _expected_payload_doubles(spec: GeneratorSpec) -> int:
    count = 0
    for entry in _layer_plan(spec):
        if entry[0] == "affine":
            _, out, fan_in = entry
            count += out * fan_in + out
        elif entry[0] == "convt":
            _, c_in, c_out, k, _, _ = entry
            count += c_in * c_out * k * k + c_out
    return count


def load(path) -> GeneratorNetwork:
    """Read a GENNET v1 weight file back into a network, verifying the checksum."""
    with open(path, "rb") as fh:
        blob = fh.read()
    newline = blob.find(b"\n")
    if newline < 0:
        raise WeightFormatError("header: missing terminating newline")
    head = blob[:newline].split(b" ", 2)
    if len(head) != 3 or head[0] != _MAGIC:
        raise WeightFormatError(f"magic: expected {_MAGIC.decode()}")
    if head[1] != _VERSION:
        raise WeightFormatError(
            f"version: expected {_VERSION.decode()}, found {head[1].decode(errors='replace')!r}"
        )
    try:
        meta = json.loads(head[2].decode("ascii"))
        spec = GeneratorSpec(
            architecture=meta["architecture"],
            latent_dim=meta["latent_dim"],
            hidden_sizes=tuple(meta["hidden_sizes"]),
            output_shape=tuple(meta["output_shape"]),
            seed=meta["seed"],
        )
    except (KeyError, TypeError, ValueError, UnicodeDecodeError) as exc:
        raise WeightFormatError(f"metadata: {exc}") from exc

    body = blob[newline + 1 :]
    if len(body) < 8:
        raise WeightFormatError("checksum: file truncated before checksum")
    payload, footer = body[:-8], body[-8:]
    expected = _expected_payload_doubles(spec)
    if len(payload) != expected * 8:
        raise WeightFormatError(
            f"payload: header dimensions need {expected * 8} bytes, found {len(payload)}"
        )
    (stored,) = struct.unpack("<Q", footer)
    actual = fnv1a64(payload)
    if stored != actual:
        raise WeightFormatError(
            f"checksum: stored {stored:#018x} does not match payload {actual:#018x}"
        )

    doubles = np.frombuffer(payload, dtype="<f8")
    layers = []
    offset = 0

    def take(shape):
        nonlocal offset
        n = int(np.prod(shape))
        arr = doubles[offset : offset + n].reshape(shape).copy()
        offset += n
        return arr

    for entry in _layer_plan(spec):
        if entry[0] == "affine":
            _, out, fan_in = entry
            layers.append(Affine(take((out, fan_in)), take((out,))))
        elif entry[0] == "convt":
            _, c_in, c_out, k, stride, in_shape = entry
            layers.append(ConvTranspose2d(take((c_in, c_out, k, k)), take((c_out,)), stride, in_shape))
        else:
            layers.append(Activation(entry[1]))
    return GeneratorNetwork(layers, spec.latent_dim, spec.output_shape, spec.seed, spec=spec)


def fingerprint(net: GeneratorNetwork) -> dict:
    """Cheap identity check for a network: total weight sum and payload hash."""
    payload = _payload(net)
    total = 0.0
    for layer in net.layers:
        for arr in layer.weight_arrays():
            total += float(arr.sum())
    return {"weight_sum": total, "fnv1a64": f"{fnv1a64(payload):#018x}"}
