"""Forward evaluation and exact input gradients for small fixed-weight generators.

Weights are constants here: the only derivative ever needed is the gradient of
a scalar image-space loss with respect to the network *input*, so the reverse
pass is a single chain of layer-local rules rather than a general autodiff
graph. All arithmetic is 64-bit; forward and backward are pure functions of
their arguments, so identical inputs give bitwise-identical outputs within a
process.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Affine",
    "Activation",
    "ConvTranspose2d",
    "GeneratorNetwork",
    "ImageTensor",
    "InvalidInputError",
    "Tape",
    "TapeError",
    "backward_input",
    "finite_diff_grad",
    "forward",
    "l2_loss",
]


class InvalidInputError(ValueError):
    """An input violates a layer or network contract (shape or finiteness)."""


class TapeError(RuntimeError):
    """A tape was replayed against a network it was not recorded on."""


@dataclass(frozen=True, eq=False)
class ImageTensor:
    """Flat image vector plus its (channels, height, width) shape."""

    shape: tuple[int, int, int]
    data: np.ndarray

    def __post_init__(self):
        shape = tuple(int(s) for s in self.shape)
        data = np.asarray(self.data, dtype=np.float64).reshape(-1)
        if len(shape) != 3 or any(s < 1 for s in shape):
            raise InvalidInputError(f"bad image shape {shape!r}")
        if data.size != shape[0] * shape[1] * shape[2]:
            raise InvalidInputError(
                f"image data has {data.size} values, shape {shape} needs "
                f"{shape[0] * shape[1] * shape[2]}"
            )
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "data", data)

    @property
    def size(self) -> int:
        return self.data.size

    def pixels(self) -> np.ndarray:
        """The data viewed as a (channels, height, width) array."""
        return self.data.reshape(self.shape)


def _as_finite_f64(arr, name) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float64)
    if not np.isfinite(out).all():
        raise InvalidInputError(f"{name} contains non-finite values")
    return out


class Affine:
    """Dense layer y = W x + b with W of shape (out, in)."""

    def __init__(self, weight, bias):
        self.weight = _as_finite_f64(weight, "affine weight")
        self.bias = _as_finite_f64(bias, "affine bias")
        if self.weight.ndim != 2:
            raise InvalidInputError("affine weight must be a matrix")
        if self.bias.shape != (self.weight.shape[0],):
            raise InvalidInputError(
                f"affine bias shape {self.bias.shape} does not match "
                f"{self.weight.shape[0]} outputs"
            )

    @property
    def in_size(self) -> int:
        return self.weight.shape[1]

    @property
    def out_size(self) -> int:
        return self.weight.shape[0]

    def apply(self, x):
        return self.weight @ x + self.bias, None

    def grad_input(self, saved, g):
        return self.weight.T @ g

    def weight_arrays(self):
        return [self.weight, self.bias]


class Activation:
    """Elementwise tanh or relu; size-preserving."""

    KINDS = ("tanh", "relu")

    def __init__(self, fn: str):
        if fn not in self.KINDS:
            raise InvalidInputError(f"unknown activation {fn!r}")
        self.fn = fn

    in_size = None
    out_size = None

    def apply(self, x):
        if self.fn == "tanh":
            y = np.tanh(x)
            return y, y
        # relu saves the pre-activation; derivative at exactly 0 is taken as 0
        return np.maximum(x, 0.0), x

    def grad_input(self, saved, g):
        if self.fn == "tanh":
            return g * (1.0 - saved * saved)
        return np.where(saved > 0.0, g, 0.0)

    def weight_arrays(self):
        return []


class ConvTranspose2d:
    """Transposed convolution that multiplies each spatial dimension by `stride`.

    The kernel has shape (in_channels, out_channels, kh, kw) with kh == kw, and
    the implied crop is (kh - stride) / 2 per side so the output is exactly
    input_size * stride. The layer is linear in its input, so it is applied and
    differentiated through a scatter matrix over flattened (channel, row, col)
    vectors, built once per layer and dropped when pickling.
    """

    def __init__(self, kernel, bias, stride, in_shape):
        self.kernel = _as_finite_f64(kernel, "conv kernel")
        self.bias = _as_finite_f64(bias, "conv bias")
        self.stride = int(stride)
        self.in_shape = tuple(int(s) for s in in_shape)
        if self.kernel.ndim != 4 or self.kernel.shape[2] != self.kernel.shape[3]:
            raise InvalidInputError("conv kernel must be (c_in, c_out, k, k)")
        c_in, c_out, k, _ = self.kernel.shape
        if self.stride < 1:
            raise InvalidInputError("conv stride must be positive")
        if (k - self.stride) % 2 != 0 or k < self.stride:
            raise InvalidInputError(
                f"kernel size {k} cannot realize exact x{self.stride} upsampling"
            )
        if len(self.in_shape) != 3 or self.in_shape[0] != c_in:
            raise InvalidInputError(
                f"conv input shape {self.in_shape} does not match {c_in} kernel "
                "input channels"
            )
        if self.bias.shape != (c_out,):
            raise InvalidInputError("conv bias must have one entry per output channel")
        self._matrix = None
        self._matrix_t = None
        self._bias_flat = None

    @property
    def out_shape(self) -> tuple[int, int, int]:
        c_in, h, w = self.in_shape
        return (self.kernel.shape[1], h * self.stride, w * self.stride)

    @property
    def in_size(self) -> int:
        c, h, w = self.in_shape
        return c * h * w

    @property
    def out_size(self) -> int:
        c, h, w = self.out_shape
        return c * h * w

    def _build(self):
        c_in, h_in, w_in = self.in_shape
        _, c_out, kh, kw = self.kernel.shape
        s = self.stride
        h_out, w_out = h_in * s, w_in * s
        pad = (kh - s) // 2
        m = np.zeros((self.out_size, self.in_size))
        ii, jj = np.meshgrid(np.arange(h_in), np.arange(w_in), indexing="ij")
        ii, jj = ii.ravel(), jj.ravel()
        plane_in, plane_out = h_in * w_in, h_out * w_out
        for di in range(kh):
            oi = s * ii + di - pad
            keep_i = (oi >= 0) & (oi < h_out)
            for dj in range(kw):
                oj = s * jj + dj - pad
                keep = keep_i & (oj >= 0) & (oj < w_out)
                src = np.flatnonzero(keep)
                rows = oi[keep] * w_out + oj[keep]
                for ci in range(c_in):
                    cols = ci * plane_in + src
                    for co in range(c_out):
                        m[co * plane_out + rows, cols] += self.kernel[ci, co, di, dj]
        self._matrix = m
        self._matrix_t = np.ascontiguousarray(m.T)
        self._bias_flat = np.repeat(self.bias, plane_out)

    def apply(self, x):
        if self._matrix is None:
            self._build()
        return self._matrix @ x + self._bias_flat, None

    def grad_input(self, saved, g):
        return self._matrix_t @ g

    def weight_arrays(self):
        return [self.kernel, self.bias]

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_matrix"] = None
        state["_matrix_t"] = None
        state["_bias_flat"] = None
        return state


class GeneratorNetwork:
    """Fixed-weight feed-forward map from latent vectors to image tensors.

    Checks that adjacent layer dimensions compose, that the first layer
    consumes `latent_dim` values, and that the last layer emits exactly
    `output_shape` worth of them. Networks produced by the builder module
    always end in a tanh activation, pinning every output to [-1, 1]; the
    class itself only enforces the dimensional chain so that bare layer
    stacks can be assembled in gradient-oracle tests.

    Instances are immutable after construction and safe to share across
    threads; per-call state lives entirely in the values each call returns.
    """

    def __init__(self, layers, latent_dim, output_shape, seed, spec=None):
        self.layers = tuple(layers)
        self.latent_dim = int(latent_dim)
        self.output_shape = tuple(int(s) for s in output_shape)
        self.seed = int(seed)
        self.spec = spec
        if self.latent_dim < 1:
            raise InvalidInputError("latent_dim must be positive")
        if len(self.output_shape) != 3 or any(s < 1 for s in self.output_shape):
            raise InvalidInputError(f"bad output shape {self.output_shape!r}")
        if not self.layers:
            raise InvalidInputError("network needs at least one layer")
        size = self.latent_dim
        for i, layer in enumerate(self.layers):
            if layer.in_size is not None and layer.in_size != size:
                raise InvalidInputError(
                    f"layer {i} expects {layer.in_size} inputs, got {size}"
                )
            if layer.out_size is not None:
                size = layer.out_size
        if size != self.output_size:
            raise InvalidInputError(
                f"final layer emits {size} values, output shape "
                f"{self.output_shape} needs {self.output_size}"
            )

    @property
    def output_size(self) -> int:
        c, h, w = self.output_shape
        return c * h * w

    def run(self, z: np.ndarray):
        """Fast-path forward on a flat float64 vector.

        Returns (flat output, per-layer saved values). No contract checks;
        `forward` is the checked entry point.
        """
        saved = []
        x = z
        for layer in self.layers:
            x, s = layer.apply(x)
            saved.append(s)
        return x, saved

    def input_gradient(self, saved, g_out: np.ndarray) -> np.ndarray:
        """Chain a flat output gradient back to the input, layer by layer."""
        g = g_out
        for layer, s in zip(reversed(self.layers), reversed(saved)):
            g = layer.grad_input(s, g)
        return g


@dataclass(eq=False)
class Tape:
    """Recorded intermediates of one forward pass, replayable for the input
    gradient. Valid only for the (network, input) pair it was recorded from;
    not meant to be shared across threads."""

    net: GeneratorNetwork
    z: np.ndarray
    output: np.ndarray
    saved: list


def forward(net: GeneratorNetwork, z) -> tuple[ImageTensor, Tape]:
    """Evaluate the generator at latent vector z.

    Returns the image and a tape from which the input gradient of an
    image-space loss can be replayed.
    """
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if z.size != net.latent_dim:
        raise InvalidInputError(
            f"latent vector has {z.size} components, network expects {net.latent_dim}"
        )
    if not np.isfinite(z).all():
        raise InvalidInputError("latent vector contains non-finite values")
    y, saved = net.run(z)
    return ImageTensor(net.output_shape, y), Tape(net=net, z=z.copy(), output=y, saved=saved)


def l2_loss(a: ImageTensor, b: ImageTensor) -> float:
    """Squared L2 distance sum_i (a_i - b_i)^2 between two images."""
    if a.shape != b.shape:
        raise InvalidInputError(f"image shapes differ: {a.shape} vs {b.shape}")
    d = a.data - b.data
    return float(d @ d)


def backward_input(net: GeneratorNetwork, tape: Tape, target: ImageTensor) -> np.ndarray:
    """Exact gradient of l2_loss(forward(net, z), target) with respect to z.

    The tape must come from forward(net, z); replaying it against a different
    network is a contract error.
    """
    if tape.net is not net:
        raise TapeError("tape was recorded on a different network")
    if target.shape != net.output_shape:
        raise InvalidInputError(
            f"target shape {target.shape} does not match network output "
            f"{net.output_shape}"
        )
    g_out = 2.0 * (tape.output - target.data)
    return net.input_gradient(tape.saved, g_out)


def finite_diff_grad(net: GeneratorNetwork, z, target: ImageTensor, h: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of the squared-L2 image loss at z.

    Component i is [L(z + h e_i) - L(z - h e_i)] / (2 h). Independent of the
    reverse-mode path; used as its oracle.
    """
    if not (isinstance(h, (int, float)) and h > 0 and math.isfinite(h)):
        raise InvalidInputError("step size h must be positive and finite")
    z = np.asarray(z, dtype=np.float64).reshape(-1).copy()
    t_data = target.data

    def loss_at(v):
        y, _ = net.run(v)
        r = y - t_data
        return float(r @ r)

    grad = np.empty(z.size)
    for i in range(z.size):
        orig = z[i]
        z[i] = orig + h
        up = loss_at(z)
        z[i] = orig - h
        down = loss_at(z)
        z[i] = orig
        grad[i] = (up - down) / (2.0 * h)
    return grad
