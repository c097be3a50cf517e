"""Projected gradient descent on the latent input of a fixed generator.

The iterate is updated as z <- clip(z - eta_t * grad), where grad is the exact
input gradient of the squared-L2 image loss and eta_t follows a stepped
geometric decay. Three projection modes are supported: no clipping, standard
box clipping, and stochastic clipping, which redraws out-of-range components
uniformly inside the box instead of pinning them to the boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .net import GeneratorNetwork, ImageTensor, InvalidInputError
from .streams import CLIP, INIT, substream

__all__ = [
    "MODES",
    "ClippingMode",
    "DivergenceError",
    "InversionConfig",
    "InversionResult",
    "TrajectoryPoint",
    "clip",
    "init_latent",
    "invert",
    "learning_rate",
]

MODE_NONE = "none"
MODE_STANDARD = "standard"
MODE_STOCHASTIC = "stochastic"
MODES = (MODE_NONE, MODE_STANDARD, MODE_STOCHASTIC)


class DivergenceError(ArithmeticError):
    """The loss or gradient went non-finite mid-run (learning rate too hot)."""

    def __init__(self, iteration: int, quantity: str):
        self.iteration = iteration
        self.quantity = quantity
        super().__init__(f"non-finite {quantity} at iteration {iteration}")


@dataclass(frozen=True)
class ClippingMode:
    """Projection rule plus the box it projects into."""

    kind: str = MODE_STOCHASTIC
    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self):
        if self.kind not in MODES:
            raise InvalidInputError(f"unknown clipping mode {self.kind!r}")
        if not self.lo < self.hi:
            raise InvalidInputError(f"empty clipping box [{self.lo}, {self.hi}]")


@dataclass(frozen=True)
class InversionConfig:
    """Optimizer settings; defaults are tuned for the reference generators."""

    mode: ClippingMode = ClippingMode()
    eta0: float = 1.0
    decay: float = 0.5
    decay_every: int = 10000
    max_iters: int = 100000
    loss_tol: float = 1e-12
    init_seed: int = 0
    trajectory_stride: int = 0

    def __post_init__(self):
        if not self.eta0 > 0:
            raise InvalidInputError("eta0 must be positive")
        if not 0 < self.decay <= 1:
            raise InvalidInputError("decay must lie in (0, 1]")
        if self.decay_every < 1:
            raise InvalidInputError("decay_every must be a positive integer")
        if self.max_iters < 0:
            raise InvalidInputError("max_iters must be non-negative")
        if self.loss_tol < 0:
            raise InvalidInputError("loss_tol must be non-negative")
        if self.trajectory_stride < 0:
            raise InvalidInputError("trajectory_stride must be non-negative")


@dataclass(eq=False)
class TrajectoryPoint:
    """Loss and generator output recorded at one iteration."""

    iteration: int
    loss: float
    image: ImageTensor


@dataclass(eq=False)
class InversionResult:
    z_recovered: np.ndarray
    final_loss: float
    iters_used: int
    converged: bool
    z_error: float | None = None
    trajectory: list[TrajectoryPoint] | None = None


def init_latent(d: int, rng: np.random.Generator) -> np.ndarray:
    """Draw a starting latent vector uniformly from [-1, 1]^d."""
    if d < 1:
        raise InvalidInputError("latent dimension must be >= 1")
    return rng.uniform(-1.0, 1.0, size=d)


def clip(z: np.ndarray, mode: ClippingMode, rng: np.random.Generator | None = None) -> np.ndarray:
    """Project an iterate according to the clipping mode.

    none: return z unchanged. standard: componentwise min/max onto the box.
    stochastic: replace each out-of-range component with a fresh uniform draw
    from the box interior; in-range components are untouched.
    """
    if mode.kind == MODE_NONE:
        return z
    if mode.kind == MODE_STANDARD:
        return np.clip(z, mode.lo, mode.hi)
    outside = (z < mode.lo) | (z > mode.hi)
    if not outside.any():
        return z
    if rng is None:
        raise InvalidInputError("stochastic clipping needs an RNG stream")
    out = z.copy()
    out[outside] = rng.uniform(mode.lo, mode.hi, size=int(outside.sum()))
    return out


def learning_rate(cfg: InversionConfig, iteration: int) -> float:
    """Stepped geometric decay: eta0 * decay^(iteration // decay_every)."""
    return cfg.eta0 * cfg.decay ** (iteration // cfg.decay_every)


def invert(
    net: GeneratorNetwork,
    target: ImageTensor,
    cfg: InversionConfig,
    ground_truth_z=None,
    z0=None,
    snapshot_iters=None,
) -> InversionResult:
    """Recover a latent vector whose image matches the target.

    Iterates projected gradient descent from a seeded uniform start (or from
    z0 when supplied, the test hook) until the image-space loss drops to
    cfg.loss_tol or the iteration budget runs out. The run is a pure function
    of (net, target, cfg, z0): the init and stochastic-clip streams are both
    derived from cfg.init_seed.

    ground_truth_z, when supplied, only adds the per-dimension squared latent
    error ||z - z'||^2 / d to the result. snapshot_iters requests trajectory
    records at those iterations plus the final iterate; cfg.trajectory_stride
    records every stride-th iteration independently.
    """
    if target.shape != net.output_shape:
        raise InvalidInputError(
            f"target shape {target.shape} does not match network output "
            f"{net.output_shape}"
        )
    d = net.latent_dim
    if z0 is not None:
        z = np.asarray(z0, dtype=np.float64).reshape(-1).copy()
        if z.size != d:
            raise InvalidInputError(f"z0 has {z.size} components, expected {d}")
    else:
        z = init_latent(d, substream(cfg.init_seed, INIT))
    clip_rng = substream(cfg.init_seed, CLIP)
    project = cfg.mode.kind != MODE_NONE

    t_data = target.data
    stride = cfg.trajectory_stride
    snaps = frozenset(int(i) for i in snapshot_iters) if snapshot_iters is not None else None
    recording = snaps is not None or stride > 0
    trajectory: list[TrajectoryPoint] | None = [] if recording else None

    t = 0
    last_recorded = -1
    with np.errstate(over="ignore", invalid="ignore"):
        while True:
            y, saved = net.run(z)
            resid = y - t_data
            loss = float(resid @ resid)
            if not math.isfinite(loss):
                raise DivergenceError(t, "loss")
            if recording and ((stride > 0 and t % stride == 0) or (snaps and t in snaps)):
                trajectory.append(TrajectoryPoint(t, loss, ImageTensor(net.output_shape, y)))
                last_recorded = t
            if loss <= cfg.loss_tol:
                converged = True
                break
            if t >= cfg.max_iters:
                converged = False
                break
            g = net.input_gradient(saved, 2.0 * resid)
            if not np.isfinite(g).all():
                raise DivergenceError(t, "gradient")
            z = z - learning_rate(cfg, t) * g
            if project:
                z = clip(z, cfg.mode, clip_rng)
            t += 1

    if recording and last_recorded != t:
        trajectory.append(TrajectoryPoint(t, loss, ImageTensor(net.output_shape, y)))

    z_error = None
    if ground_truth_z is not None:
        gt = np.asarray(ground_truth_z, dtype=np.float64).reshape(-1)
        if gt.size != d:
            raise InvalidInputError(f"ground truth has {gt.size} components, expected {d}")
        diff = gt - z
        z_error = float(diff @ diff) / d

    return InversionResult(
        z_recovered=z,
        final_loss=loss,
        iters_used=t,
        converged=converged,
        z_error=z_error,
        trajectory=trajectory,
    )
