"""Latent-vector recovery from feed-forward image generators.

Builds seeded desk-scale generator networks, inverts their outputs by
projected gradient descent (no / standard / stochastic clipping), and runs
reproducible recovery, noise-robustness, and uniqueness experiments.
"""

__version__ = "0.1.0"

from .generator import GeneratorSpec, build, fingerprint, load, save
from .inversion import (
    MODES,
    ClippingMode,
    InversionConfig,
    InversionResult,
    clip,
    init_latent,
    invert,
    learning_rate,
)
from .net import (
    GeneratorNetwork,
    ImageTensor,
    backward_input,
    finite_diff_grad,
    forward,
    l2_loss,
)

__all__ = [
    "ClippingMode",
    "GeneratorNetwork",
    "GeneratorSpec",
    "ImageTensor",
    "InversionConfig",
    "InversionResult",
    "MODES",
    "__version__",
    "backward_input",
    "build",
    "clip",
    "fingerprint",
    "finite_diff_grad",
    "forward",
    "init_latent",
    "invert",
    "l2_loss",
    "learning_rate",
    "load",
    "save",
]
