"""Batch experiments over many inversion trials.

Three studies, each over the clipping modes:

* recovery: success rates at several error thresholds,
* noise: recovery error as a function of target corruption,
* uniqueness: spread of repeated recoveries of a single target.

Every trial is seeded from (master_seed, trial index, purpose tag), so a
report depends only on the master seed and the generator, never on worker
count or scheduling.
"""

from __future__ import annotations

import os
import pickle
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .generator import GeneratorSpec, build
from .inversion import (
    MODES,
    ClippingMode,
    InversionConfig,
    InversionResult,
    invert,
)
from .net import GeneratorNetwork, ImageTensor
from .streams import BASELINE, INIT, LATENT, NOISE, UNSEEN, derive_seed, substream

DEFAULT_THRESHOLDS = (1e-4, 1e-3, 1e-2, 1e-1)
DEFAULT_VARIANCES = (0.0, 0.001, 0.01, 0.05, 0.1)

_BASELINE_CHUNK = 20000


@dataclass(frozen=True)
class ExperimentConfig:
    """Shared knobs for the batch experiments.

    ``inversion`` carries the optimizer schedule; its ``mode`` and
    ``init_seed`` fields are overwritten per trial and per mode, so the
    values given here are irrelevant.
    """

    spec: GeneratorSpec
    inversion: InversionConfig
    master_seed: int = 0
    modes: tuple[str, ...] = MODES

    def __post_init__(self) -> None:
        for kind in self.modes:
            if kind not in MODES:
                raise ValueError(f"unknown clipping mode {kind!r}")
        if not self.modes:
            raise ValueError("modes must be non-empty")


@dataclass(frozen=True)
class RecoveryReport:
    thresholds: tuple[float, ...]
    # success_rates[mode][k] is the fraction of trials with
    # z_error < thresholds[k], strictly.
    success_rates: dict[str, tuple[float, ...]]
    z_errors: dict[str, tuple[float, ...]]
    n_trials: int


@dataclass(frozen=True)
class NoiseReport:
    variances: tuple[float, ...]
    # per mode, one row of summary stats per variance
    median_zerr: dict[str, tuple[float, ...]]
    mean_zerr: dict[str, tuple[float, ...]]
    q25: dict[str, tuple[float, ...]]
    q75: dict[str, tuple[float, ...]]
    n_trials: int


@dataclass(frozen=True)
class UniquenessReport:
    mean_pairwise: dict[str, float]
    baseline: float
    baseline_pairs: int
    m: int


def _mode_cfg(cfg: ExperimentConfig, kind: str, trial: int) -> InversionConfig:
    mode_index = MODES.index(kind)
    seed = derive_seed(cfg.master_seed, trial, INIT, mode_index)
    return replace(cfg.inversion, mode=ClippingMode(kind), init_seed=seed)


def _trial_latent(cfg: ExperimentConfig, trial: int) -> np.ndarray:
    rng = substream(cfg.master_seed, trial, LATENT)
    return rng.uniform(-1.0, 1.0, cfg.spec.latent_dim)


# ---------------------------------------------------------------------------
# per-trial workers, module level so they pickle


def _recovery_trial(cfg: ExperimentConfig, trial: int) -> dict[str, float]:
    net = build(cfg.spec)
    z = _trial_latent(cfg, trial)
    y, _ = net.run(z)
    target = ImageTensor(net.output_shape, y)
    out = {}
    for kind in cfg.modes:
        res = invert(net, target, _mode_cfg(cfg, kind, trial), ground_truth_z=z)
        out[kind] = res.z_error
    return out


def _noise_trial(
    cfg: ExperimentConfig, variances: tuple[float, ...], trial: int
) -> dict[str, tuple[float, ...]]:
    net = build(cfg.spec)
    z = _trial_latent(cfg, trial)
    y, _ = net.run(z)
    # one shared standard-normal draw per trial; scaling it by sigma gives
    # common random numbers across the variance grid, and sigma = 0
    # reproduces the clean-target trial bit for bit
    noise = substream(cfg.master_seed, trial, NOISE).standard_normal(y.size)
    out = {kind: [] for kind in cfg.modes}
    for var in variances:
        target = ImageTensor(net.output_shape, y + np.sqrt(var) * noise)
        for kind in cfg.modes:
            res = invert(net, target, _mode_cfg(cfg, kind, trial), ground_truth_z=z)
            out[kind].append(res.z_error)
    return {kind: tuple(vals) for kind, vals in out.items()}


def _uniqueness_trial(
    cfg: ExperimentConfig, target_data: np.ndarray, z: np.ndarray, trial: int
) -> dict[str, np.ndarray]:
    net = build(cfg.spec)
    target = ImageTensor(net.output_shape, target_data)
    out = {}
    for kind in cfg.modes:
        res = invert(net, target, _mode_cfg(cfg, kind, trial), ground_truth_z=z)
        out[kind] = res.z_recovered
    return out


# ---------------------------------------------------------------------------
# deterministic trial runner

_POOL_CONTEXT: dict = {}


def _pool_init(payload: bytes) -> None:
    _POOL_CONTEXT["call"] = pickle.loads(payload)


def _pool_call(trial: int):
    fn, args = _POOL_CONTEXT["call"]
    return fn(*args, trial)


def run_trials(
    fn: Callable, args: tuple, n_trials: int, workers: Optional[int] = None
) -> list:
    """Run ``fn(*args, trial)`` for trial in range(n_trials).

    Results come back in trial order. Worker count affects wall time only;
    all randomness is derived from the trial index inside ``fn``.
    """
    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or n_trials <= 1:
        return [fn(*args, t) for t in range(n_trials)]
    payload = pickle.dumps((fn, args))
    with ProcessPoolExecutor(
        max_workers=min(workers, n_trials),
        initializer=_pool_init,
        initargs=(payload,),
    ) as pool:
        return list(pool.map(_pool_call, range(n_trials)))


# ---------------------------------------------------------------------------
# experiments


def exp_recovery(
    cfg: ExperimentConfig,
    n_trials: int,
    thresholds: Sequence[float] = DEFAULT_THRESHOLDS,
    workers: Optional[int] = None,
) -> RecoveryReport:
    """Success rate per mode at each error threshold, over fresh latents."""
    if n_trials <= 0:
        raise ValueError("n_trials must be positive")
    thresholds = tuple(float(t) for t in thresholds)
    if any(t <= 0 for t in thresholds):
        raise ValueError("thresholds must be positive")
    rows = run_trials(_recovery_trial, (cfg,), n_trials, workers)
    z_errors = {
        kind: tuple(row[kind] for row in rows) for kind in cfg.modes
    }
    rates = {}
    for kind in cfg.modes:
        errs = np.array(z_errors[kind])
        rates[kind] = tuple(float(np.mean(errs < t)) for t in thresholds)
    return RecoveryReport(thresholds, rates, z_errors, n_trials)


def exp_noise(
    cfg: ExperimentConfig,
    n_trials: int,
    variances: Sequence[float] = DEFAULT_VARIANCES,
    workers: Optional[int] = None,
) -> NoiseReport:
    """Recovery error stats per mode across a grid of noise variances."""
    if n_trials <= 0:
        raise ValueError("n_trials must be positive")
    variances = tuple(float(v) for v in variances)
    if any(v < 0 for v in variances):
        raise ValueError("variances must be non-negative")
    rows = run_trials(_noise_trial, (cfg, variances), n_trials, workers)
    med, mean, q25, q75 = {}, {}, {}, {}
    for kind in cfg.modes:
        # n_trials x n_variances
        errs = np.array([row[kind] for row in rows])
        med[kind] = tuple(float(v) for v in np.median(errs, axis=0))
        mean[kind] = tuple(float(v) for v in np.mean(errs, axis=0))
        q25[kind] = tuple(float(v) for v in np.quantile(errs, 0.25, axis=0))
        q75[kind] = tuple(float(v) for v in np.quantile(errs, 0.75, axis=0))
    return NoiseReport(variances, med, mean, q25, q75, n_trials)


def mean_pairwise_distance(points: np.ndarray) -> float:
    """Average euclidean distance over unordered pairs, divided by dimension.

    ``points`` is (m, d) with m >= 2.
    """
    points = np.asarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[0] < 2:
        raise ValueError("need an (m, d) array with m >= 2")
    m, d = points.shape
    total = 0.0
    for i in range(m - 1):
        total += float(np.sum(np.linalg.norm(points[i + 1 :] - points[i], axis=1)))
    return total / (m * (m - 1) / 2) / d


def baseline_pairwise(d: int, n_pairs: int, seed: int = 0) -> float:
    """Monte Carlo mean distance between independent uniform latents, over d.

    Estimates E‖u - v‖ / d for u, v independent uniform on [-1, 1]^d,
    from ``n_pairs`` fresh pairs.
    """
    if d <= 0 or n_pairs <= 0:
        raise ValueError("d and n_pairs must be positive")
    rng = substream(seed, BASELINE)
    total = 0.0
    done = 0
    while done < n_pairs:
        k = min(_BASELINE_CHUNK, n_pairs - done)
        u = rng.uniform(-1.0, 1.0, (k, d))
        v = rng.uniform(-1.0, 1.0, (k, d))
        total += float(np.sum(np.linalg.norm(u - v, axis=1)))
        done += k
    return total / n_pairs / d


def unseen_target(cfg: ExperimentConfig, unseen_seed: Optional[int] = None) -> ImageTensor:
    """Image from a fresh generator of the same shape but different weights.

    Approximates a target outside the range of the generator under study,
    for probing uniqueness of recoveries with no true preimage.
    """
    seed = cfg.spec.seed + 1 if unseen_seed is None else unseen_seed
    if seed == cfg.spec.seed:
        raise ValueError("unseen generator must use a different seed")
    other = build(replace(cfg.spec, seed=seed))
    z = substream(cfg.master_seed, 0, UNSEEN).uniform(-1.0, 1.0, cfg.spec.latent_dim)
    y, _ = other.run(z)
    return ImageTensor(other.output_shape, y)


def exp_uniqueness(
    cfg: ExperimentConfig,
    m: int,
    target: Optional[ImageTensor] = None,
    baseline_pairs: int = 100000,
    workers: Optional[int] = None,
) -> UniquenessReport:
    """Spread of m independent recoveries of one fixed target.

    With no target given, uses a fresh latent pushed through the generator,
    so a true preimage exists. Each recovery starts from its own init seed;
    the report compares the per-mode mean pairwise distance against the
    distance between unrelated uniform latents.
    """
    if m < 2:
        raise ValueError("m must be at least 2")
    net = build(cfg.spec)
    if target is None:
        z = _trial_latent(cfg, 0)
        y, _ = net.run(z)
        target = ImageTensor(net.output_shape, y)
    else:
        z = None
    rows = run_trials(_uniqueness_trial, (cfg, target.data, z), m, workers)
    spread = {}
    for kind in cfg.modes:
        pts = np.stack([row[kind] for row in rows])
        spread[kind] = mean_pairwise_distance(pts)
    base = baseline_pairwise(cfg.spec.latent_dim, baseline_pairs, seed=cfg.master_seed)
    return UniquenessReport(spread, base, baseline_pairs, m)


def exp_trajectory(
    cfg: ExperimentConfig,
    kind: str,
    trial: int = 0,
    snapshot_iters: Sequence[int] = (),
    stride: int = 0,
) -> InversionResult:
    """Single instrumented inversion, keeping intermediate images.

    Useful for eyeballing how an estimate sharpens toward the target.
    """
    net = build(cfg.spec)
    z = _trial_latent(cfg, trial)
    y, _ = net.run(z)
    target = ImageTensor(net.output_shape, y)
    run_cfg = replace(_mode_cfg(cfg, kind, trial), trajectory_stride=stride)
    return invert(
        net, target, run_cfg, ground_truth_z=z, snapshot_iters=tuple(snapshot_iters)
    )
