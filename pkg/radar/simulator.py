"""
FMCW Frame Simulator.

Synthesises raw ADC cubes from point targets using a normalised-frequency
beat-signal model:

    x[c, s, rx] = Σ_k a_k · exp(j2π(μ_k·s + f_k·c + 0.5·sin(θ_k)·rx)) + n

μ_k encodes range (fast time), f_k Doppler (slow time) and θ_k azimuth
(half-wavelength receiver spacing).
"""

import logging
import math
from typing import List, Optional, Sequence

import numpy as np

from .scene import AdcFrame, Scene, Target

logger = logging.getLogger(__name__)


def signal_power(scene: Scene) -> float:
    """Expected per-sample signal power Σ a_k²."""
    return float(sum(t.amplitude ** 2 for t in scene.targets))


def noise_sigma(scene: Scene) -> float:
    """
    Complex noise standard deviation for the scene.

    Returns:
        0 for noise-free scenes, 1 when there are no targets, otherwise
        sqrt(P / 10^(snr/10))
    """
    if scene.noise_free:
        return 0.0
    if not scene.targets:
        return 1.0
    return math.sqrt(signal_power(scene)) * 10.0 ** (-scene.snr_db / 20.0)


def synthesize_frame(scene: Scene) -> AdcFrame:
    """
    Build the ADC cube for a scene.

    Deterministic given ``scene.seed``.

    Args:
        scene: Targets, SNR, seed and (C, S, N_Rx)

    Returns:
        AdcFrame with complex128 samples
    """
    C, S, N = scene.dims
    c = np.arange(C, dtype=np.float64)[:, None, None]
    s = np.arange(S, dtype=np.float64)[None, :, None]
    rx = np.arange(N, dtype=np.float64)[None, None, :]

    samples = np.zeros((C, S, N), dtype=np.complex128)
    for target in scene.targets:
        phase = 2.0 * np.pi * (target.beat_frequency * s + target.doppler_norm * c + target.spatial_frequency * rx)
        samples += target.amplitude * np.exp(1j * phase)

    sigma = noise_sigma(scene)
    if sigma > 0.0:
        rng = np.random.default_rng(scene.seed)
        noise = rng.standard_normal((C, S, N, 2)) * (sigma / math.sqrt(2.0))
        samples += noise[..., 0] + 1j * noise[..., 1]

    return AdcFrame(samples)


def random_targets(
    rng: np.random.Generator,
    min_targets: int = 1,
    max_targets: int = 4,
    max_speed: float = 0.25,
    min_range: float = 0.1
) -> List[Target]:
    """
    Draw a random target list.

    Args:
        rng: Random generator
        min_targets: Minimum number of targets
        max_targets: Maximum number of targets (inclusive)
        max_speed: Bound on |doppler_norm|
        min_range: Lower bound on range_norm

    Returns:
        Targets sorted by range
    """
    count = int(rng.integers(min_targets, max_targets + 1))
    targets = [
        Target(
            range_norm=float(rng.uniform(min_range, 0.95)),
            azimuth=float(rng.uniform(-55.0, 55.0)),
            doppler_norm=float(rng.uniform(-max_speed, max_speed)),
            amplitude=float(rng.uniform(0.5, 1.5)),
        )
        for _ in range(count)
    ]
    return sorted(targets, key=lambda t: t.range_norm)


def random_scenes(
    count: int,
    dims: Sequence[int],
    seed: int = 0,
    snr_db: float = 10.0,
    min_targets: int = 1,
    max_targets: int = 4
) -> List[Scene]:
    """Seeded list of independent random scenes."""
    rng = np.random.default_rng(seed)
    scenes = []
    for i in range(count):
        targets = random_targets(rng, min_targets, max_targets)
        scenes.append(Scene(targets=targets, snr_db=snr_db, seed=seed * 100003 + i, dims=tuple(dims)))
    logger.info(f"Generated {count} random scenes (dims={tuple(dims)}, seed={seed})")
    return scenes


def smooth_sequence(
    frames: int,
    dims: Sequence[int],
    seed: int = 0,
    snr_db: float = 10.0,
    drift: float = 0.01,
    jump_at: Optional[int] = None
) -> List[Scene]:
    """
    Scenes whose targets move slowly from frame to frame.

    Args:
        frames: Sequence length
        dims: (C, S, N_Rx)
        seed: Random seed
        snr_db: Per-sample SNR
        drift: Range change per frame (range_norm units)
        jump_at: Frame index at which the scene is replaced by an unrelated one

    Returns:
        List of scenes
    """
    rng = np.random.default_rng(seed)
    base = random_targets(rng, 2, 3, max_speed=0.1, min_range=0.2)
    replacement = random_targets(rng, 2, 3, max_speed=0.1, min_range=0.2)
    scenes = []
    for i in range(frames):
        source = replacement if jump_at is not None and i >= jump_at else base
        moved = [
            Target(
                range_norm=min(0.95, max(0.05, t.range_norm + drift * i)),
                azimuth=t.azimuth,
                doppler_norm=t.doppler_norm,
                amplitude=t.amplitude,
            )
            for t in source
        ]
        scenes.append(Scene(targets=moved, snr_db=snr_db, seed=seed * 7919 + i, dims=tuple(dims)))
    return scenes
