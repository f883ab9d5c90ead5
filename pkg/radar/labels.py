"""
Label Rasteriser.

Projects scene targets onto the bird's-eye-view range × azimuth grid:
row 0 is the nearest range bin, columns span [-60°, +60°] uniformly.
"""

import logging
from typing import List, Tuple

import numpy as np

from .scene import MAX_AZIMUTH_DEG, Labels, Scene, Target

logger = logging.getLogger(__name__)

MIN_GRID = 8
DISK_RADIUS = 1.0
_HALF_BELOW = float(np.nextafter(np.float32(0.5), np.float32(0.0)))


def target_position(target: Target, grid: Tuple[int, int]) -> Tuple[float, float]:
    """Continuous (row, col) grid coordinates of a target."""
    h, w = grid
    row = target.range_norm * h
    col = (target.azimuth + MAX_AZIMUTH_DEG) / (2.0 * MAX_AZIMUTH_DEG) * w
    # label offsets are stored as f32; positions are rounded the same way
    return float(np.float32(row)), float(np.float32(col))


def target_cell(target: Target, grid: Tuple[int, int]) -> Tuple[int, int]:
    """Integer cell holding the target, clipped to the grid."""
    h, w = grid
    row, col = target_position(target, grid)
    return min(int(np.floor(row)), h - 1), min(int(np.floor(col)), w - 1)


def rasterize_labels(scene: Scene, grid: Tuple[int, int]) -> Labels:
    """
    Build segmentation and detection targets for a scene.

    Detection: objectness 1 inside a radius-1 disk around each target cell;
    each such cell stores the offset of the true target position from its
    own centre. A target's own cell always holds that target's offset
    (clamped into [-0.5, 0.5)); among the remaining disk cells the nearest
    target wins.
    Segmentation: cell (r, a) is free iff no target occupies column a at a
    row <= r.

    Args:
        scene: Scene to rasterise
        grid: (h_out, w_out), both >= 8

    Returns:
        Labels
    """
    h, w = grid
    if h < MIN_GRID or w < MIN_GRID:
        raise ValueError(f"Label grid must be at least {MIN_GRID}x{MIN_GRID}, got {grid}")

    seg = np.ones((h, w), dtype=np.uint8)
    det = np.zeros((h, w, 3), dtype=np.float32)
    best = np.full((h, w), np.inf)
    centre = np.zeros((h, w), dtype=bool)

    placed = []
    for target in scene.targets:
        row, col = target_position(target, grid)
        r0, c0 = target_cell(target, grid)
        placed.append((row, col, r0, c0))
        # shadowing: everything from the target outward is blocked
        seg[r0:, c0] = 0

        d_range, d_azimuth = _centre_offset(row, r0), _centre_offset(col, c0)
        dist = d_range * d_range + d_azimuth * d_azimuth
        if dist < best[r0, c0]:
            if centre[r0, c0]:
                logger.debug(f"Two targets share cell ({r0}, {c0}); keeping the closer one")
            best[r0, c0] = dist
            det[r0, c0] = (1.0, d_range, d_azimuth)
        centre[r0, c0] = True

    reach = int(np.ceil(DISK_RADIUS))
    for row, col, r0, c0 in placed:
        for dr in range(-reach, reach + 1):
            for dc in range(-reach, reach + 1):
                if dr * dr + dc * dc > DISK_RADIUS * DISK_RADIUS:
                    continue
                r, c = r0 + dr, c0 + dc
                if not (0 <= r < h and 0 <= c < w) or centre[r, c]:
                    continue
                d_range = _offset(row, r)
                d_azimuth = _offset(col, c)
                dist = d_range * d_range + d_azimuth * d_azimuth
                if dist < best[r, c]:
                    best[r, c] = dist
                    det[r, c] = (1.0, d_range, d_azimuth)

    return Labels(seg_mask=seg, det_targets=det)


def _centre_offset(position: float, cell: int) -> float:
    # the +60° edge lands exactly on the far boundary of the last cell
    return min(_offset(position, cell), _HALF_BELOW)


def _offset(position: float, cell: int) -> float:
    return float(np.float32(position) - np.float32(cell + 0.5))


def centre_cells(det_targets: np.ndarray) -> List[Tuple[int, int, float, float]]:
    """
    Recover target cells from a detection label grid.

    A cell is a target centre when its objectness is set and both offsets
    fall in [-0.5, 0.5).

    Returns:
        (row, col, Δrange, Δazimuth) per target, row-major order
    """
    obj = det_targets[..., 0]
    dr = det_targets[..., 1]
    da = det_targets[..., 2]
    inside = (obj >= 0.5) & (dr >= -0.5) & (dr < 0.5) & (da >= -0.5) & (da < 0.5)
    return [(int(r), int(c), float(dr[r, c]), float(da[r, c])) for r, c in np.argwhere(inside)]
