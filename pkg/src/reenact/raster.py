"""Minimal 2D rasterization: oriented thick segments and discs.

Regions are produced as (row slice, col slice, boolean mask, u, v)
tuples so one geometry pass can paint label fields, color images and
body-surface coordinate channels identically. Pixel sample points sit
at integer-plus-half centers, which keeps figures mirror-symmetric
about a vertical axis through the image center.
"""

from __future__ import annotations

import numpy as np

Region = tuple[slice, slice, np.ndarray, np.ndarray, np.ndarray]


def _empty_region() -> Region:
    z = np.zeros((0, 0))
    return slice(0, 0), slice(0, 0), z.astype(bool), z, z


def _bbox_grid(shape: tuple[int, int], x_lo: float, x_hi: float, y_lo: float, y_hi: float):
    h, w = shape
    c0 = max(0, int(np.floor(x_lo)))
    c1 = min(w, int(np.ceil(x_hi)) + 1)
    r0 = max(0, int(np.floor(y_lo)))
    r1 = min(h, int(np.ceil(y_hi)) + 1)
    if c0 >= c1 or r0 >= r1:
        return None
    ys, xs = np.mgrid[r0:r1, c0:c1]
    return slice(r0, r1), slice(c0, c1), xs + 0.5, ys + 0.5


def segment_region(
    shape: tuple[int, int],
    p0: tuple[float, float],
    p1: tuple[float, float],
    halfwidth: float,
) -> Region:
    """Oriented rectangle from p0 to p1 (butt caps).

    u runs 0..1 along the axis, v runs 0..1 across it.
    """
    p0 = np.asarray(p0, dtype=np.float64)
    p1 = np.asarray(p1, dtype=np.float64)
    d = p1 - p0
    length = float(np.hypot(*d))
    if length < 1e-9:
        return disc_region(shape, tuple(p0), halfwidth)
    axis = d / length
    perp = np.array([-axis[1], axis[0]])
    pad = halfwidth + 1.0
    grid = _bbox_grid(
        shape,
        min(p0[0], p1[0]) - pad,
        max(p0[0], p1[0]) + pad,
        min(p0[1], p1[1]) - pad,
        max(p0[1], p1[1]) + pad,
    )
    if grid is None:
        return _empty_region()
    rs, cs, xs, ys = grid
    relx = xs - p0[0]
    rely = ys - p0[1]
    t = (relx * axis[0] + rely * axis[1]) / length
    s = (relx * perp[0] + rely * perp[1]) / max(halfwidth, 1e-9)
    mask = (t >= 0.0) & (t <= 1.0) & (np.abs(s) <= 1.0)
    u = np.clip(t, 0.0, 1.0)
    v = np.clip((s + 1.0) / 2.0, 0.0, 1.0)
    return rs, cs, mask, u, v


def disc_region(shape: tuple[int, int], center: tuple[float, float], radius: float) -> Region:
    """Filled disc; u runs top to bottom, v left to right over the bbox."""
    cx, cy = float(center[0]), float(center[1])
    grid = _bbox_grid(shape, cx - radius - 1, cx + radius + 1, cy - radius - 1, cy + radius + 1)
    if grid is None:
        return _empty_region()
    rs, cs, xs, ys = grid
    dx = xs - cx
    dy = ys - cy
    mask = dx * dx + dy * dy <= radius * radius
    denom = max(2.0 * radius, 1e-9)
    u = np.clip((dy + radius) / denom, 0.0, 1.0)
    v = np.clip((dx + radius) / denom, 0.0, 1.0)
    return rs, cs, mask, u, v


def half_disc_region(
    shape: tuple[int, int], center: tuple[float, float], radius: float, y_cut: float
) -> Region:
    """Disc restricted to sample points with y below the cut line."""
    rs, cs, mask, u, v = disc_region(shape, center, radius)
    if mask.size == 0:
        return rs, cs, mask, u, v
    ys = np.arange(rs.start, rs.stop)[:, None] + 0.5
    mask = mask & (np.broadcast_to(ys, mask.shape) < y_cut)
    return rs, cs, mask, u, v


def paint_label(labels: np.ndarray, region: Region, label: int) -> None:
    rs, cs, mask, _, _ = region
    labels[rs, cs][mask] = label


def paint_color(image: np.ndarray, region: Region, color) -> None:
    rs, cs, mask, _, _ = region
    image[rs, cs][mask] = np.asarray(color, dtype=image.dtype)


def paint_dense(dense: np.ndarray, region: Region, part: int) -> None:
    """Write quantized (u, v) and the part index into a dense render."""
    rs, cs, mask, u, v = region
    block = dense[rs, cs]  # view into dense
    block[..., 0][mask] = np.round(u[mask] * 255.0) / 255.0
    block[..., 1][mask] = np.round(v[mask] * 255.0) / 255.0
    block[..., 2][mask] = float(part)
