"""Training-time transforms on parsing maps and pose inputs.

The body-structure disentanglement transform squeezes or stretches the
parsing maps horizontally about the figure centroid while leaving pose
inputs untouched, deliberately mismatching body silhouette and driving
pose so the generator must take body width from the conditioning map.

Label injection turns hand and face landmarks into explicit map labels:
hand strokes become body labels 20/21, face features become the five
conditioning-only labels 22..26.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import core, raster
from .core import ConfigError, Frame, Keypoint, KeypointSet, PoseBundle, SemanticMap
from .perception import FaceBox


def _stroke_width(map_width: int) -> float:
    # 2 px at 128-wide maps, proportional elsewhere, never below 1.
    return max(1.0, round(2.0 * map_width / 128.0))


def squeeze_map(semantic_map: SemanticMap, factor: float) -> SemanticMap:
    """Scale the figure horizontally about its centroid by ``factor``."""
    if factor <= 0:
        raise ConfigError(f"squeeze factor must be positive, got {factor}")
    labels = semantic_map.labels
    fg_cols = np.nonzero(labels != core.LABEL_BACKGROUND)[1]
    if fg_cols.size == 0 or factor == 1.0:
        return semantic_map.copy()
    cx = float(fg_cols.mean())
    w = labels.shape[1]
    src = np.round(cx + (np.arange(w) - cx) / factor).astype(int)
    valid = (src >= 0) & (src < w)
    out = np.zeros_like(labels)
    out[:, valid] = labels[:, src[valid]]
    return SemanticMap(out, semantic_map.n_labels)


def squeeze_stretch(
    parsing_in: SemanticMap,
    parsing_gt: SemanticMap,
    factor_range: tuple[float, float],
    rng: np.random.Generator,
) -> tuple[SemanticMap, SemanticMap]:
    """Apply one sampled horizontal factor to both maps; poses stay put."""
    lo, hi = factor_range
    if lo <= 0 or hi <= 0 or lo > hi:
        raise ConfigError(f"bad squeeze factor range {factor_range}")
    f = float(rng.uniform(lo, hi))
    return squeeze_map(parsing_in, f), squeeze_map(parsing_gt, f)


# ---------------------------------------------------------------------------
# Rigid rotation + scale
# ---------------------------------------------------------------------------


def _affine_params(theta_deg: float, scale: float, shape: tuple[int, int]):
    """Inverse index-space matrix/offset plus the forward point map."""
    h, w = shape
    cy, cx = h / 2.0, w / 2.0
    th = math.radians(theta_deg)
    cos_t, sin_t = math.cos(th), math.sin(th)
    # forward in (x, y): p' = s * R (p - c) + c with R rotating +x toward +y
    fwd = np.array([[cos_t, -sin_t], [sin_t, cos_t]]) * scale

    inv = np.linalg.inv(fwd)
    # scipy works on (row, col) = (y, x) index coordinates of sample centers
    inv_rc = np.array([[inv[1, 1], inv[1, 0]], [inv[0, 1], inv[0, 0]]])
    center_idx = np.array([cy - 0.5, cx - 0.5])
    offset = center_idx - inv_rc @ center_idx

    def map_point(x: float, y: float) -> tuple[float, float]:
        px = fwd[0, 0] * (x - cx) + fwd[0, 1] * (y - cy) + cx
        py = fwd[1, 0] * (x - cx) + fwd[1, 1] * (y - cy) + cy
        return px, py

    return inv_rc, offset, map_point


def _warp_nearest(values: np.ndarray, inv_rc: np.ndarray, offset: np.ndarray) -> np.ndarray:
    if values.ndim == 2:
        return ndimage.affine_transform(
            values, inv_rc, offset=offset, order=0, mode="constant", cval=0
        )
    out = np.empty_like(values)
    for c in range(values.shape[2]):
        out[..., c] = ndimage.affine_transform(
            values[..., c], inv_rc, offset=offset, order=0, mode="constant", cval=0
        )
    return out


def rot_scale_sample(
    maps: list[SemanticMap],
    poses: list[PoseBundle],
    theta_deg: float,
    scale: float,
) -> tuple[list[SemanticMap], list[PoseBundle]]:
    """One rigid transform applied consistently to maps, renders, keypoints."""
    if not maps and not poses:
        return [], []
    if theta_deg == 0.0 and scale == 1.0:
        return (
            [m.copy() for m in maps],
            [
                PoseBundle(
                    keypoints=KeypointSet(list(p.keypoints.points)),
                    stick=p.stick.copy(),
                    dense=p.dense.copy(),
                )
                for p in poses
            ],
        )
    shape = (
        (maps[0].height, maps[0].width) if maps else (poses[0].height, poses[0].width)
    )
    inv_rc, offset, map_point = _affine_params(theta_deg, scale, shape)
    h, w = shape

    out_maps = [
        SemanticMap(_warp_nearest(m.labels, inv_rc, offset), m.n_labels) for m in maps
    ]
    out_poses = []
    for pb in poses:
        stick = Frame(_warp_nearest(pb.stick.values, inv_rc, offset))
        dense = _warp_nearest(pb.dense, inv_rc, offset)
        pts = []
        for p in pb.keypoints:
            nx, ny = map_point(p.x, p.y)
            visible = p.visible and 0 <= nx < w and 0 <= ny < h
            pts.append(Keypoint(p.name, nx, ny, visible))
        out_poses.append(PoseBundle(keypoints=KeypointSet(pts), stick=stick, dense=dense))
    return out_maps, out_poses


def random_rot_scale(
    maps: list[SemanticMap],
    poses: list[PoseBundle],
    rot_deg: float,
    scale_range: tuple[float, float],
    rng: np.random.Generator,
) -> tuple[list[SemanticMap], list[PoseBundle]]:
    theta = float(rng.uniform(-rot_deg, rot_deg))
    scale = float(rng.uniform(scale_range[0], scale_range[1]))
    return rot_scale_sample(maps, poses, theta, scale)


# ---------------------------------------------------------------------------
# Label injection
# ---------------------------------------------------------------------------


def inject_hand_labels(parsing: SemanticMap, kps: KeypointSet) -> SemanticMap:
    """Rasterize hand-landmark chains as labels 20 (left) / 21 (right)."""
    out = parsing.copy()
    # floor keeps a stroke at least one sample row wide
    hw = max(0.56, _stroke_width(parsing.width) / 2.0)
    shape = (parsing.height, parsing.width)
    for side, label in (("l", core.LABEL_LEFT_HAND), ("r", core.LABEL_RIGHT_HAND)):
        chain = [f"{side}_wrist", f"hand_{side}_mid", f"hand_{side}_tip"]
        pts = [kps.get(n) for n in chain if kps.has(n) and kps.get(n).visible]
        for a, b in zip(pts, pts[1:]):
            region = raster.segment_region(shape, (a.x, a.y), (b.x, b.y), hw)
            raster.paint_label(out.labels, region, label)
    return out


def inject_face_labels(parsing: SemanticMap, kps: KeypointSet) -> SemanticMap:
    """Draw the five conditioning face labels; output is in the 27-label space."""
    out = SemanticMap(parsing.labels.copy(), core.N_COND_LABELS)
    shape = (parsing.height, parsing.width)
    w = _stroke_width(parsing.width)

    def pt(name: str) -> Keypoint | None:
        return kps.get(name) if kps.has(name) and kps.get(name).visible else None

    stroke_hw = max(0.56, w * 0.45)
    dot_r = max(0.75, w * 0.55)
    for a_name, b_name in (
        ("face_l_brow_out", "face_l_brow_in"),
        ("face_r_brow_in", "face_r_brow_out"),
    ):
        a, b = pt(a_name), pt(b_name)
        if a and b:
            region = raster.segment_region(shape, (a.x, a.y), (b.x, b.y), stroke_hw)
            raster.paint_label(out.labels, region, core.LABEL_EYEBROWS)
    for name in ("face_l_eye", "face_r_eye"):
        p = pt(name)
        if p:
            raster.paint_label(
                out.labels, raster.disc_region(shape, (p.x, p.y), dot_r), core.LABEL_EYES
            )
    nose = pt("face_nose")
    if nose:
        raster.paint_label(
            out.labels, raster.disc_region(shape, (nose.x, nose.y), dot_r), core.LABEL_NOSE
        )
    ll, lr = pt("face_lip_l"), pt("face_lip_r")
    if ll and lr:
        region = raster.segment_region(shape, (ll.x, ll.y), (lr.x, lr.y), stroke_hw)
        raster.paint_label(out.labels, region, core.LABEL_LIPS)
    mouth = pt("face_mouth")
    if mouth:
        raster.paint_label(
            out.labels,
            raster.disc_region(shape, (mouth.x, mouth.y), max(0.72, w * 0.35)),
            core.LABEL_INNER_MOUTH,
        )
    return out


# ---------------------------------------------------------------------------
# Face-box bookkeeping through frame transforms
# ---------------------------------------------------------------------------


@dataclass
class TransformLog:
    """Ordered record of resize/crop/flip ops applied to a frame."""

    ops: list[tuple] = field(default_factory=list)

    def resize(self, sx: float, sy: float) -> "TransformLog":
        self.ops.append(("resize", sx, sy))
        return self

    def crop(self, x0: int, y0: int, w: int, h: int) -> "TransformLog":
        self.ops.append(("crop", x0, y0, w, h))
        return self

    def hflip(self, width: int) -> "TransformLog":
        self.ops.append(("hflip", width))
        return self


def adjust_face_location(box: FaceBox, log: TransformLog) -> FaceBox:
    """Map a face box through the same resize/crop/flip sequence."""
    x0, y0, w, h = box.x0, box.y0, box.side, box.side
    valid = box.valid
    for op in log.ops:
        if op[0] == "resize":
            _, sx, sy = op
            x0, y0, w, h = x0 * sx, y0 * sy, w * sx, h * sy
        elif op[0] == "crop":
            _, cx0, cy0, cw, ch = op
            x0, y0 = x0 - cx0, y0 - cy0
            nx0, ny0 = max(x0, 0.0), max(y0, 0.0)
            nx1, ny1 = min(x0 + w, float(cw)), min(y0 + h, float(ch))
            if nx1 <= nx0 or ny1 <= ny0:
                valid = False
                x0, y0, w, h = 0.0, 0.0, 0.0, 0.0
            else:
                x0, y0, w, h = nx0, ny0, nx1 - nx0, ny1 - ny0
        elif op[0] == "hflip":
            _, width = op
            x0 = width - (x0 + w)
        else:
            raise ValueError(f"unknown transform op {op[0]!r}")
    side = min(w, h) if valid else 0.0
    return FaceBox(x0=x0, y0=y0, side=side, out_size=box.out_size, valid=valid and side >= 2.0)
