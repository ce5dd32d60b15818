"""Procedural articulated 2D figures with exact ground truth.

Each figure is a painter's-order stack of oriented rectangles and discs
over a gradient background. One geometry pass produces four aligned
views of every frame:

  * an RGB frame (flat region colors plus simple face features),
  * a body-part parsing map in the 22-label space,
  * a pseudo body-surface render (U, V along/across each part plus a
    part index channel in 0..24),
  * named 2D keypoints and a colored stick-figure render.

Records are deterministic functions of (body, pose, size), so oracle
perception providers can return exact annotations for any record.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import core, raster
from .core import (
    DENSE_HEAD,
    DENSE_LEFT_FOOT,
    DENSE_LEFT_FOREARM,
    DENSE_LEFT_HAND,
    DENSE_LEFT_SHIN,
    DENSE_LEFT_THIGH,
    DENSE_LEFT_UPPER_ARM,
    DENSE_RIGHT_FOOT,
    DENSE_RIGHT_FOREARM,
    DENSE_RIGHT_HAND,
    DENSE_RIGHT_SHIN,
    DENSE_RIGHT_THIGH,
    DENSE_RIGHT_UPPER_ARM,
    DENSE_TORSO,
    ExhaustionError,
    FormatError,
    Frame,
    Keypoint,
    KeypointSet,
    PlacementError,
    PoseBundle,
    SemanticMap,
)

# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------


@dataclass
class BodyParams:
    """Per-person body proportions (units of image height) and colors."""

    torso_len: float = 0.26
    torso_halfw: float = 0.062
    shoulder_halfw: float = 0.082
    hip_halfw: float = 0.045
    neck_len: float = 0.035
    head_radius: float = 0.068
    upper_arm_len: float = 0.14
    forearm_len: float = 0.11
    hand_len: float = 0.045
    arm_halfw: float = 0.021
    thigh_len: float = 0.17
    shin_len: float = 0.16
    foot_len: float = 0.075
    foot_halfw: float = 0.023
    leg_halfw: float = 0.030
    width_scale: float = 1.0
    upper_label: int = core.LABEL_UPPER_CLOTHES  # or LABEL_COAT
    lower_style: str = "pants"  # "pants" | "skin"
    colors: dict[str, tuple[int, int, int]] = field(default_factory=lambda: DEFAULT_COLORS.copy())

    def __post_init__(self) -> None:
        for name in (
            "torso_len",
            "torso_halfw",
            "shoulder_halfw",
            "hip_halfw",
            "neck_len",
            "head_radius",
            "upper_arm_len",
            "forearm_len",
            "hand_len",
            "arm_halfw",
            "thigh_len",
            "shin_len",
            "foot_len",
            "foot_halfw",
            "leg_halfw",
            "width_scale",
        ):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lower_style not in ("pants", "skin"):
            raise ValueError(f"unknown lower_style {self.lower_style!r}")


DEFAULT_COLORS: dict[str, tuple[int, int, int]] = {
    "skin": (224, 178, 143),
    "hair": (64, 42, 28),
    "upper": (66, 110, 180),
    "lower": (52, 58, 74),
    "shoes": (30, 30, 34),
    "feature": (22, 20, 24),
    "bg_top": (166, 178, 190),
    "bg_bottom": (120, 128, 140),
}

JOINT_NAMES = (
    "spine",
    "head",
    "l_shoulder",
    "l_elbow",
    "r_shoulder",
    "r_elbow",
    "l_hip",
    "l_knee",
    "r_hip",
    "r_knee",
)

CANONICAL_ANGLES: dict[str, float] = {
    "spine": 0.0,
    "head": 0.0,
    "l_shoulder": -0.35,
    "l_elbow": 0.14,
    "r_shoulder": 0.35,
    "r_elbow": -0.14,
    "l_hip": -0.10,
    "l_knee": 0.06,
    "r_hip": 0.10,
    "r_knee": -0.06,
}

JOINT_LIMITS: dict[str, tuple[float, float]] = {
    "spine": (-0.20, 0.20),
    "head": (-0.26, 0.26),
    "l_shoulder": (-1.15, 0.40),
    "l_elbow": (-0.10, 1.60),
    "r_shoulder": (-0.40, 1.15),
    "r_elbow": (-1.60, 0.10),
    "l_hip": (-0.65, 0.20),
    "l_knee": (-0.10, 1.00),
    "r_hip": (-0.20, 0.65),
    "r_knee": (-1.00, 0.10),
}


@dataclass
class PoseParams:
    """Joint angles (radians) plus a global translation and scale."""

    angles: dict[str, float] = field(default_factory=lambda: CANONICAL_ANGLES.copy())
    dx: float = 0.0  # units of image height
    dy: float = 0.0
    scale: float = 1.0

    def __post_init__(self) -> None:
        for name in JOINT_NAMES:
            if name not in self.angles:
                raise ValueError(f"missing joint angle {name!r}")
            lo, hi = JOINT_LIMITS[name]
            a = self.angles[name]
            if not (lo - 1e-9 <= a <= hi + 1e-9):
                raise ValueError(f"{name}={a:.3f} outside limits [{lo}, {hi}]")
        if self.scale <= 0:
            raise ValueError("scale must be positive")


def canonical_pose() -> PoseParams:
    return PoseParams()


@dataclass
class SampleRecord:
    """One training/evaluation sample: frame plus exact annotation."""

    frame: Frame
    parsing: SemanticMap
    pose: PoseBundle
    person_id: str
    frame_index: int
    background: Frame

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SampleRecord):
            return NotImplemented
        return (
            self.person_id == other.person_id
            and self.frame_index == other.frame_index
            and self.frame == other.frame
            and self.parsing == other.parsing
            and self.pose == other.pose
            and self.background == other.background
        )


# ---------------------------------------------------------------------------
# Forward kinematics
# ---------------------------------------------------------------------------


def _dirn(theta: float) -> np.ndarray:
    """Unit vector pointing straight down at 0, rotating toward +x."""
    return np.array([math.sin(theta), math.cos(theta)])


def _joint_positions(body: BodyParams, pose: PoseParams, size: tuple[int, int]) -> dict:
    h, w = size
    s = h * pose.scale
    a = pose.angles
    ws = body.width_scale

    pelvis = np.array([w / 2.0 + pose.dx * h, 0.60 * h + pose.dy * h])
    up = np.array([math.sin(a["spine"]), -math.cos(a["spine"])])
    perp = np.array([math.cos(a["spine"]), math.sin(a["spine"])])
    neck = pelvis + body.torso_len * s * up

    shoulder_off = body.shoulder_halfw * (1.0 + 0.6 * (ws - 1.0)) * s
    hip_off = body.hip_halfw * s
    l_shoulder = neck - shoulder_off * perp
    r_shoulder = neck + shoulder_off * perp
    l_hip = pelvis - hip_off * perp
    r_hip = pelvis + hip_off * perp

    head_phi = a["spine"] + a["head"]
    head_up = np.array([math.sin(head_phi), -math.cos(head_phi)])
    head_r = body.head_radius * (1.0 + 0.25 * (ws - 1.0)) * s
    neck_top = neck + body.neck_len * s * head_up
    head_c = neck_top + head_r * head_up

    l_elbow = l_shoulder + body.upper_arm_len * s * _dirn(a["l_shoulder"])
    l_wrist = l_elbow + body.forearm_len * s * _dirn(a["l_shoulder"] + a["l_elbow"])
    l_hand_dir = _dirn(a["l_shoulder"] + a["l_elbow"])
    l_hand_tip = l_wrist + body.hand_len * s * l_hand_dir

    r_elbow = r_shoulder + body.upper_arm_len * s * _dirn(a["r_shoulder"])
    r_wrist = r_elbow + body.forearm_len * s * _dirn(a["r_shoulder"] + a["r_elbow"])
    r_hand_dir = _dirn(a["r_shoulder"] + a["r_elbow"])
    r_hand_tip = r_wrist + body.hand_len * s * r_hand_dir

    l_knee = l_hip + body.thigh_len * s * _dirn(a["l_hip"])
    l_ankle = l_knee + body.shin_len * s * _dirn(a["l_hip"] + a["l_knee"])
    r_knee = r_hip + body.thigh_len * s * _dirn(a["r_hip"])
    r_ankle = r_knee + body.shin_len * s * _dirn(a["r_hip"] + a["r_knee"])

    foot_l_dir = np.array([-0.92, 0.39])
    foot_r_dir = np.array([0.92, 0.39])
    l_foot_tip = l_ankle + body.foot_len * s * foot_l_dir
    r_foot_tip = r_ankle + body.foot_len * s * foot_r_dir

    return {
        "pelvis": pelvis,
        "neck": neck,
        "neck_top": neck_top,
        "head_c": head_c,
        "head_r": head_r,
        "head_phi": head_phi,
        "l_shoulder": l_shoulder,
        "l_elbow": l_elbow,
        "l_wrist": l_wrist,
        "l_hand_tip": l_hand_tip,
        "r_shoulder": r_shoulder,
        "r_elbow": r_elbow,
        "r_wrist": r_wrist,
        "r_hand_tip": r_hand_tip,
        "l_hip": l_hip,
        "l_knee": l_knee,
        "l_ankle": l_ankle,
        "l_foot_tip": l_foot_tip,
        "r_hip": r_hip,
        "r_knee": r_knee,
        "r_ankle": r_ankle,
        "r_foot_tip": r_foot_tip,
    }


_FACE_OFFSETS = {
    "face_l_brow_out": (-0.52, -0.42),
    "face_l_brow_in": (-0.18, -0.48),
    "face_r_brow_in": (0.18, -0.48),
    "face_r_brow_out": (0.52, -0.42),
    "face_l_eye": (-0.34, -0.18),
    "face_r_eye": (0.34, -0.18),
    "face_nose": (0.0, 0.10),
    "face_lip_l": (-0.30, 0.45),
    "face_lip_r": (0.30, 0.45),
    "face_mouth": (0.0, 0.45),
}


def _rotate_offset(ox: float, oy: float, phi: float) -> np.ndarray:
    return np.array(
        [ox * math.cos(phi) + oy * math.sin(phi), -ox * math.sin(phi) + oy * math.cos(phi)]
    )


def _face_points(joints: dict) -> dict[str, np.ndarray]:
    c, r, phi = joints["head_c"], joints["head_r"], joints["head_phi"]
    return {name: c + _rotate_offset(ox, oy, phi) * r for name, (ox, oy) in _FACE_OFFSETS.items()}


def _keypoints(joints: dict, size: tuple[int, int]) -> KeypointSet:
    h, w = size
    face = _face_points(joints)
    nose = joints["head_c"] + _rotate_offset(0.0, 0.05, joints["head_phi"]) * joints["head_r"]
    named: list[tuple[str, np.ndarray]] = [
        ("pelvis", joints["pelvis"]),
        ("neck", joints["neck"]),
        ("nose", nose),
        ("l_shoulder", joints["l_shoulder"]),
        ("l_elbow", joints["l_elbow"]),
        ("l_wrist", joints["l_wrist"]),
        ("r_shoulder", joints["r_shoulder"]),
        ("r_elbow", joints["r_elbow"]),
        ("r_wrist", joints["r_wrist"]),
        ("l_hip", joints["l_hip"]),
        ("l_knee", joints["l_knee"]),
        ("l_ankle", joints["l_ankle"]),
        ("r_hip", joints["r_hip"]),
        ("r_knee", joints["r_knee"]),
        ("r_ankle", joints["r_ankle"]),
        ("hand_l_mid", (joints["l_wrist"] + joints["l_hand_tip"]) / 2.0),
        ("hand_l_tip", joints["l_hand_tip"]),
        ("hand_r_mid", (joints["r_wrist"] + joints["r_hand_tip"]) / 2.0),
        ("hand_r_tip", joints["r_hand_tip"]),
    ]
    named.extend(face.items())
    pts = [
        Keypoint(n, float(p[0]), float(p[1]), bool(0 <= p[0] < w and 0 <= p[1] < h))
        for n, p in named
    ]
    return KeypointSet(pts)


# ---------------------------------------------------------------------------
# Painting
# ---------------------------------------------------------------------------


def _part_list(body: BodyParams, pose: PoseParams, joints: dict, size: tuple[int, int]):
    """Painter-ordered parts: (region_kind, geometry, label, dense part, color key)."""
    h, _ = size
    s = h * pose.scale
    ws = body.width_scale
    leg_w = body.leg_halfw * ws * s
    arm_w = body.arm_halfw * ws * s
    torso_w = body.torso_halfw * ws * s
    foot_w = body.foot_halfw * s

    if body.lower_style == "pants":
        lab_l_leg = lab_r_leg = core.LABEL_PANTS
        leg_color = "lower"
    else:
        lab_l_leg, lab_r_leg = core.LABEL_LEFT_LEG, core.LABEL_RIGHT_LEG
        leg_color = "skin"

    parts = [
        ("seg", (joints["l_hip"], joints["l_knee"], leg_w), lab_l_leg, DENSE_LEFT_THIGH, leg_color),
        ("seg", (joints["l_knee"], joints["l_ankle"], leg_w * 0.85), lab_l_leg, DENSE_LEFT_SHIN, leg_color),
        ("seg", (joints["r_hip"], joints["r_knee"], leg_w), lab_r_leg, DENSE_RIGHT_THIGH, leg_color),
        ("seg", (joints["r_knee"], joints["r_ankle"], leg_w * 0.85), lab_r_leg, DENSE_RIGHT_SHIN, leg_color),
        ("seg", (joints["l_ankle"], joints["l_foot_tip"], foot_w), core.LABEL_LEFT_SHOE, DENSE_LEFT_FOOT, "shoes"),
        ("seg", (joints["r_ankle"], joints["r_foot_tip"], foot_w), core.LABEL_RIGHT_SHOE, DENSE_RIGHT_FOOT, "shoes"),
        ("seg", (joints["pelvis"], joints["neck"], torso_w), body.upper_label, DENSE_TORSO, "upper"),
        ("seg", (joints["l_shoulder"], joints["r_shoulder"], 0.035 * s), body.upper_label, DENSE_TORSO, "upper"),
        ("seg", (joints["neck"], joints["neck_top"], 0.020 * s), core.LABEL_TORSO_SKIN, DENSE_TORSO, "skin"),
        ("disc", (joints["head_c"], joints["head_r"]), core.LABEL_FACE, DENSE_HEAD, "skin"),
        ("hair", (joints["head_c"], joints["head_r"], joints["head_phi"]), core.LABEL_HAIR, DENSE_HEAD, "hair"),
        ("seg", (joints["l_shoulder"], joints["l_elbow"], arm_w), core.LABEL_LEFT_ARM, DENSE_LEFT_UPPER_ARM, "skin"),
        ("seg", (joints["l_elbow"], joints["l_wrist"], arm_w * 0.9), core.LABEL_LEFT_ARM, DENSE_LEFT_FOREARM, "skin"),
        ("seg", (joints["l_wrist"], joints["l_hand_tip"], arm_w * 0.8), core.LABEL_LEFT_ARM, DENSE_LEFT_HAND, "skin"),
        ("seg", (joints["r_shoulder"], joints["r_elbow"], arm_w), core.LABEL_RIGHT_ARM, DENSE_RIGHT_UPPER_ARM, "skin"),
        ("seg", (joints["r_elbow"], joints["r_wrist"], arm_w * 0.9), core.LABEL_RIGHT_ARM, DENSE_RIGHT_FOREARM, "skin"),
        ("seg", (joints["r_wrist"], joints["r_hand_tip"], arm_w * 0.8), core.LABEL_RIGHT_ARM, DENSE_RIGHT_HAND, "skin"),
    ]
    return parts


def _part_region(kind: str, geom, shape: tuple[int, int]) -> raster.Region:
    if kind == "seg":
        p0, p1, hw = geom
        return raster.segment_region(shape, tuple(p0), tuple(p1), hw)
    if kind == "disc":
        c, r = geom
        return raster.disc_region(shape, tuple(c), r)
    if kind == "hair":
        c, r, phi = geom
        rs, cs, mask, u, v = raster.disc_region(shape, tuple(c), r * 1.12)
        if mask.size:
            ys, xs = np.mgrid[rs.start : rs.stop, cs.start : cs.stop]
            down = _dirn(phi)
            proj = (xs + 0.5 - c[0]) * down[0] + (ys + 0.5 - c[1]) * down[1]
            mask = mask & (proj < -0.10 * r)
        return rs, cs, mask, u, v
    raise ValueError(f"unknown region kind {kind!r}")


def _part_extent(kind: str, geom) -> tuple[float, float, float, float]:
    if kind == "seg":
        p0, p1, hw = geom
        return (
            min(p0[0], p1[0]) - hw,
            max(p0[0], p1[0]) + hw,
            min(p0[1], p1[1]) - hw,
            max(p0[1], p1[1]) + hw,
        )
    c, r = geom[0], geom[1]
    r = r * (1.12 if kind == "hair" else 1.0)
    return c[0] - r, c[0] + r, c[1] - r, c[1] + r


def figure_extent(body: BodyParams, pose: PoseParams, size: tuple[int, int]):
    joints = _joint_positions(body, pose, size)
    parts = _part_list(body, pose, joints, size)
    x0 = y0 = math.inf
    x1 = y1 = -math.inf
    for kind, geom, _, _, _ in parts:
        ex0, ex1, ey0, ey1 = _part_extent(kind, geom)
        x0, x1 = min(x0, ex0), max(x1, ex1)
        y0, y1 = min(y0, ey0), max(y1, ey1)
    return x0, x1, y0, y1


def _fits(body: BodyParams, pose: PoseParams, size: tuple[int, int], margin: float = 1.0) -> bool:
    h, w = size
    x0, x1, y0, y1 = figure_extent(body, pose, size)
    return x0 >= margin and y0 >= margin and x1 <= w - margin and y1 <= h - margin


STICK_SEGMENTS = (
    ("neck", "pelvis", (153, 0, 0)),
    ("neck", "nose", (153, 51, 0)),
    ("neck", "l_shoulder", (153, 102, 0)),
    ("l_shoulder", "l_elbow", (153, 153, 0)),
    ("l_elbow", "l_wrist", (102, 153, 0)),
    ("neck", "r_shoulder", (51, 153, 0)),
    ("r_shoulder", "r_elbow", (0, 153, 0)),
    ("r_elbow", "r_wrist", (0, 153, 51)),
    ("pelvis", "l_hip", (0, 153, 102)),
    ("l_hip", "l_knee", (0, 153, 153)),
    ("l_knee", "l_ankle", (0, 102, 153)),
    ("pelvis", "r_hip", (0, 51, 153)),
    ("r_hip", "r_knee", (0, 0, 153)),
    ("r_knee", "r_ankle", (51, 0, 153)),
)

STICK_FACE_COLOR = (255, 255, 0)
STICK_HAND_COLORS = {"l": (0, 255, 255), "r": (255, 0, 255)}


def render_stick_figure(kps: KeypointSet, size: tuple[int, int]) -> Frame:
    """Colored limb segments plus face and hand landmark dots."""
    h, w = size
    img = np.zeros((h, w, 3), dtype=np.float64)
    halfw = max(1.0, 1.2 * h / 128.0)
    for a, b, color in STICK_SEGMENTS:
        if not (kps.has(a) and kps.has(b)):
            continue
        pa, pb = kps.get(a), kps.get(b)
        if not (pa.visible and pb.visible):
            continue
        region = raster.segment_region((h, w), (pa.x, pa.y), (pb.x, pb.y), halfw)
        raster.paint_color(img, region, np.array(color) / 255.0)
    dot_r = max(0.8, 0.9 * h / 128.0)
    for p in kps.visible_subset("face_"):
        region = raster.disc_region((h, w), (p.x, p.y), dot_r)
        raster.paint_color(img, region, np.array(STICK_FACE_COLOR) / 255.0)
    for side in ("l", "r"):
        color = np.array(STICK_HAND_COLORS[side]) / 255.0
        for name in (f"{side}_wrist", f"hand_{side}_mid", f"hand_{side}_tip"):
            if kps.has(name) and kps.get(name).visible:
                p = kps.get(name)
                region = raster.disc_region((h, w), (p.x, p.y), dot_r)
                raster.paint_color(img, region, color)
    return Frame(img)


def _background(body: BodyParams, size: tuple[int, int]) -> np.ndarray:
    h, w = size
    top = np.array(body.colors["bg_top"], dtype=np.float64)
    bot = np.array(body.colors["bg_bottom"], dtype=np.float64)
    t = np.arange(h, dtype=np.float64) / max(h - 1, 1)
    rows = np.round(top[None, :] * (1 - t)[:, None] + bot[None, :] * t[:, None])
    return np.repeat(rows[:, None, :], w, axis=1) / 255.0


def render_person(
    body: BodyParams,
    pose: PoseParams,
    size: tuple[int, int],
    person_id: str = "p000",
    frame_index: int = 0,
) -> SampleRecord:
    """Rasterize one figure; deterministic in all inputs."""
    h, w = size
    if not _fits(body, pose, size):
        raise PlacementError(
            f"figure extent {figure_extent(body, pose, size)} exceeds frame {w}x{h}"
        )
    joints = _joint_positions(body, pose, size)
    parts = _part_list(body, pose, joints, size)

    labels = np.zeros((h, w), dtype=np.uint8)
    dense = np.zeros((h, w, 3), dtype=np.float64)
    img = _background(body, size).copy()
    bg = img.copy()

    for kind, geom, label, dense_part, color_key in parts:
        region = _part_region(kind, geom, (h, w))
        raster.paint_label(labels, region, label)
        raster.paint_dense(dense, region, dense_part)
        raster.paint_color(img, region, np.array(body.colors[color_key]) / 255.0)

    # face features on the frame only
    face = _face_points(joints)
    feat = np.array(body.colors["feature"]) / 255.0
    r = joints["head_r"]
    for eye in ("face_l_eye", "face_r_eye"):
        raster.paint_color(img, raster.disc_region((h, w), tuple(face[eye]), 0.11 * r), feat)
    for a, b in (("face_l_brow_out", "face_l_brow_in"), ("face_r_brow_in", "face_r_brow_out")):
        raster.paint_color(
            img, raster.segment_region((h, w), tuple(face[a]), tuple(face[b]), 0.055 * r), feat
        )
    mouth_color = np.array((150, 38, 46)) / 255.0
    raster.paint_color(
        img,
        raster.segment_region((h, w), tuple(face["face_lip_l"]), tuple(face["face_lip_r"]), 0.07 * r),
        mouth_color,
    )

    kps = _keypoints(joints, size)
    stick = render_stick_figure(kps, size)
    bundle = PoseBundle(keypoints=kps, stick=stick, dense=dense)
    return SampleRecord(
        frame=Frame(img),
        parsing=SemanticMap(labels),
        pose=bundle,
        person_id=person_id,
        frame_index=frame_index,
        background=Frame(bg),
    )


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def _rand_color(rng: np.random.Generator, lo: int = 30, hi: int = 225) -> tuple[int, int, int]:
    return tuple(int(v) for v in rng.integers(lo, hi + 1, size=3))


def sample_body(
    rng: np.random.Generator,
    width_scale: float | None = None,
    lower_style: str | None = None,
) -> BodyParams:
    base = BodyParams()

    def jit(v: float, amount: float) -> float:
        return v * float(rng.uniform(1.0 - amount, 1.0 + amount))

    skin_r = int(rng.integers(150, 231))
    skin = (skin_r, int(skin_r * 0.80), int(skin_r * 0.62))
    colors = {
        "skin": skin,
        "hair": _rand_color(rng, 15, 110),
        "upper": _rand_color(rng, 30, 225),
        "lower": _rand_color(rng, 25, 200),
        "shoes": _rand_color(rng, 15, 120),
        "feature": (22, 20, 24),
        "bg_top": _rand_color(rng, 90, 210),
        "bg_bottom": _rand_color(rng, 60, 180),
    }
    return BodyParams(
        torso_len=jit(base.torso_len, 0.06),
        torso_halfw=jit(base.torso_halfw, 0.08),
        shoulder_halfw=jit(base.shoulder_halfw, 0.06),
        hip_halfw=jit(base.hip_halfw, 0.06),
        neck_len=base.neck_len,
        head_radius=jit(base.head_radius, 0.06),
        upper_arm_len=jit(base.upper_arm_len, 0.06),
        forearm_len=jit(base.forearm_len, 0.06),
        hand_len=base.hand_len,
        arm_halfw=jit(base.arm_halfw, 0.10),
        thigh_len=jit(base.thigh_len, 0.06),
        shin_len=jit(base.shin_len, 0.06),
        foot_len=jit(base.foot_len, 0.06),
        foot_halfw=base.foot_halfw,
        leg_halfw=jit(base.leg_halfw, 0.10),
        width_scale=float(rng.uniform(0.8, 1.2)) if width_scale is None else width_scale,
        upper_label=int(rng.choice([core.LABEL_UPPER_CLOTHES, core.LABEL_COAT])),
        lower_style=(lower_style or ("pants" if rng.uniform() < 0.6 else "skin")),
        colors=colors,
    )


def _fit_pose(body: BodyParams, pose: PoseParams, size: tuple[int, int]) -> PoseParams:
    """Pull a pose toward canonical until the figure fits the frame."""
    cur = pose
    for _ in range(40):
        if _fits(body, cur, size):
            return cur
        angles = {
            k: CANONICAL_ANGLES[k] + 0.85 * (cur.angles[k] - CANONICAL_ANGLES[k])
            for k in JOINT_NAMES
        }
        cur = PoseParams(angles=angles, dx=cur.dx * 0.85, dy=cur.dy * 0.85, scale=cur.scale)
    fallback = PoseParams(dx=0.0, dy=0.0, scale=cur.scale)
    if not _fits(body, fallback, size):
        raise PlacementError("figure does not fit the frame even in canonical pose")
    return fallback


def sample_sequence(
    body: BodyParams,
    length: int,
    seed: int,
    size: tuple[int, int] = (128, 80),
    person_id: str = "p000",
    max_joint_step_deg: float = 7.0,
) -> list[SampleRecord]:
    """Smooth random-walk pose trajectory; frame 0 is the canonical pose."""
    if length < 1:
        raise ValueError("length must be >= 1")
    rng = np.random.default_rng(seed)
    step = math.radians(max_joint_step_deg)
    angles = dict(CANONICAL_ANGLES)
    dx = 0.0
    dy = 0.0

    records = []
    for i in range(length):
        pose = _fit_pose(body, PoseParams(angles=dict(angles), dx=dx, dy=dy), size)
        records.append(render_person(body, pose, size, person_id=person_id, frame_index=i))
        for name in JOINT_NAMES:
            lo, hi = JOINT_LIMITS[name]
            a = angles[name] + float(rng.uniform(-step, step))
            if a < lo:
                a = lo + (lo - a)
            if a > hi:
                a = hi - (a - hi)
            angles[name] = min(max(a, lo), hi)
        dx = float(np.clip(dx + rng.uniform(-0.004, 0.004), -0.025, 0.025))
        dy = float(np.clip(dy + rng.uniform(-0.003, 0.003), -0.015, 0.015))
    return records


# ---------------------------------------------------------------------------
# Dataset container and IO
# ---------------------------------------------------------------------------


@dataclass
class Dataset:
    by_person: dict[str, list[SampleRecord]]
    size: tuple[int, int]  # (H, W)

    @property
    def records(self) -> list[SampleRecord]:
        return [r for recs in self.by_person.values() for r in recs]

    @property
    def persons(self) -> list[str]:
        return list(self.by_person.keys())


def generate_dataset(
    persons: int,
    frames: int,
    size: tuple[int, int],
    seed: int,
    max_joint_step_deg: float = 7.0,
) -> Dataset:
    rng = np.random.default_rng(seed)
    by_person: dict[str, list[SampleRecord]] = {}
    for p in range(persons):
        pid = f"p{p:03d}"
        body = sample_body(rng)
        seq_seed = int(rng.integers(0, 2**31 - 1))
        by_person[pid] = sample_sequence(
            body, frames, seq_seed, size=size, person_id=pid, max_joint_step_deg=max_joint_step_deg
        )
    return Dataset(by_person=by_person, size=size)


def sample_training_pair(
    dataset: Dataset, window: int = 250, rng: np.random.Generator | None = None
) -> tuple[SampleRecord, SampleRecord]:
    """Same-person pair with |frame_a - frame_b| <= window.

    The first record is the identity/parsing source, the second carries
    the driving pose and the reconstruction target.
    """
    if rng is None:
        rng = np.random.default_rng()
    persons = [p for p, recs in dataset.by_person.items() if recs]
    if not persons:
        raise ExhaustionError("dataset holds no frames")
    pid = persons[int(rng.integers(len(persons)))]
    recs = dataset.by_person[pid]
    ia = int(rng.integers(len(recs)))
    lo = max(0, ia - window)
    hi = min(len(recs) - 1, ia + window)
    ib = int(rng.integers(lo, hi + 1))
    return recs[ia], recs[ib]


def write_dataset(dataset: Dataset, out_dir: str | Path) -> None:
    out = Path(out_dir)
    h, w = dataset.size
    lines = ["reenact-dataset 1", f"size {w} {h}"]
    for pid, recs in dataset.by_person.items():
        frames_dir = out / "persons" / pid / "frames"
        frames_dir.mkdir(parents=True, exist_ok=True)
        for rec in recs:
            stem = frames_dir / f"{rec.frame_index:04d}"
            core.encode_frame(rec.frame, f"{stem}.frame.png")
            core.encode_map(rec.parsing, f"{stem}.map.png")
            core.encode_dense(rec.pose.dense, f"{stem}.dense.png")
            core.encode_frame(rec.pose.stick, f"{stem}.stick.png")
            core.encode_keypoints(rec.pose.keypoints, f"{stem}.pose.txt")
            core.encode_frame(rec.background, f"{stem}.bg.png")
        lines.append(f"person {pid} {len(recs)}")
    (out / "manifest").write_text("\n".join(lines) + "\n")


def load_dataset(path: str | Path) -> Dataset:
    root = Path(path)
    manifest = root / "manifest"
    if not manifest.is_file():
        raise FormatError(f"missing manifest in {root}")
    lines = [ln.strip() for ln in manifest.read_text().splitlines() if ln.strip()]
    if not lines or lines[0].split() != ["reenact-dataset", "1"]:
        raise FormatError(f"{manifest}: unknown dataset format header")
    size: tuple[int, int] | None = None
    persons: list[tuple[str, int]] = []
    for ln in lines[1:]:
        parts = ln.split()
        if parts[0] == "size" and len(parts) == 3:
            size = (int(parts[2]), int(parts[1]))
        elif parts[0] == "person" and len(parts) == 3:
            persons.append((parts[1], int(parts[2])))
        else:
            raise FormatError(f"{manifest}: bad line {ln!r}")
    if size is None:
        raise FormatError(f"{manifest}: missing size")

    by_person: dict[str, list[SampleRecord]] = {}
    for pid, count in persons:
        recs = []
        frames_dir = root / "persons" / pid / "frames"
        for i in range(count):
            stem = frames_dir / f"{i:04d}"
            for suffix in (".frame.png", ".map.png", ".dense.png", ".stick.png", ".pose.txt", ".bg.png"):
                if not Path(f"{stem}{suffix}").is_file():
                    raise FormatError(f"missing file {stem}{suffix}")
            frame = core.decode_frame(f"{stem}.frame.png")
            parsing = core.decode_map(f"{stem}.map.png")
            dense = core.decode_dense(f"{stem}.dense.png")
            stick = core.decode_frame(f"{stem}.stick.png")
            kps = core.decode_keypoints(f"{stem}.pose.txt")
            bg = core.decode_frame(f"{stem}.bg.png")
            recs.append(
                SampleRecord(
                    frame=frame,
                    parsing=parsing,
                    pose=PoseBundle(keypoints=kps, stick=stick, dense=dense),
                    person_id=pid,
                    frame_index=i,
                    background=bg,
                )
            )
        by_person[pid] = recs
    return Dataset(by_person=by_person, size=size)
