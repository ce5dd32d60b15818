"""Domain types shared by every stage of the reenactment pipeline.

The lingua franca between stages is the semantic body map: a per-pixel
field of body-part / garment labels. The body label space has 22 entries
(background + 19 garment/skin regions + 2 hand-landmark stroke labels).
Five auxiliary face labels (ids 22..26) extend the space to 27 entries;
they are drawn onto conditioning maps for the frame renderer only and
never appear in body-map generator outputs.

Images are real-valued in [0, 1]; files are 8-bit. All codecs round-trip
bit-exactly for values on the 8-bit grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image


class ReenactError(Exception):
    """Base class for errors raised by this package."""


class ShapeError(ReenactError):
    """Spatial dimensions of inputs do not agree."""


class LabelError(ReenactError):
    """A label id lies outside the active label space."""


class FormatError(ReenactError):
    """A file or manifest does not decode to a valid domain object."""


class ConfigError(ReenactError):
    """Invalid configuration value."""


class PlacementError(ReenactError):
    """A synthetic figure does not fit inside the frame."""


class NoFaceError(ReenactError):
    """Fewer than two visible face landmarks."""


class UnsupportedInputError(ReenactError):
    """An oracle provider received an input it cannot serve."""


class ExhaustionError(ReenactError):
    """No valid sample satisfies the requested constraints."""


class CheckpointError(ReenactError):
    """Checkpoint is corrupt or from an incompatible version."""


class NumericsError(ReenactError):
    """A training loss became non-finite."""


# ---------------------------------------------------------------------------
# Label space
# ---------------------------------------------------------------------------

BODY_LABEL_NAMES = (
    "background",
    "hair",
    "face",
    "torso_skin",
    "upper_clothes",
    "coat",
    "dress",
    "pants",
    "skirt",
    "left_arm",
    "right_arm",
    "left_leg",
    "right_leg",
    "left_shoe",
    "right_shoe",
    "socks",
    "hat",
    "glove",
    "scarf",
    "sunglasses",
    "left_hand_marks",
    "right_hand_marks",
)

FACE_LABEL_NAMES = ("eyebrows", "eyes", "nose", "lips", "inner_mouth")

N_BODY_LABELS = len(BODY_LABEL_NAMES)  # 22
N_COND_LABELS = N_BODY_LABELS + len(FACE_LABEL_NAMES)  # 27

LABEL_BACKGROUND = 0
LABEL_HAIR = 1
LABEL_FACE = 2
LABEL_TORSO_SKIN = 3
LABEL_UPPER_CLOTHES = 4
LABEL_COAT = 5
LABEL_DRESS = 6
LABEL_PANTS = 7
LABEL_SKIRT = 8
LABEL_LEFT_ARM = 9
LABEL_RIGHT_ARM = 10
LABEL_LEFT_LEG = 11
LABEL_RIGHT_LEG = 12
LABEL_LEFT_SHOE = 13
LABEL_RIGHT_SHOE = 14
LABEL_SOCKS = 15
LABEL_HAT = 16
LABEL_GLOVE = 17
LABEL_SCARF = 18
LABEL_SUNGLASSES = 19
LABEL_LEFT_HAND = 20
LABEL_RIGHT_HAND = 21
LABEL_EYEBROWS = 22
LABEL_EYES = 23
LABEL_NOSE = 24
LABEL_LIPS = 25
LABEL_INNER_MOUTH = 26


@dataclass(frozen=True)
class LabelSpace:
    """Ordered body labels plus the auxiliary face labels.

    Body ids are contiguous from 0 (background). Ids 20 and 21 are the
    two hand-landmark stroke labels. Face ids 22..26 extend the space
    for renderer conditioning only.
    """

    body_labels: tuple[str, ...] = BODY_LABEL_NAMES
    face_labels: tuple[str, ...] = FACE_LABEL_NAMES

    @property
    def n_body(self) -> int:
        return len(self.body_labels)

    @property
    def n_cond(self) -> int:
        return len(self.body_labels) + len(self.face_labels)

    def id_of(self, name: str) -> int:
        if name in self.body_labels:
            return self.body_labels.index(name)
        if name in self.face_labels:
            return self.n_body + self.face_labels.index(name)
        raise LabelError(f"unknown label name: {name!r}")

    def to_meta(self) -> dict:
        return {"body_labels": list(self.body_labels), "face_labels": list(self.face_labels)}

    @classmethod
    def from_meta(cls, meta: dict) -> "LabelSpace":
        return cls(tuple(meta["body_labels"]), tuple(meta["face_labels"]))


# Coarse body-region groups used by the dense-pose-style metrics. Labels
# and dense part indices map into one shared group space so generated
# maps and ground-truth dense annotation are comparable.
GROUP_BACKGROUND = 0
GROUP_HEAD = 1
GROUP_TORSO = 2
GROUP_LEFT_ARM = 3
GROUP_RIGHT_ARM = 4
GROUP_LEGS = 5
GROUP_FEET = 6
N_GROUPS = 7

LABEL_TO_GROUP = np.zeros(N_COND_LABELS, dtype=np.uint8)
for _lbl, _grp in {
    LABEL_HAIR: GROUP_HEAD,
    LABEL_FACE: GROUP_HEAD,
    LABEL_HAT: GROUP_HEAD,
    LABEL_SUNGLASSES: GROUP_HEAD,
    LABEL_TORSO_SKIN: GROUP_TORSO,
    LABEL_UPPER_CLOTHES: GROUP_TORSO,
    LABEL_COAT: GROUP_TORSO,
    LABEL_DRESS: GROUP_TORSO,
    LABEL_SCARF: GROUP_TORSO,
    LABEL_LEFT_ARM: GROUP_LEFT_ARM,
    LABEL_LEFT_HAND: GROUP_LEFT_ARM,
    LABEL_GLOVE: GROUP_LEFT_ARM,  # side is ambiguous; generator never emits it
    LABEL_RIGHT_ARM: GROUP_RIGHT_ARM,
    LABEL_RIGHT_HAND: GROUP_RIGHT_ARM,
    LABEL_PANTS: GROUP_LEGS,
    LABEL_SKIRT: GROUP_LEGS,
    LABEL_LEFT_LEG: GROUP_LEGS,
    LABEL_RIGHT_LEG: GROUP_LEGS,
    LABEL_LEFT_SHOE: GROUP_FEET,
    LABEL_RIGHT_SHOE: GROUP_FEET,
    LABEL_SOCKS: GROUP_FEET,
    LABEL_EYEBROWS: GROUP_HEAD,
    LABEL_EYES: GROUP_HEAD,
    LABEL_NOSE: GROUP_HEAD,
    LABEL_LIPS: GROUP_HEAD,
    LABEL_INNER_MOUTH: GROUP_HEAD,
}.items():
    LABEL_TO_GROUP[_lbl] = _grp

# Dense body-surface part indices (channel I of the dense render), all <= 24.
DENSE_TORSO = 1
DENSE_RIGHT_HAND = 3
DENSE_LEFT_HAND = 4
DENSE_LEFT_FOOT = 5
DENSE_RIGHT_FOOT = 6
DENSE_RIGHT_THIGH = 7
DENSE_LEFT_THIGH = 8
DENSE_RIGHT_SHIN = 11
DENSE_LEFT_SHIN = 12
DENSE_LEFT_UPPER_ARM = 15
DENSE_RIGHT_UPPER_ARM = 16
DENSE_LEFT_FOREARM = 19
DENSE_RIGHT_FOREARM = 20
DENSE_HEAD = 23
DENSE_PART_MAX = 24

DENSE_TO_GROUP = np.zeros(DENSE_PART_MAX + 1, dtype=np.uint8)
for _part, _grp in {
    DENSE_TORSO: GROUP_TORSO,
    DENSE_RIGHT_HAND: GROUP_RIGHT_ARM,
    DENSE_LEFT_HAND: GROUP_LEFT_ARM,
    DENSE_LEFT_FOOT: GROUP_FEET,
    DENSE_RIGHT_FOOT: GROUP_FEET,
    DENSE_RIGHT_THIGH: GROUP_LEGS,
    DENSE_LEFT_THIGH: GROUP_LEGS,
    DENSE_RIGHT_SHIN: GROUP_LEGS,
    DENSE_LEFT_SHIN: GROUP_LEGS,
    DENSE_LEFT_UPPER_ARM: GROUP_LEFT_ARM,
    DENSE_RIGHT_UPPER_ARM: GROUP_RIGHT_ARM,
    DENSE_LEFT_FOREARM: GROUP_LEFT_ARM,
    DENSE_RIGHT_FOREARM: GROUP_RIGHT_ARM,
    DENSE_HEAD: GROUP_HEAD,
}.items():
    DENSE_TO_GROUP[_part] = _grp


def _make_palette(n: int) -> np.ndarray:
    """Fixed, maximally distinct 8-bit palette for indexed map files."""
    base = np.array(
        [
            (0, 0, 0),
            (128, 0, 0),
            (255, 0, 0),
            (0, 85, 0),
            (170, 0, 51),
            (255, 85, 0),
            (0, 0, 85),
            (0, 119, 221),
            (85, 85, 0),
            (0, 85, 85),
            (85, 51, 0),
            (52, 86, 128),
            (0, 128, 0),
            (0, 0, 255),
            (51, 170, 221),
            (0, 255, 255),
            (85, 255, 170),
            (170, 255, 85),
            (255, 255, 0),
            (255, 170, 0),
            (255, 0, 255),
            (0, 255, 0),
            (189, 16, 224),
            (64, 224, 208),
            (255, 105, 180),
            (139, 69, 19),
            (112, 128, 144),
        ],
        dtype=np.uint8,
    )
    if n > len(base):
        raise LabelError(f"palette has {len(base)} entries, need {n}")
    return base[:n].copy()


MAP_PALETTE = _make_palette(N_COND_LABELS)


# ---------------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------------


@dataclass
class SemanticMap:
    """Per-pixel body-part label field."""

    labels: np.ndarray  # (H, W) uint8
    n_labels: int = N_BODY_LABELS

    def __post_init__(self) -> None:
        self.labels = np.asarray(self.labels)
        if self.labels.ndim != 2:
            raise ShapeError(f"label field must be 2D, got shape {self.labels.shape}")
        if self.labels.size == 0:
            raise ShapeError("empty label field")
        if self.labels.dtype != np.uint8:
            if self.labels.min() < 0:
                raise LabelError("negative label id")
            self.labels = self.labels.astype(np.uint8)
        if int(self.labels.max(initial=0)) >= self.n_labels:
            raise LabelError(
                f"label id {int(self.labels.max())} outside space of {self.n_labels}"
            )

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    def copy(self) -> "SemanticMap":
        return SemanticMap(self.labels.copy(), self.n_labels)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SemanticMap):
            return NotImplemented
        return self.n_labels == other.n_labels and np.array_equal(self.labels, other.labels)


@dataclass
class Frame:
    """3-channel real image with values clamped to [0, 1]."""

    values: np.ndarray  # (H, W, 3) float64

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or v.shape[2] != 3:
            raise ShapeError(f"frame must be (H, W, 3), got {v.shape}")
        if v.shape[0] == 0 or v.shape[1] == 0:
            raise ShapeError("empty frame")
        self.values = np.clip(v, 0.0, 1.0)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def copy(self) -> "Frame":
        return Frame(self.values.copy())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Frame):
            return NotImplemented
        return np.array_equal(self.values, other.values)


@dataclass
class BlendMask:
    """1-channel alpha field in [0, 1]."""

    values: np.ndarray  # (H, W) float64

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ShapeError(f"mask must be 2D, got {v.shape}")
        if v.size and (v.min() < 0.0 or v.max() > 1.0):
            raise ShapeError("mask values outside [0, 1]")
        self.values = v

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Keypoint:
    name: str
    x: float
    y: float
    visible: bool = True


@dataclass
class KeypointSet:
    """Named 2D landmarks with visibility, in pixel coordinates."""

    points: list[Keypoint] = field(default_factory=list)

    def __iter__(self):
        return iter(self.points)

    def __len__(self) -> int:
        return len(self.points)

    def get(self, name: str) -> Keypoint:
        for p in self.points:
            if p.name == name:
                return p
        raise KeyError(name)

    def has(self, name: str) -> bool:
        return any(p.name == name for p in self.points)

    def subset(self, prefix: str) -> list[Keypoint]:
        return [p for p in self.points if p.name.startswith(prefix)]

    def visible_subset(self, prefix: str) -> list[Keypoint]:
        return [p for p in self.points if p.visible and p.name.startswith(prefix)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, KeypointSet):
            return NotImplemented
        return self.points == other.points


@dataclass
class PoseBundle:
    """Per-frame driving signals: landmarks, stick render, dense render.

    ``dense`` holds channels (U, V, I): U and V are body-surface
    coordinates in [0, 1] quantized to the 8-bit grid, I is an integer
    part index in {0..24} stored as float.
    """

    keypoints: KeypointSet
    stick: Frame
    dense: np.ndarray  # (H, W, 3) float64

    def __post_init__(self) -> None:
        d = np.asarray(self.dense, dtype=np.float64)
        if d.ndim != 3 or d.shape[2] != 3:
            raise ShapeError(f"dense render must be (H, W, 3), got {d.shape}")
        if d.shape[:2] != (self.stick.height, self.stick.width):
            raise ShapeError("stick and dense renders must share spatial dims")
        if d[..., 2].max(initial=0) > DENSE_PART_MAX:
            raise LabelError("dense part index above 24")
        self.dense = d

    @property
    def height(self) -> int:
        return self.stick.height

    @property
    def width(self) -> int:
        return self.stick.width

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PoseBundle):
            return NotImplemented
        return (
            self.keypoints == other.keypoints
            and self.stick == other.stick
            and np.array_equal(self.dense, other.dense)
        )


# ---------------------------------------------------------------------------
# Core operations
# ---------------------------------------------------------------------------


def one_hot(semantic_map: SemanticMap, n_labels: int) -> np.ndarray:
    """Expand a label field to an (n_labels, H, W) indicator stack."""
    labels = semantic_map.labels
    if int(labels.max(initial=0)) >= n_labels:
        raise LabelError(f"label id {int(labels.max())} >= {n_labels}")
    out = np.zeros((n_labels,) + labels.shape, dtype=np.float64)
    rows, cols = np.indices(labels.shape)
    out[labels, rows, cols] = 1.0
    return out


def binarize(semantic_map: SemanticMap) -> BlendMask:
    """Foreground indicator: 1 where the label is not background."""
    return BlendMask((semantic_map.labels != LABEL_BACKGROUND).astype(np.float64))


def blend(z: Frame, m: BlendMask, b: Frame) -> Frame:
    """Composite a generated frame over a background: z*m + b*(1-m)."""
    if (z.height, z.width) != (m.height, m.width) or (b.height, b.width) != (m.height, m.width):
        raise ShapeError(
            f"blend inputs disagree: z {z.values.shape}, m {m.values.shape}, b {b.values.shape}"
        )
    alpha = m.values[..., None]
    return Frame(z.values * alpha + b.values * (1.0 - alpha))


# ---------------------------------------------------------------------------
# Codecs
# ---------------------------------------------------------------------------


def encode_map(semantic_map: SemanticMap, path: str | Path) -> None:
    """Write a label field as an indexed image with the shared palette."""
    img = Image.fromarray(semantic_map.labels, mode="P")
    img.putpalette(MAP_PALETTE.flatten().tolist())
    img.save(Path(path), format="PNG")


def decode_map(path: str | Path, n_labels: int = N_BODY_LABELS) -> SemanticMap:
    with Image.open(Path(path)) as img:
        if img.mode != "P":
            raise FormatError(f"{path}: expected an indexed image, got mode {img.mode}")
        arr = np.asarray(img, dtype=np.uint8)
    if arr.size == 0:
        raise FormatError(f"{path}: empty map")
    if int(arr.max()) >= n_labels:
        raise FormatError(f"{path}: palette index {int(arr.max())} outside {n_labels} labels")
    return SemanticMap(arr, n_labels)


def encode_frame(frame: Frame, path: str | Path) -> None:
    arr = np.round(frame.values * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(Path(path), format="PNG")


def decode_frame(path: str | Path) -> Frame:
    with Image.open(Path(path)) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    if arr.size == 0:
        raise FormatError(f"{path}: empty frame")
    return Frame(arr / 255.0)


def encode_mask(mask: BlendMask, path: str | Path) -> None:
    arr = np.round(mask.values * 255.0).astype(np.uint8)
    Image.fromarray(arr, mode="L").save(Path(path), format="PNG")


def decode_mask(path: str | Path) -> BlendMask:
    with Image.open(Path(path)) as img:
        arr = np.asarray(img.convert("L"), dtype=np.float64)
    return BlendMask(arr / 255.0)


def encode_dense(dense: np.ndarray, path: str | Path) -> None:
    """Write a dense render; channel 2 holds the part index verbatim."""
    d = np.asarray(dense, dtype=np.float64)
    arr = np.empty(d.shape, dtype=np.uint8)
    arr[..., 0] = np.round(d[..., 0] * 255.0)
    arr[..., 1] = np.round(d[..., 1] * 255.0)
    arr[..., 2] = np.round(d[..., 2])
    Image.fromarray(arr, mode="RGB").save(Path(path), format="PNG")


def decode_dense(path: str | Path) -> np.ndarray:
    with Image.open(Path(path)) as img:
        arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    if arr[..., 2].max(initial=0) > DENSE_PART_MAX:
        raise FormatError(f"{path}: dense part index above {DENSE_PART_MAX}")
    out = np.empty(arr.shape, dtype=np.float64)
    out[..., 0] = arr[..., 0] / 255.0
    out[..., 1] = arr[..., 1] / 255.0
    out[..., 2] = arr[..., 2]
    return out


def encode_keypoints(kps: KeypointSet, path: str | Path) -> None:
    lines = [f"{p.name} {p.x!r} {p.y!r} {int(p.visible)}" for p in kps]
    Path(path).write_text("\n".join(lines) + "\n")


def decode_keypoints(path: str | Path) -> KeypointSet:
    points = []
    for ln in Path(path).read_text().splitlines():
        ln = ln.strip()
        if not ln:
            continue
        parts = ln.split()
        if len(parts) != 4:
            raise FormatError(f"{path}: bad keypoint record {ln!r}")
        name, xs, ys, vs = parts
        try:
            points.append(Keypoint(name, float(xs), float(ys), bool(int(vs))))
        except ValueError as exc:
            raise FormatError(f"{path}: bad keypoint record {ln!r}") from exc
    return KeypointSet(points)
