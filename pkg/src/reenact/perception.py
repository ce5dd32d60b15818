"""Provider interfaces for the pretrained perception stack.

Real deployments would wrap heavyweight parsing / pose / embedding /
inpainting networks. At desk scale each provider is an oracle over
synthetic records (which carry exact annotation) or a small fixed-seed
convolutional embedder. Signatures are kept image-in / annotation-out
so real wrappers could be swapped in later.

Every provider counts its calls; the pipeline uses the counters to
assert that per-person constants are computed exactly once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .config import ProviderConfig
from .core import (
    BlendMask,
    ConfigError,
    Frame,
    KeypointSet,
    NoFaceError,
    SemanticMap,
    UnsupportedInputError,
)
from .synthdata import SampleRecord


@dataclass
class FaceBox:
    """Square crop window in frame pixels, resized to out_size on extract."""

    x0: float
    y0: float
    side: float
    out_size: int = 224
    valid: bool = True

    def as_slices(self) -> tuple[slice, slice]:
        x0, y0 = int(round(self.x0)), int(round(self.y0))
        side = max(1, int(round(self.side)))
        return slice(y0, y0 + side), slice(x0, x0 + side)


def face_box(
    kps: KeypointSet,
    out_size: int = 224,
    margin: float = 0.25,
    frame_size: tuple[int, int] | None = None,
) -> FaceBox:
    """Square box over the visible face landmarks, clamped to the frame."""
    pts = kps.visible_subset("face_")
    if len(pts) < 2:
        raise NoFaceError(f"need >= 2 visible face landmarks, found {len(pts)}")
    xs = np.array([p.x for p in pts])
    ys = np.array([p.y for p in pts])
    cx, cy = (xs.min() + xs.max()) / 2.0, (ys.min() + ys.max()) / 2.0
    side = max(xs.max() - xs.min(), ys.max() - ys.min()) * (1.0 + margin)
    side = max(side, 2.0)
    x0, y0 = cx - side / 2.0, cy - side / 2.0
    if frame_size is not None:
        h, w = frame_size
        side = min(side, float(min(h, w)))
        x0 = min(max(x0, 0.0), w - side)
        y0 = min(max(y0, 0.0), h - side)
    return FaceBox(x0=x0, y0=y0, side=side, out_size=out_size)


def crop_resize(frame: Frame, box: FaceBox) -> np.ndarray:
    """Extract the box region and resize to (out, out, 3), bilinear."""
    rs, cs = box.as_slices()
    patch = frame.values[rs, cs]
    if patch.size == 0:
        return np.zeros((box.out_size, box.out_size, 3), dtype=np.float64)
    t = torch.from_numpy(np.ascontiguousarray(patch.transpose(2, 0, 1)))[None]
    out = F.interpolate(t, size=(box.out_size, box.out_size), mode="bilinear", align_corners=False)
    return out[0].numpy().transpose(1, 2, 0)


def paste_crop(frame_values: np.ndarray, box: FaceBox, patch: np.ndarray) -> np.ndarray:
    """Resize a crop back to the box side and return it (no compositing)."""
    rs, cs = box.as_slices()
    side_h, side_w = rs.stop - rs.start, cs.stop - cs.start
    t = torch.from_numpy(np.ascontiguousarray(patch.transpose(2, 0, 1)))[None]
    out = F.interpolate(t, size=(side_h, side_w), mode="bilinear", align_corners=False)
    return out[0].numpy().transpose(1, 2, 0)


# ---------------------------------------------------------------------------
# Oracles over synthetic records
# ---------------------------------------------------------------------------


def _require_record(x, who: str) -> SampleRecord:
    if not isinstance(x, SampleRecord):
        raise UnsupportedInputError(
            f"{who} oracle serves synthetic records only, got {type(x).__name__}"
        )
    return x


class OracleHumanParser:
    """Returns the generator's exact parsing for a synthetic record."""

    def __init__(self) -> None:
        self.calls = 0

    def parse(self, image) -> SemanticMap:
        self.calls += 1
        return _require_record(image, "human parsing").parsing.copy()


class OracleKeypointDetector:
    """Returns exact keypoints and the stored stick render."""

    def __init__(self) -> None:
        self.calls = 0

    def detect(self, image) -> tuple[KeypointSet, Frame]:
        self.calls += 1
        rec = _require_record(image, "keypoint")
        return KeypointSet(list(rec.pose.keypoints.points)), rec.pose.stick.copy()


class OracleDenseMapper:
    """Returns the stored body-surface (U, V, part) render."""

    def __init__(self) -> None:
        self.calls = 0

    def map(self, image) -> np.ndarray:
        self.calls += 1
        return _require_record(image, "dense surface").pose.dense.copy()


class OracleInpainter:
    """Replaces masked pixels with the record's background layer."""

    def __init__(self) -> None:
        self.calls = 0

    def inpaint(self, image: Frame, mask: BlendMask, record: SampleRecord | None = None) -> Frame:
        self.calls += 1
        if record is None:
            raise UnsupportedInputError("inpainting oracle needs the source record")
        if (image.height, image.width) != (mask.height, mask.width):
            raise UnsupportedInputError("image and mask dims disagree")
        m = mask.values[..., None]
        return Frame(record.background.values * m + image.values * (1.0 - m))


# ---------------------------------------------------------------------------
# Toy embedders
# ---------------------------------------------------------------------------

_TAP_NAMES = ("low", "mid", "high", "embed")


class ToyEmbedder(nn.Module):
    """Small frozen convolutional encoder with named activation taps.

    Taps sit at strides 1, 4 and 16 plus the pooled embedding. Weights
    are drawn from a fixed seed and rescaled so each layer's operator
    norm is bounded; the product of the bounds is exposed as
    ``lipschitz_bound`` (valid for the embedding under L2 norms).
    """

    def __init__(
        self,
        kind: str,
        dim: int,
        seed: int,
        layer_spec: tuple[str, ...] = _TAP_NAMES,
        channels: tuple[int, int, int] = (8, 16, 32),
    ) -> None:
        super().__init__()
        if dim <= 0:
            raise ConfigError("embedder dim must be positive")
        if not layer_spec:
            raise ConfigError("layer_spec must name at least one tap")
        unknown = set(layer_spec) - set(_TAP_NAMES)
        if unknown:
            raise ConfigError(f"unknown taps {sorted(unknown)}; known: {_TAP_NAMES}")
        self.kind = kind
        self.dim = dim
        self.layer_spec = tuple(layer_spec)
        self.calls = 0
        c0, c1, c2 = channels
        gen = torch.Generator().manual_seed(seed)

        def conv(ci: int, co: int, stride: int) -> nn.Conv2d:
            # unit-gain init keeps tap activations O(1) at any depth
            m = nn.Conv2d(ci, co, kernel_size=3, stride=stride, padding=1)
            sigma = (2.0 / (ci * 9)) ** 0.5
            with torch.no_grad():
                m.weight.copy_(torch.randn(m.weight.shape, generator=gen) * sigma)
                m.bias.copy_(torch.randn(m.bias.shape, generator=gen) * 0.02)
            return m

        self.conv0 = conv(3, c0, 1)
        self.conv1 = conv(c0, c1, 2)
        self.conv2 = conv(c1, c1, 2)
        self.conv3 = conv(c1, c2, 2)
        self.conv4 = conv(c2, c2, 2)
        self.fc = nn.Linear(c2, dim)
        with torch.no_grad():
            fc_sigma = (1.0 / c2) ** 0.5
            self.fc.weight.copy_(torch.randn(self.fc.weight.shape, generator=gen) * fc_sigma)
            self.fc.bias.copy_(torch.randn(self.fc.bias.shape, generator=gen) * 0.02)

        # clip each layer's L2 operator-norm bound; rarely binds with the
        # init above, but keeps the product finite and certified
        self.lipschitz_bound = 1.0
        target = 24.0
        with torch.no_grad():
            for m in (self.conv0, self.conv1, self.conv2, self.conv3, self.conv4):
                k = m.kernel_size[0]
                bound = k * float(m.weight.flatten().norm())
                if bound > target:
                    m.weight.mul_(target / bound)
                    bound = target
                self.lipschitz_bound *= bound
            fc_bound = float(self.fc.weight.norm())
            if fc_bound > target:
                self.fc.weight.mul_(target / fc_bound)
                fc_bound = target
            self.lipschitz_bound *= fc_bound
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, dict[str, torch.Tensor]]:
        taps: dict[str, torch.Tensor] = {}
        h = F.relu(self.conv0(x))
        taps["low"] = h
        h = F.relu(self.conv1(h))
        h = F.relu(self.conv2(h))
        taps["mid"] = h
        h = F.relu(self.conv3(h))
        h = F.relu(self.conv4(h))
        taps["high"] = h
        emb = self.fc(h.mean(dim=(2, 3)))
        taps["embed"] = emb
        return emb, {k: taps[k] for k in self.layer_spec}

    def activations(self, x: torch.Tensor) -> dict[str, torch.Tensor]:
        self.calls += 1
        return self.forward(x)[1]

    def embed(self, x: torch.Tensor) -> torch.Tensor:
        self.calls += 1
        return self.forward(x)[0]

    def embed_array(self, image: np.ndarray) -> np.ndarray:
        """Embed one (H, W, 3) array in [0, 1]; counts as a call."""
        t = torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1))).float()[None]
        with torch.no_grad():
            emb = self.embed(t)
        return emb[0].numpy().astype(np.float64)


@dataclass
class PerceptionProviders:
    """The full provider bundle consumed by trainers and the pipeline."""

    hp: OracleHumanParser = field(default_factory=OracleHumanParser)
    op: OracleKeypointDetector = field(default_factory=OracleKeypointDetector)
    dp: OracleDenseMapper = field(default_factory=OracleDenseMapper)
    inpaint: OracleInpainter = field(default_factory=OracleInpainter)
    face_embed: ToyEmbedder | None = None
    image_embed: ToyEmbedder | None = None
    face_margin: float = 0.25
    inpaint_dilate: int = 2

    @classmethod
    def build(cls, cfg: ProviderConfig) -> "PerceptionProviders":
        return cls(
            face_embed=ToyEmbedder("face", cfg.face_dim, seed=cfg.seed),
            image_embed=ToyEmbedder("image", cfg.image_dim, seed=cfg.seed + 1),
            face_margin=cfg.face_margin,
            inpaint_dilate=cfg.inpaint_dilate,
        )

    def face_align(self, kps: KeypointSet, out_size: int, frame_size: tuple[int, int]) -> FaceBox:
        return face_box(kps, out_size=out_size, margin=self.face_margin, frame_size=frame_size)

    def call_counts(self) -> dict[str, int]:
        counts = {
            "hp": self.hp.calls,
            "op": self.op.calls,
            "dp": self.dp.calls,
            "inpaint": self.inpaint.calls,
        }
        if self.face_embed is not None:
            counts["face_embed"] = self.face_embed.calls
        if self.image_embed is not None:
            counts["image_embed"] = self.image_embed.calls
        return counts
