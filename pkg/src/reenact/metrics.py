"""Evaluation suite: IoU-family map similarity, SSIM, embedder-space
perceptual distance, and Frechet distance over embedding sets.

Map similarity comes in two flavors per annotation source. The parsing
flavor compares body-part label maps directly (binary IoU of the
silhouettes, and the mean of per-label IoU over labels present in the
ground truth). The body-surface flavor compares coarse body-region
groups: the ground-truth side is derived from the dense part-index
channel, the generated side from the generated label map, both through
fixed part-to-group tables, so the two sides live in one label space.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from scipy import ndimage

from . import core
from .core import Frame, SemanticMap, ShapeError
from .perception import PerceptionProviders, ToyEmbedder

METRIC_DIRECTIONS = {
    "ssbs": "higher",
    "ssis": "higher",
    "dpbs": "higher",
    "dpis": "higher",
    "ssim": "higher",
    "lpips": "lower",
    "fid": "lower",
}


# ---------------------------------------------------------------------------
# IoU family
# ---------------------------------------------------------------------------


def binary_similarity(gt_map: SemanticMap, gen_map: SemanticMap) -> float:
    """IoU of the foreground silhouettes; empty-vs-empty counts as 1."""
    if gt_map.labels.shape != gen_map.labels.shape:
        raise ShapeError("maps differ in size")
    gt = gt_map.labels != core.LABEL_BACKGROUND
    gen = gen_map.labels != core.LABEL_BACKGROUND
    union = int(np.logical_or(gt, gen).sum())
    if union == 0:
        return 1.0
    inter = int(np.logical_and(gt, gen).sum())
    return float(inter) / float(union)


def index_similarity(gt_map: SemanticMap, gen_map: SemanticMap) -> float:
    """Mean per-label IoU over foreground labels present in the ground truth.

    Labels absent from the ground truth are excluded from the mean;
    a label missing from the generated map scores 0.
    """
    if gt_map.labels.shape != gen_map.labels.shape:
        raise ShapeError("maps differ in size")
    gt, gen = gt_map.labels, gen_map.labels
    labels = [int(l) for l in np.unique(gt) if l != core.LABEL_BACKGROUND]
    if not labels:
        return 1.0 if not (gen != core.LABEL_BACKGROUND).any() else 0.0
    ious = []
    for lbl in labels:
        a = gt == lbl
        b = gen == lbl
        union = int(np.logical_or(a, b).sum())
        inter = int(np.logical_and(a, b).sum())
        ious.append(float(inter) / float(union))
    return float(sum(ious) / len(ious))


def group_map_from_labels(semantic_map: SemanticMap) -> SemanticMap:
    """Coarse body-region map derived from a parsing map."""
    return SemanticMap(core.LABEL_TO_GROUP[semantic_map.labels], core.N_GROUPS)


def group_map_from_dense(dense: np.ndarray) -> SemanticMap:
    """Coarse body-region map derived from a dense part-index channel."""
    parts = np.round(dense[..., 2]).astype(np.int64)
    if parts.max(initial=0) > core.DENSE_PART_MAX or parts.min(initial=0) < 0:
        raise core.LabelError("dense part index outside 0..24")
    return SemanticMap(core.DENSE_TO_GROUP[parts], core.N_GROUPS)


# ---------------------------------------------------------------------------
# SSIM
# ---------------------------------------------------------------------------

_SSIM_C1 = 0.01**2
_SSIM_C2 = 0.03**2


def _gaussian_kernel(radius: int = 5, sigma: float = 1.5) -> np.ndarray:
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(offsets**2) / (2.0 * sigma**2))
    k /= k.sum()
    return np.outer(k, k)


_SSIM_WINDOW = _gaussian_kernel()


def to_gray(frame: Frame) -> np.ndarray:
    v = frame.values
    return 0.299 * v[..., 0] + 0.587 * v[..., 1] + 0.114 * v[..., 2]


def ssim(a: Frame, b: Frame) -> float:
    """Structural similarity on the grayscale images.

    11x11 Gaussian window (sigma 1.5), stabilizers (0.01)^2 and
    (0.03)^2 on the unit value range, statistics from the valid
    (fully-covered) region only.
    """
    if (a.height, a.width) != (b.height, b.width):
        raise ShapeError("frames differ in size")
    x = to_gray(a)
    y = to_gray(b)
    r = _SSIM_WINDOW.shape[0] // 2
    if x.shape[0] < 2 * r + 1 or x.shape[1] < 2 * r + 1:
        raise ShapeError(f"frames must be at least {2 * r + 1} pixels per side")

    def win(img: np.ndarray) -> np.ndarray:
        full = ndimage.convolve(img, _SSIM_WINDOW, mode="constant")
        return full[r:-r, r:-r]

    mu_x = win(x)
    mu_y = win(y)
    var_x = win(x * x) - mu_x**2
    var_y = win(y * y) - mu_y**2
    cov = win(x * y) - mu_x * mu_y
    num = (2 * mu_x * mu_y + _SSIM_C1) * (2 * cov + _SSIM_C2)
    den = (mu_x**2 + mu_y**2 + _SSIM_C1) * (var_x + var_y + _SSIM_C2)
    return float((num / den).mean())


# ---------------------------------------------------------------------------
# Embedder-space metrics
# ---------------------------------------------------------------------------


def perceptual_distance(a: Frame, b: Frame, embedder: ToyEmbedder) -> float:
    """Sum over taps of mean squared difference of unit-normalized features."""
    if (a.height, a.width) != (b.height, b.width):
        raise ShapeError("frames differ in size")

    def prep(frame: Frame) -> torch.Tensor:
        arr = frame.values.transpose(2, 0, 1).astype(np.float32)
        return torch.from_numpy(arr)[None]

    with torch.no_grad():
        acts_a = embedder.activations(prep(a))
        acts_b = embedder.activations(prep(b))
    total = 0.0
    for name in acts_a:
        fa, fb = acts_a[name], acts_b[name]
        if fa.dim() == 2:
            fa = fa[:, :, None, None]
            fb = fb[:, :, None, None]
        na = fa / (fa.norm(dim=1, keepdim=True) + 1e-10)
        nb = fb / (fb.norm(dim=1, keepdim=True) + 1e-10)
        total += float(((na - nb) ** 2).mean().item())
    return total


def fid(features_real: np.ndarray, features_gen: np.ndarray, eps: float = 1e-6) -> float:
    """Frechet distance between Gaussian fits of two feature sets."""
    fr = np.asarray(features_real, dtype=np.float64)
    fg = np.asarray(features_gen, dtype=np.float64)
    if fr.ndim != 2 or fg.ndim != 2:
        raise ShapeError("feature sets must be (n, dim) arrays")
    if fr.shape[0] < 2 or fg.shape[0] < 2:
        raise ShapeError("need at least 2 samples per feature set")
    mu_r, mu_g = fr.mean(axis=0), fg.mean(axis=0)
    cov_r = np.cov(fr, rowvar=False) + eps * np.eye(fr.shape[1])
    cov_g = np.cov(fg, rowvar=False) + eps * np.eye(fg.shape[1])

    def sqrt_psd(mat: np.ndarray) -> np.ndarray:
        vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
        vals = np.clip(vals, 0.0, None)
        return (vecs * np.sqrt(vals)) @ vecs.T

    s = sqrt_psd(cov_r)
    cross = sqrt_psd(s @ cov_g @ s)
    diff = mu_r - mu_g
    value = float(diff @ diff + np.trace(cov_r) + np.trace(cov_g) - 2.0 * np.trace(cross))
    return max(value, 0.0)


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------


@dataclass
class MetricReport:
    metrics: dict[str, dict]  # name -> {value, direction, per_frame}
    metadata: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"schema": 1, "metadata": self.metadata, "metrics": self.metrics}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        obj = json.loads(text)
        if obj.get("schema") != 1:
            raise core.FormatError("unknown report schema")
        return cls(metrics=obj["metrics"], metadata=obj["metadata"])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "MetricReport":
        return cls.from_json(Path(path).read_text())

    def value(self, name: str) -> float:
        return self.metrics[name]["value"]


def _file_digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()[:16]


def _frame_stems(d: Path) -> list[str]:
    return sorted(p.name[: -len(".frame.png")] for p in d.glob("*.frame.png"))


def evaluate(
    run_dir: str | Path,
    gt_dir: str | Path,
    providers: PerceptionProviders,
    metric_names: tuple[str, ...] = tuple(METRIC_DIRECTIONS),
    metadata: dict | None = None,
) -> MetricReport:
    """Score a generated frame directory against an aligned ground truth.

    Both directories hold numbered ``*.frame.png`` files; map files
    (``*.map.png``) feed the parsing metrics and the ground-truth side's
    ``*.dense.png`` feeds the body-surface metrics. Frames are paired
    by sorted order and counts must agree.
    """
    run, gt = Path(run_dir), Path(gt_dir)
    unknown = set(metric_names) - set(METRIC_DIRECTIONS)
    if unknown:
        raise core.ConfigError(f"unknown metrics {sorted(unknown)}")
    run_stems = _frame_stems(run)
    gt_stems = _frame_stems(gt)
    if len(run_stems) != len(gt_stems) or not run_stems:
        raise ShapeError(
            f"frame counts disagree: {len(run_stems)} generated vs {len(gt_stems)} ground truth"
        )

    per_frame: dict[str, list[float]] = {m: [] for m in metric_names if m != "fid"}
    feats_real: list[np.ndarray] = []
    feats_gen: list[np.ndarray] = []
    want_maps = any(m in metric_names for m in ("ssbs", "ssis", "dpbs", "dpis"))

    for rs, gs in zip(run_stems, gt_stems):
        gen_frame = core.decode_frame(run / f"{rs}.frame.png")
        gt_frame = core.decode_frame(gt / f"{gs}.frame.png")
        if want_maps:
            gen_map = core.decode_map(run / f"{rs}.map.png")
            gt_map = core.decode_map(gt / f"{gs}.map.png")
        if "ssbs" in per_frame:
            per_frame["ssbs"].append(binary_similarity(gt_map, gen_map))
        if "ssis" in per_frame:
            per_frame["ssis"].append(index_similarity(gt_map, gen_map))
        if "dpbs" in per_frame or "dpis" in per_frame:
            gt_dense = core.decode_dense(gt / f"{gs}.dense.png")
            gt_groups = group_map_from_dense(gt_dense)
            gen_groups = group_map_from_labels(gen_map)
            if "dpbs" in per_frame:
                per_frame["dpbs"].append(binary_similarity(gt_groups, gen_groups))
            if "dpis" in per_frame:
                per_frame["dpis"].append(index_similarity(gt_groups, gen_groups))
        if "ssim" in per_frame:
            per_frame["ssim"].append(ssim(gt_frame, gen_frame))
        if "lpips" in per_frame:
            per_frame["lpips"].append(perceptual_distance(gt_frame, gen_frame, providers.image_embed))
        if "fid" in metric_names:
            feats_real.append(providers.image_embed.embed_array(gt_frame.values))
            feats_gen.append(providers.image_embed.embed_array(gen_frame.values))

    metrics: dict[str, dict] = {}
    for name in metric_names:
        if name == "fid":
            metrics[name] = {
                "value": fid(np.stack(feats_real), np.stack(feats_gen)),
                "direction": METRIC_DIRECTIONS[name],
                "per_frame": None,
            }
        else:
            series = per_frame[name]
            metrics[name] = {
                "value": float(np.mean(series)),
                "direction": METRIC_DIRECTIONS[name],
                "per_frame": [float(v) for v in series],
            }

    meta = {
        "n_frames": len(run_stems),
        "run_dir": str(run),
        "gt_dir": str(gt),
        "image_embed_dim": providers.image_embed.dim,
        "metrics": list(metric_names),
    }
    if metadata:
        meta.update(metadata)
    return MetricReport(metrics=metrics, metadata=meta)


def checkpoint_digest(path: str | Path) -> str:
    return _file_digest(Path(path))
