"""Flat key=value configuration shared by the CLI and the trainers.

Config files are plain text, one ``key = value`` pair per line, ``#``
comments allowed. Values stay strings until a typed config dataclass
consumes them; unknown keys are ignored so one file can configure
several subcommands.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict
from pathlib import Path

from .core import ConfigError


def parse_flat(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {i}: expected key = value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_flat(path: str | Path) -> dict[str, str]:
    return parse_flat(Path(path).read_text())


def _conv_bool(s: str) -> bool:
    low = s.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _conv_pair(s: str) -> tuple[float, float]:
    parts = [p for p in s.replace(",", " ").split() if p]
    if len(parts) != 2:
        raise ConfigError(f"expected two numbers: {s!r}")
    return float(parts[0]), float(parts[1])


def _conv_size(s: str) -> tuple[int, int]:
    """Parse WxH into (height, width)."""
    parts = s.lower().split("x")
    if len(parts) != 2:
        raise ConfigError(f"expected WxH: {s!r}")
    w, h = int(parts[0]), int(parts[1])
    if w <= 0 or h <= 0:
        raise ConfigError(f"size must be positive: {s!r}")
    return h, w


def _get(flat: dict[str, str], key: str, default, conv):
    if key not in flat:
        return default
    try:
        return conv(flat[key])
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {key}: {flat[key]!r}") from exc


@dataclass
class ProviderConfig:
    seed: int = 7
    face_dim: int = 128
    image_dim: int = 32
    face_margin: float = 0.25
    inpaint_dilate: int = 2

    @classmethod
    def from_flat(cls, flat: dict[str, str]) -> "ProviderConfig":
        return cls(
            seed=_get(flat, "providers.seed", cls.seed, int),
            face_dim=_get(flat, "providers.face_embed.dim", cls.face_dim, int),
            image_dim=_get(flat, "providers.image_embed.dim", cls.image_dim, int),
            face_margin=_get(flat, "providers.face_margin", cls.face_margin, float),
            inpaint_dilate=_get(flat, "providers.inpaint_dilate", cls.inpaint_dilate, int),
        )


@dataclass
class AugmentConfig:
    squeeze_range: tuple[float, float] = (0.6, 1.4)
    rot_deg: float = 4.0
    scale_range: tuple[float, float] = (0.97, 1.03)
    enable_squeeze: bool = True
    enable_rot_scale: bool = True
    hflip: bool = True

    def __post_init__(self) -> None:
        lo, hi = self.squeeze_range
        if lo <= 0 or hi <= 0 or lo > hi:
            raise ConfigError(f"squeeze_range must be positive and ordered: {self.squeeze_range}")
        if self.scale_range[0] <= 0 or self.scale_range[0] > self.scale_range[1]:
            raise ConfigError(f"bad scale_range: {self.scale_range}")

    @classmethod
    def from_flat(cls, flat: dict[str, str]) -> "AugmentConfig":
        return cls(
            squeeze_range=_get(flat, "augment.squeeze_range", cls.squeeze_range, _conv_pair),
            rot_deg=_get(flat, "augment.rot_deg", cls.rot_deg, float),
            scale_range=_get(flat, "augment.scale_range", cls.scale_range, _conv_pair),
            enable_squeeze=_get(flat, "augment.enable_squeeze", cls.enable_squeeze, _conv_bool),
            enable_rot_scale=_get(flat, "augment.enable_rot_scale", cls.enable_rot_scale, _conv_bool),
            hflip=_get(flat, "augment.hflip", cls.hflip, _conv_bool),
        )


@dataclass
class SynthConfig:
    persons: int = 8
    frames: int = 24
    size: tuple[int, int] = (128, 80)  # (H, W)
    max_joint_step_deg: float = 7.0

    @classmethod
    def from_flat(cls, flat: dict[str, str]) -> "SynthConfig":
        return cls(
            persons=_get(flat, "synth.persons", cls.persons, int),
            frames=_get(flat, "synth.frames", cls.frames, int),
            size=_get(flat, "size", cls.size, _conv_size),
            max_joint_step_deg=_get(
                flat, "synth.max_joint_step_deg", cls.max_joint_step_deg, float
            ),
        )


@dataclass
class BodyMapTrainConfig:
    """Pose-to-body-map generator stage ("p2b")."""

    ngf: int = 24
    ndf: int = 24
    n_res: int = 4
    lr: float = 2e-4
    betas: tuple[float, float] = (0.5, 0.999)
    lambda_fm: float = 40.0
    lambda_ce: float = 1.0
    batch: int = 16
    steps: int = 200
    window: int = 250

    @classmethod
    def from_flat(cls, flat: dict[str, str]) -> "BodyMapTrainConfig":
        return cls(
            ngf=_get(flat, "p2b.ngf", cls.ngf, int),
            ndf=_get(flat, "p2b.ndf", cls.ndf, int),
            n_res=_get(flat, "p2b.n_res", cls.n_res, int),
            lr=_get(flat, "p2b.lr", cls.lr, float),
            betas=_get(flat, "p2b.betas", cls.betas, _conv_pair),
            lambda_fm=_get(flat, "p2b.lambda_fm", cls.lambda_fm, float),
            lambda_ce=_get(flat, "p2b.lambda_ce", cls.lambda_ce, float),
            batch=_get(flat, "p2b.batch", cls.batch, int),
            steps=_get(flat, "p2b.steps", cls.steps, int),
            window=_get(flat, "p2b.window", cls.window, int),
        )


@dataclass
class RendererTrainConfig:
    """Map-plus-identity frame renderer stage ("b2f")."""

    base_channels: int = 128
    ndf: int = 24
    lr: float = 2e-4
    betas: tuple[float, float] = (0.5, 0.999)
    lambda_adv: float = 1.0
    lambda_fm: float = 1.0
    lambda_perc: float = 1.0
    lambda_face: float = 1.0
    lambda_mask: float = 5.0
    batch: int = 8
    steps: int = 300
    window: int = 250
    face_crop: int = 32

    @classmethod
    def from_flat(cls, flat: dict[str, str]) -> "RendererTrainConfig":
        return cls(
            base_channels=_get(flat, "b2f.base_channels", cls.base_channels, int),
            ndf=_get(flat, "b2f.ndf", cls.ndf, int),
            lr=_get(flat, "b2f.lr", cls.lr, float),
            betas=_get(flat, "b2f.betas", cls.betas, _conv_pair),
            lambda_adv=_get(flat, "b2f.lambda_adv", cls.lambda_adv, float),
            lambda_fm=_get(flat, "b2f.lambda_fm", cls.lambda_fm, float),
            lambda_perc=_get(flat, "b2f.lambda_perc", cls.lambda_perc, float),
            lambda_face=_get(flat, "b2f.lambda_face", cls.lambda_face, float),
            lambda_mask=_get(flat, "b2f.lambda_mask", cls.lambda_mask, float),
            batch=_get(flat, "b2f.batch", cls.batch, int),
            steps=_get(flat, "b2f.steps", cls.steps, int),
            window=_get(flat, "b2f.window", cls.window, int),
            face_crop=_get(flat, "b2f.face_crop", cls.face_crop, int),
        )


@dataclass
class FaceRefinerTrainConfig:
    """Face-crop refinement stage ("fr")."""

    crop: int = 64
    base_channels: int = 32
    lr: float = 1e-4
    betas: tuple[float, float] = (0.5, 0.999)
    lambda_facep: float = 1.0
    lambda_rec: float = 1.0
    lambda_mask_reg: float = 0.05
    lambda_adv: float = 0.2
    blur_sigma: tuple[float, float] = (0.5, 2.0)
    noise_sigma: float = 0.05
    batch: int = 16
    steps: int = 200
    train_on_renders: bool = False

    @classmethod
    def from_flat(cls, flat: dict[str, str]) -> "FaceRefinerTrainConfig":
        return cls(
            crop=_get(flat, "fr.crop", cls.crop, int),
            base_channels=_get(flat, "fr.base_channels", cls.base_channels, int),
            lr=_get(flat, "fr.lr", cls.lr, float),
            betas=_get(flat, "fr.betas", cls.betas, _conv_pair),
            lambda_facep=_get(flat, "fr.lambda_facep", cls.lambda_facep, float),
            lambda_rec=_get(flat, "fr.lambda_rec", cls.lambda_rec, float),
            lambda_mask_reg=_get(flat, "fr.lambda_mask_reg", cls.lambda_mask_reg, float),
            lambda_adv=_get(flat, "fr.lambda_adv", cls.lambda_adv, float),
            blur_sigma=_get(flat, "fr.blur_sigma", cls.blur_sigma, _conv_pair),
            noise_sigma=_get(flat, "fr.noise_sigma", cls.noise_sigma, float),
            batch=_get(flat, "fr.batch", cls.batch, int),
            steps=_get(flat, "fr.steps", cls.steps, int),
            train_on_renders=_get(flat, "fr.train_on_renders", cls.train_on_renders, _conv_bool),
        )


@dataclass
class EvalConfig:
    metrics: tuple[str, ...] = ("ssbs", "ssis", "dpbs", "dpis", "ssim", "lpips", "fid")

    @classmethod
    def from_flat(cls, flat: dict[str, str]) -> "EvalConfig":
        if "eval.metrics" in flat:
            names = tuple(p for p in flat["eval.metrics"].replace(",", " ").split() if p)
            return cls(metrics=names)
        return cls()


@dataclass
class PipelineConfig:
    size: tuple[int, int] = (128, 80)  # (H, W)
    seed: int = 0
    providers: ProviderConfig = field(default_factory=ProviderConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    p2b: BodyMapTrainConfig = field(default_factory=BodyMapTrainConfig)
    b2f: RendererTrainConfig = field(default_factory=RendererTrainConfig)
    fr: FaceRefinerTrainConfig = field(default_factory=FaceRefinerTrainConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    background: str = "inpaint-driving"

    @classmethod
    def from_flat(cls, flat: dict[str, str]) -> "PipelineConfig":
        size = _get(flat, "size", cls.size, _conv_size)
        synth = SynthConfig.from_flat(flat)
        synth.size = size
        return cls(
            size=size,
            seed=_get(flat, "seed", cls.seed, int),
            providers=ProviderConfig.from_flat(flat),
            augment=AugmentConfig.from_flat(flat),
            synth=synth,
            p2b=BodyMapTrainConfig.from_flat(flat),
            b2f=RendererTrainConfig.from_flat(flat),
            fr=FaceRefinerTrainConfig.from_flat(flat),
            eval=EvalConfig.from_flat(flat),
            background=_get(flat, "pipeline.background", cls.background, str),
        )

    def to_dict(self) -> dict:
        return asdict(self)
