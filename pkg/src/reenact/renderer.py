"""Map-plus-identity frame renderer stage: training and inference.

Identity enters through five fixed-size part crops (face+hair, upper
clothing, lower clothing, shoes+socks, skin tone) embedded by the
frozen face / image encoders and concatenated into one vector. The
generator decodes that vector under the conditioning label map into an
RGB frame and a blending mask. All appearance losses are applied on
the figure region only (masked by the binarized ground-truth parsing);
the mask head is supervised directly against that binary silhouette.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from . import augment, core, losses, synthdata
from .bodymap import LossReport
from .config import AugmentConfig, RendererTrainConfig
from .core import Frame, SemanticMap
from .networks import FrameRenderer, MultiScaleDiscriminator, init_weights
from .perception import FaceBox, PerceptionProviders, crop_resize, face_box
from .synthdata import Dataset, SampleRecord

CROP_SIZE = 224

# label groups feeding the five identity crops
PART_GROUPS: tuple[tuple[int, ...], ...] = (
    (core.LABEL_HAIR, core.LABEL_FACE, core.LABEL_HAT, core.LABEL_SUNGLASSES),
    (core.LABEL_UPPER_CLOTHES, core.LABEL_COAT, core.LABEL_DRESS, core.LABEL_SCARF),
    (core.LABEL_PANTS, core.LABEL_SKIRT),
    (core.LABEL_LEFT_SHOE, core.LABEL_RIGHT_SHOE, core.LABEL_SOCKS),
    (
        core.LABEL_TORSO_SKIN,
        core.LABEL_LEFT_ARM,
        core.LABEL_RIGHT_ARM,
        core.LABEL_LEFT_LEG,
        core.LABEL_RIGHT_LEG,
    ),
)


@dataclass
class PartCrops:
    """Five stacked identity crops; flags mark empty label groups."""

    crops: np.ndarray  # (5, CROP_SIZE, CROP_SIZE, 3)
    present: tuple[bool, bool, bool, bool, bool]


def part_extract(image: Frame, parsing: SemanticMap, crop_size: int = CROP_SIZE) -> PartCrops:
    """Split a person image into the five part crops.

    Each crop is the resized bounding box of its label group with
    non-group pixels zeroed. The skin crop is a constant image of the
    median color over skin-labeled pixels.
    """
    if (image.height, image.width) != (parsing.height, parsing.width):
        raise core.ShapeError("image and parsing dims disagree")
    labels = parsing.labels
    crops = np.zeros((5, crop_size, crop_size, 3), dtype=np.float64)
    present = []
    for i, group in enumerate(PART_GROUPS):
        member = np.isin(labels, group)
        if not member.any():
            present.append(False)
            continue
        present.append(True)
        if i == 4:  # skin tone: constant median color
            median = np.median(image.values[member], axis=0)
            crops[i] = median[None, None, :]
            continue
        ys, xs = np.nonzero(member)
        y0, y1 = ys.min(), ys.max() + 1
        x0, x1 = xs.min(), xs.max() + 1
        patch = np.where(member[y0:y1, x0:x1, None], image.values[y0:y1, x0:x1], 0.0)
        t = torch.from_numpy(np.ascontiguousarray(patch.transpose(2, 0, 1)))[None]
        resized = F.interpolate(t, size=(crop_size, crop_size), mode="bilinear", align_corners=False)
        crops[i] = resized[0].numpy().transpose(1, 2, 0)
    if not present[0]:
        raise core.ShapeError("no face or hair pixels to build the identity crops from")
    return PartCrops(crops=crops, present=tuple(present))


def embed_identity(crops: PartCrops, providers: PerceptionProviders) -> np.ndarray:
    """Concatenated identity embedding: face crop first, then parts 2..5."""
    face = providers.face_embed.embed_array(crops.crops[0])
    rest = [providers.image_embed.embed_array(crops.crops[i]) for i in range(1, 5)]
    return np.concatenate([face] + rest).astype(np.float64)


def identity_dim(providers: PerceptionProviders) -> int:
    return providers.face_embed.dim + 4 * providers.image_embed.dim


def cond_map_for(rec: SampleRecord) -> SemanticMap:
    """Conditioning map: parsing + hand strokes + face labels (27 labels)."""
    hands = augment.inject_hand_labels(rec.parsing, rec.pose.keypoints)
    return augment.inject_face_labels(hands, rec.pose.keypoints)


def cond_to_tensor(cond: SemanticMap) -> np.ndarray:
    if cond.n_labels != core.N_COND_LABELS:
        raise core.LabelError(
            f"conditioning map must be in the {core.N_COND_LABELS}-label space, "
            f"got {cond.n_labels}"
        )
    return core.one_hot(cond, core.N_COND_LABELS).astype(np.float32)


def render_frame(
    model: FrameRenderer, cond: SemanticMap, e_z: np.ndarray
) -> tuple[Frame, core.BlendMask]:
    """Eval-mode forward for one conditioning map."""
    model.eval()
    x = torch.from_numpy(cond_to_tensor(cond))[None]
    e = torch.from_numpy(e_z.astype(np.float32))[None]
    with torch.no_grad():
        img, mask = model(x, e)
    return (
        Frame(img[0].numpy().astype(np.float64).transpose(1, 2, 0)),
        core.BlendMask(np.clip(mask[0, 0].numpy().astype(np.float64), 0.0, 1.0)),
    )


class RendererTrainer:
    def __init__(
        self,
        dataset: Dataset,
        providers: PerceptionProviders,
        cfg: RendererTrainConfig,
        aug_cfg: AugmentConfig,
        seed: int = 0,
    ) -> None:
        self.dataset = dataset
        self.providers = providers
        self.cfg = cfg
        self.aug_cfg = aug_cfg
        self.rng = np.random.default_rng(seed)
        torch.manual_seed(seed)
        h, w = dataset.size
        self.generator = FrameRenderer(
            embed_dim=identity_dim(providers),
            out_size=(h, w),
            cond_ch=core.N_COND_LABELS,
            base_ch=cfg.base_channels,
        )
        self.discriminator = MultiScaleDiscriminator(core.N_COND_LABELS + 3, ndf=cfg.ndf)
        init_weights(self.generator)
        init_weights(self.discriminator)
        self.opt_g = torch.optim.Adam(
            self.generator.parameters(), lr=cfg.lr, betas=tuple(cfg.betas)
        )
        self.opt_d = torch.optim.Adam(
            self.discriminator.parameters(), lr=cfg.lr, betas=tuple(cfg.betas)
        )
        self.step_count = 0
        # identity embeddings are pure per-record constants
        self._embed_cache: dict[tuple[str, int], np.ndarray] = {}

    def _identity_embedding(self, rec: SampleRecord) -> np.ndarray:
        key = (rec.person_id, rec.frame_index)
        if key not in self._embed_cache:
            crops = part_extract(rec.frame, rec.parsing)
            self._embed_cache[key] = embed_identity(crops, self.providers)
        return self._embed_cache[key]

    # -- batch assembly ----------------------------------------------------

    def _assemble_item(self):
        rec_id, rec_tgt = synthdata.sample_training_pair(
            self.dataset, window=self.cfg.window, rng=self.rng
        )
        cond = cond_map_for(rec_tgt)
        fg = core.binarize(
            augment.inject_hand_labels(rec_tgt.parsing, rec_tgt.pose.keypoints)
        ).values
        frame = rec_tgt.frame.values
        try:
            box = face_box(
                rec_tgt.pose.keypoints,
                out_size=self.cfg.face_crop,
                margin=self.providers.face_margin,
                frame_size=(rec_tgt.frame.height, rec_tgt.frame.width),
            )
        except core.NoFaceError:
            box = None
        cond_labels = cond.labels
        if self.aug_cfg.hflip and self.rng.uniform() < 0.5:
            cond_labels = cond_labels[:, ::-1].copy()
            fg = fg[:, ::-1].copy()
            frame = frame[:, ::-1].copy()
            if box is not None:
                log = augment.TransformLog().hflip(rec_tgt.frame.width)
                box = augment.adjust_face_location(box, log)
        e_z = self._identity_embedding(rec_id)
        cond_onehot = cond_to_tensor(SemanticMap(cond_labels, core.N_COND_LABELS))
        return cond_onehot, e_z.astype(np.float32), frame.transpose(2, 0, 1).astype(np.float32), fg.astype(np.float32), box

    def assemble_batch(self, n: int):
        conds, ezs, frames, fgs, boxes = zip(*(self._assemble_item() for _ in range(n)))
        return (
            torch.from_numpy(np.stack(conds)),
            torch.from_numpy(np.stack(ezs)),
            torch.from_numpy(np.stack(frames)),
            torch.from_numpy(np.stack(fgs))[:, None],
            list(boxes),
        )

    # -- optimization ------------------------------------------------------

    def train_step(self) -> LossReport:
        cfg = self.cfg
        self.generator.train()
        self.discriminator.train()
        cond, e_z, x, fg, boxes = self.assemble_batch(cfg.batch)

        z, m = self.generator(cond, e_z)
        z_b = z * fg
        x_b = x * fg
        with torch.no_grad():
            real_acts = self.discriminator(torch.cat([cond, x_b], dim=1))
        fake_acts = self.discriminator(torch.cat([cond, z_b], dim=1))
        hinge_g = losses.loss_hinge_g([acts[-1] for acts in fake_acts])
        fm = losses.loss_fm_multi(
            [acts[:-1] for acts in real_acts], [acts[:-1] for acts in fake_acts]
        )
        perc = losses.loss_perceptual(x_b, z_b, self.providers.image_embed)
        face_terms = []
        for i, box in enumerate(boxes):
            term, flagged = losses.loss_face_emphasis(
                z[i : i + 1], x[i : i + 1], box, self.providers.face_embed
            )
            if flagged:
                face_terms.append(term)
        face = (
            torch.stack(face_terms).mean() if face_terms else z.new_zeros(())
        )
        mask_term = losses.loss_mask(m, fg, cfg.lambda_mask)
        g_total = losses.b2f_total_loss(
            hinge_g,
            fm,
            perc,
            face,
            mask_term,
            lambda_adv=cfg.lambda_adv,
            lambda_fm=cfg.lambda_fm,
            lambda_perc=cfg.lambda_perc,
            lambda_face=cfg.lambda_face,
        )
        self._check_finite(g_total, "generator")
        self.opt_g.zero_grad(set_to_none=True)
        g_total.backward()
        self.opt_g.step()

        d_real = self.discriminator(torch.cat([cond, x_b], dim=1))
        d_fake = self.discriminator(torch.cat([cond, z_b.detach()], dim=1))
        d_total = losses.loss_hinge_d(
            [acts[-1] for acts in d_real], [acts[-1] for acts in d_fake]
        )
        self._check_finite(d_total, "discriminator")
        self.opt_d.zero_grad(set_to_none=True)
        d_total.backward()
        self.opt_d.step()

        self.step_count += 1
        return LossReport(
            step=self.step_count,
            values={
                "g_total": float(g_total.item()),
                "g_hinge": float(hinge_g.item()),
                "g_fm": float(fm.item()),
                "g_perc": float(perc.item()),
                "g_face": float(face.item()),
                "g_mask": float(mask_term.item()),
                "d_total": float(d_total.item()),
            },
        )

    def train(self, steps: int | None = None) -> list[LossReport]:
        return [self.train_step() for _ in range(steps or self.cfg.steps)]

    @staticmethod
    def _check_finite(value: torch.Tensor, who: str) -> None:
        if not bool(torch.isfinite(value)):
            raise core.NumericsError(f"non-finite {who} loss at training step")
