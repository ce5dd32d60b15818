"""Face refinement stage: crop-level autoencoder with identity pull.

The refiner sees the aligned face crop of a composited frame and an
identity embedding extracted from a clean reference crop of the same
person, and emits a corrected crop plus a blending mask that is
composited back into the frame. Training degrades clean synthetic face
crops (blur + noise) so the stage is trainable standalone; a flag
switches the input distribution to renderer outputs instead.
"""

from __future__ import annotations

import numpy as np
import torch

from . import core, losses
from .bodymap import LossReport
from .config import FaceRefinerTrainConfig
from .core import Frame
from .networks import FaceRefiner, PatchDiscriminator, init_weights
from .perception import FaceBox, PerceptionProviders, crop_resize, face_box, paste_crop
from .synthdata import Dataset
from scipy import ndimage


def degrade_crop(crop: np.ndarray, rng: np.random.Generator, blur_sigma: tuple[float, float], noise_sigma: float) -> np.ndarray:
    sigma = float(rng.uniform(blur_sigma[0], blur_sigma[1]))
    out = np.empty_like(crop)
    for c in range(3):
        out[..., c] = ndimage.gaussian_filter(crop[..., c], sigma=sigma, mode="nearest")
    out = out + rng.normal(0.0, noise_sigma, size=out.shape)
    return np.clip(out, 0.0, 1.0)


def refine_crop(
    model: FaceRefiner, c0: np.ndarray, identity_embedding: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode forward on one crop: returns (crop, mask) arrays."""
    model.eval()
    t = torch.from_numpy(c0.transpose(2, 0, 1).astype(np.float32))[None]
    e = torch.from_numpy(identity_embedding.astype(np.float32))[None]
    with torch.no_grad():
        c, mc = model(t, e)
    return (
        c[0].numpy().astype(np.float64).transpose(1, 2, 0),
        np.clip(mc[0, 0].numpy().astype(np.float64), 0.0, 1.0),
    )


def blend_back(frame: Frame, box: FaceBox, crop: np.ndarray, mask: np.ndarray) -> Frame:
    """Composite a refined crop into the box region; outside is untouched."""
    rs, cs = box.as_slices()
    h, w = frame.height, frame.width
    if rs.start < 0 or cs.start < 0 or rs.stop > h or cs.stop > w:
        raise core.ShapeError(f"face box {box} lies outside the {w}x{h} frame")
    out = frame.values.copy()
    patch_c = paste_crop(out, box, crop)
    patch_m = paste_crop(out, box, np.repeat(mask[..., None], 3, axis=2))[..., :1]
    region = out[rs, cs]
    out[rs, cs] = patch_c * patch_m + region * (1.0 - patch_m)
    return Frame(out)


class FaceRefinerTrainer:
    def __init__(
        self,
        dataset: Dataset,
        providers: PerceptionProviders,
        cfg: FaceRefinerTrainConfig,
        seed: int = 0,
        degrade_fn=None,
    ) -> None:
        self.dataset = dataset
        self.providers = providers
        self.cfg = cfg
        self.rng = np.random.default_rng(seed)
        torch.manual_seed(seed)
        self.model = FaceRefiner(
            embed_dim=providers.face_embed.dim, crop=cfg.crop, base=cfg.base_channels
        )
        self.discriminator = PatchDiscriminator(3, ndf=cfg.base_channels)
        init_weights(self.model)
        init_weights(self.discriminator)
        self.opt_g = torch.optim.Adam(self.model.parameters(), lr=cfg.lr, betas=tuple(cfg.betas))
        self.opt_d = torch.optim.Adam(
            self.discriminator.parameters(), lr=cfg.lr, betas=tuple(cfg.betas)
        )
        self.step_count = 0
        # hook point for training against renderer outputs instead
        self.degrade_fn = degrade_fn

    def _face_crop(self, rec) -> np.ndarray | None:
        try:
            box = face_box(
                rec.pose.keypoints,
                out_size=self.cfg.crop,
                margin=self.providers.face_margin,
                frame_size=(rec.frame.height, rec.frame.width),
            )
        except core.NoFaceError:
            return None
        return crop_resize(rec.frame, box)

    def _assemble_item(self):
        persons = self.dataset.persons
        for _ in range(64):
            pid = persons[int(self.rng.integers(len(persons)))]
            recs = self.dataset.by_person[pid]
            a = recs[int(self.rng.integers(len(recs)))]
            b = recs[int(self.rng.integers(len(recs)))]
            clean = self._face_crop(b)
            reference = self._face_crop(a)
            if clean is None or reference is None:
                continue
            if self.degrade_fn is not None:
                degraded = self.degrade_fn(clean, self.rng)
            else:
                degraded = degrade_crop(clean, self.rng, self.cfg.blur_sigma, self.cfg.noise_sigma)
            return degraded, reference, clean
        raise core.ExhaustionError("no faces found for refinement training")

    def assemble_batch(self, n: int):
        degs, refs, cleans = zip(*(self._assemble_item() for _ in range(n)))
        to_t = lambda arrs: torch.from_numpy(
            np.stack(arrs).transpose(0, 3, 1, 2).astype(np.float32)
        )
        return to_t(degs), to_t(refs), to_t(cleans)

    def train_step(self) -> LossReport:
        cfg = self.cfg
        self.model.train()
        self.discriminator.train()
        degraded, reference, clean = self.assemble_batch(cfg.batch)
        with torch.no_grad():
            ref_embed = self.providers.face_embed.embed(reference)

        c, mc = self.model(degraded, ref_embed)
        out = c * mc + degraded * (1.0 - mc)
        rec = (out - clean).abs().mean()
        facep = losses.loss_facep(reference, out, self.providers.face_embed)
        mask_reg = mc.mean()
        d_fake_acts = self.discriminator(out)
        adv = losses.loss_hinge_g([d_fake_acts[-1]])
        g_total = (
            cfg.lambda_rec * rec
            + cfg.lambda_facep * facep
            + cfg.lambda_mask_reg * mask_reg
            + cfg.lambda_adv * adv
        )
        self._check_finite(g_total, "refiner")
        self.opt_g.zero_grad(set_to_none=True)
        g_total.backward()
        self.opt_g.step()

        d_real = self.discriminator(clean)
        d_fake = self.discriminator(out.detach())
        d_total = losses.loss_hinge_d([d_real[-1]], [d_fake[-1]])
        self._check_finite(d_total, "discriminator")
        self.opt_d.zero_grad(set_to_none=True)
        d_total.backward()
        self.opt_d.step()

        self.step_count += 1
        return LossReport(
            step=self.step_count,
            values={
                "g_total": float(g_total.item()),
                "rec": float(rec.item()),
                "facep": float(facep.item()),
                "mask_reg": float(mask_reg.item()),
                "adv": float(adv.item()),
                "d_total": float(d_total.item()),
            },
        )

    def train(self, steps: int | None = None) -> list[LossReport]:
        return [self.train_step() for _ in range(steps or self.cfg.steps)]

    @staticmethod
    def _check_finite(value: torch.Tensor, who: str) -> None:
        if not bool(torch.isfinite(value)):
            raise core.NumericsError(f"non-finite {who} loss at training step")
