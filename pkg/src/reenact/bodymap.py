"""Pose-to-body-map stage: training and inference.

The generator consumes a conditioning stack built from the target
person's parsing map (one-hot), the driving stick render and the
driving dense body-surface render, and emits label logits for the
driving pose. Training pairs two frames of one person: the earlier
record supplies the conditioning parsing, the later one supplies the
driving pose and the ground-truth map. Two patch discriminators at
full and half resolution provide least-squares adversarial and
feature-matching signals next to the per-pixel cross-entropy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import torch

from . import augment, core, losses, synthdata
from .config import AugmentConfig, BodyMapTrainConfig
from .core import PoseBundle, SemanticMap
from .networks import BodyMapGenerator, MultiScaleDiscriminator, init_weights
from .synthdata import Dataset, SampleRecord

IN_CHANNELS = 28  # 22 one-hot labels + 3 stick + 3 dense


@dataclass
class LossReport:
    step: int
    values: dict[str, float]


def reports_to_json(reports: list[LossReport]) -> str:
    return json.dumps([{"step": r.step, **r.values} for r in reports], indent=0)


def save_reports(reports: list[LossReport], path: str | Path) -> None:
    Path(path).write_text(reports_to_json(reports) + "\n")


def load_reports(path: str | Path) -> list[LossReport]:
    rows = json.loads(Path(path).read_text())
    return [LossReport(step=row.pop("step"), values=row) for row in rows]


def build_input(p_star: SemanticMap, pose: PoseBundle) -> np.ndarray:
    """Stack (one-hot parsing, stick RGB, dense U/V/part) as (28, H, W)."""
    if (p_star.height, p_star.width) != (pose.height, pose.width):
        raise core.ShapeError(
            f"parsing {p_star.labels.shape} and pose renders "
            f"{(pose.height, pose.width)} disagree"
        )
    onehot = core.one_hot(p_star, core.N_BODY_LABELS)
    stick = pose.stick.values.transpose(2, 0, 1)
    dense = pose.dense.transpose(2, 0, 1).copy()
    dense[2] /= float(core.DENSE_PART_MAX)
    return np.concatenate([onehot, stick, dense], axis=0).astype(np.float32)


def forward_map(
    model: BodyMapGenerator, p_star: SemanticMap, pose: PoseBundle
) -> tuple[np.ndarray, SemanticMap]:
    """Eval-mode forward: returns label logits and the argmax map."""
    model.eval()
    x = torch.from_numpy(build_input(p_star, pose))[None]
    with torch.no_grad():
        logits = model(x)[0].numpy()
    return logits, SemanticMap(logits.argmax(axis=0).astype(np.uint8))


class BodyMapTrainer:
    def __init__(
        self,
        dataset: Dataset,
        cfg: BodyMapTrainConfig,
        aug_cfg: AugmentConfig,
        seed: int = 0,
    ) -> None:
        self.dataset = dataset
        self.cfg = cfg
        self.aug_cfg = aug_cfg
        self.rng = np.random.default_rng(seed)
        torch.manual_seed(seed)
        self.generator = BodyMapGenerator(
            in_ch=IN_CHANNELS, out_ch=core.N_BODY_LABELS, ngf=cfg.ngf, n_res=cfg.n_res
        )
        self.discriminator = MultiScaleDiscriminator(
            IN_CHANNELS + core.N_BODY_LABELS, ndf=cfg.ndf
        )
        init_weights(self.generator)
        init_weights(self.discriminator)
        self.opt_g = torch.optim.Adam(
            self.generator.parameters(), lr=cfg.lr, betas=tuple(cfg.betas)
        )
        self.opt_d = torch.optim.Adam(
            self.discriminator.parameters(), lr=cfg.lr, betas=tuple(cfg.betas)
        )
        self.step_count = 0

    # -- batch assembly ----------------------------------------------------

    def _assemble_item(self) -> tuple[np.ndarray, np.ndarray]:
        rec_id, rec_drive = synthdata.sample_training_pair(
            self.dataset, window=self.cfg.window, rng=self.rng
        )
        p_in = augment.inject_hand_labels(rec_id.parsing, rec_id.pose.keypoints)
        gt = augment.inject_hand_labels(rec_drive.parsing, rec_drive.pose.keypoints)
        pose = rec_drive.pose
        if self.aug_cfg.enable_squeeze:
            p_in, gt = augment.squeeze_stretch(
                p_in, gt, self.aug_cfg.squeeze_range, self.rng
            )
        if self.aug_cfg.enable_rot_scale:
            (p_in, gt), (pose,) = augment.random_rot_scale(
                [p_in, gt], [pose], self.aug_cfg.rot_deg, self.aug_cfg.scale_range, self.rng
            )
        return build_input(p_in, pose), gt.labels.astype(np.int64)

    def assemble_batch(self, n: int) -> tuple[torch.Tensor, torch.Tensor]:
        xs, ys = zip(*(self._assemble_item() for _ in range(n)))
        return torch.from_numpy(np.stack(xs)), torch.from_numpy(np.stack(ys))

    # -- optimization ------------------------------------------------------

    def train_step(self) -> LossReport:
        cfg = self.cfg
        self.generator.train()
        self.discriminator.train()
        x, y = self.assemble_batch(cfg.batch)
        real_onehot = (
            torch.nn.functional.one_hot(y, core.N_BODY_LABELS)
            .permute(0, 3, 1, 2)
            .float()
        )

        logits = self.generator(x)
        fake = torch.sigmoid(logits)
        with torch.no_grad():
            real_acts = self.discriminator(torch.cat([x, real_onehot], dim=1))
        fake_acts = self.discriminator(torch.cat([x, fake], dim=1))
        ls_terms = [losses.loss_lsgan_g(acts[-1]) for acts in fake_acts]
        fm_terms = [
            losses.feature_matching(r[:-1], f[:-1]) for r, f in zip(real_acts, fake_acts)
        ]
        ce = losses.loss_ce(logits, y)
        g_total = losses.p2b_total_loss(ls_terms, fm_terms, ce, cfg.lambda_fm, cfg.lambda_ce)
        self._check_finite(g_total, "generator")
        self.opt_g.zero_grad(set_to_none=True)
        g_total.backward()
        self.opt_g.step()

        d_real = self.discriminator(torch.cat([x, real_onehot], dim=1))
        d_fake = self.discriminator(torch.cat([x, fake.detach()], dim=1))
        d_total = sum(
            losses.loss_lsgan_d(r[-1], f[-1]) for r, f in zip(d_real, d_fake)
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
                "g_lsgan": float(sum(t.item() for t in ls_terms)),
                "g_fm": float(sum(t.item() for t in fm_terms)),
                "ce": float(ce.item()),
                "d_total": float(d_total.item()),
            },
        )

    def train(self, steps: int | None = None) -> list[LossReport]:
        return [self.train_step() for _ in range(steps or self.cfg.steps)]

    @staticmethod
    def _check_finite(value: torch.Tensor, who: str) -> None:
        if not bool(torch.isfinite(value)):
            raise core.NumericsError(f"non-finite {who} loss at training step")


# ---------------------------------------------------------------------------
# Evaluation helpers
# ---------------------------------------------------------------------------


def conditioned_parsing(rec: SampleRecord) -> SemanticMap:
    return augment.inject_hand_labels(rec.parsing, rec.pose.keypoints)


def self_reconstruction_accuracy(model: BodyMapGenerator, records: list[SampleRecord]) -> float:
    """Window-0 evaluation: condition and drive with the same frame."""
    accs = []
    for rec in records:
        p_in = conditioned_parsing(rec)
        _, pred = forward_map(model, p_in, rec.pose)
        accs.append(float((pred.labels == p_in.labels).mean()))
    return float(np.mean(accs))


TORSO_LABELS = tuple(
    int(lbl)
    for lbl in range(core.N_BODY_LABELS)
    if core.LABEL_TO_GROUP[lbl] == core.GROUP_TORSO
)


def torso_row_width(semantic_map: SemanticMap) -> float:
    """Median per-row pixel count over rows containing torso labels."""
    torso = np.isin(semantic_map.labels, TORSO_LABELS)
    counts = torso.sum(axis=1)
    rows = counts[counts >= 2]
    if rows.size == 0:
        return 0.0
    return float(np.median(rows))


@dataclass
class DisentanglementResult:
    tracked: int
    total: int

    @property
    def fraction(self) -> float:
        return self.tracked / self.total if self.total else 0.0


def disentanglement_eval(
    model: BodyMapGenerator,
    n_pairs: int,
    seed: int,
    size: tuple[int, int] = (128, 80),
    narrow: float = 0.72,
    wide: float = 1.28,
) -> DisentanglementResult:
    """Width-transfer check on held-out body pairs.

    For each trial a fresh driver pose meets two target parsings that
    differ only in body width. The trial counts as tracked when both
    generated maps' torso-width statistic lands closer to its own
    target than to the other one.
    """
    rng = np.random.default_rng(seed)
    tracked = 0
    for i in range(n_pairs):
        driver_body = synthdata.sample_body(rng)
        seq_seed = int(rng.integers(0, 2**31 - 1))
        driver = synthdata.sample_sequence(driver_body, 6, seq_seed, size=size)[-1]

        base = synthdata.sample_body(rng)
        rec_n = synthdata.render_person(replace(base, width_scale=narrow), synthdata.canonical_pose(), size)
        rec_w = synthdata.render_person(replace(base, width_scale=wide), synthdata.canonical_pose(), size)

        stats = {}
        targets = {}
        for key, rec in (("n", rec_n), ("w", rec_w)):
            p_in = conditioned_parsing(rec)
            _, gen = forward_map(model, p_in, driver.pose)
            stats[key] = torso_row_width(gen)
            targets[key] = torso_row_width(rec.parsing)
        ok_n = abs(stats["n"] - targets["n"]) < abs(stats["n"] - targets["w"])
        ok_w = abs(stats["w"] - targets["w"]) < abs(stats["w"] - targets["n"])
        if ok_n and ok_w:
            tracked += 1
    return DisentanglementResult(tracked=tracked, total=n_pairs)
