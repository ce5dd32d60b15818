"""Loss operations for the three trainable stages.

Conventions, shared across every term:

  * per-layer feature distances are means over elements (the 1/N_j
    normalization), then summed over layers;
  * adversarial losses are means over discriminator output elements,
    summed over discriminator scales;
  * all reductions are means so values are batch-size invariant.

Every operation is differentiable and dtype-agnostic so analytic
gradients can be checked against central finite differences.
"""

from __future__ import annotations

from collections.abc import Sequence

import torch
import torch.nn.functional as F

from .core import LabelError, ShapeError

Tensors = Sequence[torch.Tensor]


def loss_lsgan_g(d_fake: torch.Tensor) -> torch.Tensor:
    """Least-squares generator loss: mean (D(fake) - 1)^2."""
    return ((d_fake - 1.0) ** 2).mean()


def loss_lsgan_d(d_real: torch.Tensor, d_fake: torch.Tensor) -> torch.Tensor:
    """Least-squares discriminator loss, 1/2 per side."""
    return 0.5 * ((d_real - 1.0) ** 2).mean() + 0.5 * (d_fake**2).mean()


def loss_hinge_g(d_fakes: Tensors) -> torch.Tensor:
    """Hinge generator loss, -mean D(fake), summed over discriminators."""
    total = None
    for d in d_fakes:
        term = -d.mean()
        total = term if total is None else total + term
    if total is None:
        raise ShapeError("no discriminator outputs given")
    return total


def loss_hinge_d(d_reals: Tensors, d_fakes: Tensors) -> torch.Tensor:
    """Hinge discriminator loss with the real side pushed above +1."""
    if len(d_reals) != len(d_fakes):
        raise ShapeError("real/fake output lists differ in length")
    if not d_reals:
        raise ShapeError("no discriminator outputs given")
    total = None
    for dr, df in zip(d_reals, d_fakes):
        term = F.relu(1.0 - dr).mean() + F.relu(1.0 + df).mean()
        total = term if total is None else total + term
    return total


def feature_matching(real_acts: Tensors, fake_acts: Tensors) -> torch.Tensor:
    """Sum over layers of mean absolute activation difference."""
    if len(real_acts) != len(fake_acts):
        raise ShapeError(
            f"activation lists differ: {len(real_acts)} vs {len(fake_acts)} layers"
        )
    if not real_acts:
        raise ShapeError("empty activation lists")
    total = None
    for r, f in zip(real_acts, fake_acts):
        if r.shape != f.shape:
            raise ShapeError(f"activation shapes differ: {tuple(r.shape)} vs {tuple(f.shape)}")
        term = (r - f).abs().mean()
        total = term if total is None else total + term
    return total


def loss_fm_multi(real_by_k: Sequence[Tensors], fake_by_k: Sequence[Tensors]) -> torch.Tensor:
    """Feature matching summed over discriminator scales."""
    if len(real_by_k) != len(fake_by_k):
        raise ShapeError("discriminator counts differ")
    total = None
    for r, f in zip(real_by_k, fake_by_k):
        term = feature_matching(r, f)
        total = term if total is None else total + term
    if total is None:
        raise ShapeError("no discriminators given")
    return total


def loss_ce(logits: torch.Tensor, target_labels: torch.Tensor) -> torch.Tensor:
    """Mean per-pixel cross-entropy of softmax-normalized channels."""
    n_classes = logits.shape[1]
    if int(target_labels.max()) >= n_classes or int(target_labels.min()) < 0:
        raise LabelError(
            f"target label outside [0, {n_classes}): {int(target_labels.max())}"
        )
    return F.cross_entropy(logits, target_labels)


def p2b_total_loss(
    ls_terms: Tensors,
    fm_terms: Tensors,
    ce_term: torch.Tensor,
    lambda_fm: float = 40.0,
    lambda_ce: float = 1.0,
) -> torch.Tensor:
    """Sum_k (LS_k + lambda_fm * FM_k) + lambda_ce * CE."""
    if len(ls_terms) != len(fm_terms):
        raise ShapeError("per-discriminator term lists differ in length")
    total = lambda_ce * ce_term
    for ls, fm in zip(ls_terms, fm_terms):
        total = total + ls + lambda_fm * fm
    return total


def loss_perceptual(x: torch.Tensor, o: torch.Tensor, embedder) -> torch.Tensor:
    """Embedder-space distance: per-layer mean-L1 summed over taps."""
    acts_x = embedder.activations(x)
    acts_o = embedder.activations(o)
    return feature_matching(list(acts_x.values()), list(acts_o.values()))


def crop_box_tensor(frames: torch.Tensor, box) -> torch.Tensor:
    """Differentiable square crop + resize to the box's out_size."""
    rs, cs = box.as_slices()
    patch = frames[:, :, rs, cs]
    if patch.shape[2] == 0 or patch.shape[3] == 0:
        raise ShapeError("face box lies outside the frame")
    return F.interpolate(
        patch, size=(box.out_size, box.out_size), mode="bilinear", align_corners=False
    )


def loss_face_emphasis(
    gen_frames: torch.Tensor,
    real_frames: torch.Tensor,
    box,
    face_embedder,
) -> tuple[torch.Tensor, bool]:
    """Perceptual distance on aligned face crops; 0 + flag if no box."""
    if box is None or not getattr(box, "valid", True):
        return gen_frames.new_zeros(()), False
    gen_crop = crop_box_tensor(gen_frames, box)
    real_crop = crop_box_tensor(real_frames, box)
    return loss_perceptual(real_crop, gen_crop, face_embedder), True


def loss_mask(mask: torch.Tensor, target_mask: torch.Tensor, weight: float = 5.0) -> torch.Tensor:
    """Weighted mean-L1 between the blending mask and its binary target."""
    if mask.shape != target_mask.shape:
        raise ShapeError(f"mask shapes differ: {tuple(mask.shape)} vs {tuple(target_mask.shape)}")
    return weight * (mask - target_mask).abs().mean()


def b2f_total_loss(
    hinge_g: torch.Tensor,
    fm: torch.Tensor,
    perceptual: torch.Tensor,
    face: torch.Tensor,
    mask: torch.Tensor,
    lambda_adv: float = 1.0,
    lambda_fm: float = 1.0,
    lambda_perc: float = 1.0,
    lambda_face: float = 1.0,
) -> torch.Tensor:
    """Renderer generator objective; the mask term carries its own weight."""
    return lambda_adv * hinge_g + lambda_fm * fm + lambda_perc * perceptual + lambda_face * face + mask


def loss_facep(c_identity: torch.Tensor, c_generated: torch.Tensor, face_embedder) -> torch.Tensor:
    """Face-appearance pull: tap-wise mean-L1 between identity and output crops."""
    return loss_perceptual(c_identity, c_generated, face_embedder)
