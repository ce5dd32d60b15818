import math

import numpy as np
import pytest
import torch

from gradcheck import check_grad, random_tensor
from reenact import losses as L
from reenact.core import LabelError, ShapeError
from reenact.perception import FaceBox, ToyEmbedder


def const(v, shape=(2, 1, 4, 4)):
    return torch.full(shape, float(v), dtype=torch.float64)


class TestClosedForms:
    def test_lsgan_g(self):
        assert L.loss_lsgan_g(const(1)).item() == pytest.approx(0.0, abs=1e-12)
        assert L.loss_lsgan_g(const(0)).item() == pytest.approx(1.0, abs=1e-12)
        assert L.loss_lsgan_g(const(0.5)).item() == pytest.approx(0.25, abs=1e-12)

    def test_lsgan_d(self):
        assert L.loss_lsgan_d(const(1), const(0)).item() == pytest.approx(0.0, abs=1e-12)
        assert L.loss_lsgan_d(const(0), const(1)).item() == pytest.approx(1.0, abs=1e-12)

    def test_lsgan_d_swap_splits_evenly(self):
        # each wrong side contributes 1/2
        assert L.loss_lsgan_d(const(0), const(0)).item() == pytest.approx(0.5, abs=1e-12)
        assert L.loss_lsgan_d(const(1), const(1)).item() == pytest.approx(0.5, abs=1e-12)

    def test_hinge_g(self):
        assert L.loss_hinge_g([const(2)]).item() == pytest.approx(-2.0, abs=1e-12)
        assert L.loss_hinge_g([const(0)]).item() == pytest.approx(0.0, abs=1e-12)
        assert L.loss_hinge_g([const(2), const(2)]).item() == pytest.approx(-4.0, abs=1e-12)

    def test_hinge_g_linear(self, rng):
        x = random_tensor((2, 1, 4, 4), seed=3)
        a = L.loss_hinge_g([x]).item()
        assert L.loss_hinge_g([2 * x]).item() == pytest.approx(2 * a, rel=1e-12)

    def test_hinge_d(self):
        assert L.loss_hinge_d([const(1)], [const(-1)]).item() == pytest.approx(0.0, abs=1e-12)
        assert L.loss_hinge_d([const(0)], [const(0)]).item() == pytest.approx(2.0, abs=1e-12)
        assert L.loss_hinge_d([const(0)] * 2, [const(0)] * 2).item() == pytest.approx(4.0)

    def test_hinge_d_nonnegative(self):
        for seed in range(5):
            dr = random_tensor((2, 1, 4, 4), seed=seed)
            df = random_tensor((2, 1, 4, 4), seed=seed + 100)
            assert L.loss_hinge_d([dr], [df]).item() >= 0.0

    def test_ce_uniform_is_log22(self):
        logits = torch.zeros((1, 22, 4, 4), dtype=torch.float64)
        gt = torch.zeros((1, 4, 4), dtype=torch.long)
        assert L.loss_ce(logits, gt).item() == pytest.approx(math.log(22), abs=1e-9)

    def test_ce_correct_onehot_is_zero(self):
        logits = torch.full((1, 22, 4, 4), -1000.0, dtype=torch.float64)
        logits[:, 7] = 1000.0
        gt = torch.full((1, 4, 4), 7, dtype=torch.long)
        assert L.loss_ce(logits, gt).item() == pytest.approx(0.0, abs=1e-12)

    def test_ce_mean_is_pixel_permutation_invariant(self):
        g = torch.Generator().manual_seed(0)
        logits = torch.randn(1, 22, 2, 8, generator=g, dtype=torch.float64)
        gt = torch.randint(0, 22, (1, 2, 8), generator=g)
        v1 = L.loss_ce(logits, gt).item()
        perm = torch.randperm(16, generator=g)
        lp = logits.reshape(1, 22, 16)[:, :, perm].reshape(1, 22, 2, 8)
        gp = gt.reshape(1, 16)[:, perm].reshape(1, 2, 8)
        assert L.loss_ce(lp, gp).item() == pytest.approx(v1, rel=1e-12)

    def test_ce_invalid_label(self):
        with pytest.raises(LabelError):
            L.loss_ce(torch.zeros((1, 22, 2, 2)), torch.full((1, 2, 2), 22, dtype=torch.long))

    def test_fm_identical_zero(self):
        acts = [random_tensor((2, 3, 4, 4), seed=1), random_tensor((2, 8), seed=2)]
        assert L.feature_matching(acts, [a.clone() for a in acts]).item() == 0.0

    def test_fm_constant_offset_equals_delta(self):
        r = [torch.zeros((2, 3, 4, 4), dtype=torch.float64), torch.zeros((2, 8), dtype=torch.float64)]
        f = [torch.full((2, 3, 4, 4), 0.25, dtype=torch.float64), torch.zeros((2, 8), dtype=torch.float64)]
        assert L.feature_matching(r, f).item() == pytest.approx(0.25, abs=1e-12)

    def test_fm_nonnegative(self):
        r = [random_tensor((2, 4, 4, 4), seed=5)]
        f = [random_tensor((2, 4, 4, 4), seed=6)]
        assert L.feature_matching(r, f).item() >= 0.0

    def test_fm_misaligned_raises(self):
        with pytest.raises(ShapeError):
            L.feature_matching([const(0)], [const(0), const(1)])
        with pytest.raises(ShapeError):
            L.feature_matching([torch.zeros(2, 3)], [torch.zeros(2, 4)])

    def test_p2b_total_weights(self):
        zero = torch.tensor(0.0, dtype=torch.float64)
        fm = torch.tensor(0.1, dtype=torch.float64)
        total = L.p2b_total_loss([zero, zero], [fm, fm], zero)
        assert total.item() == pytest.approx(8.0, abs=1e-12)
        ce = torch.tensor(0.37, dtype=torch.float64)
        assert L.p2b_total_loss([zero], [zero], ce).item() == pytest.approx(0.37)

    def test_mask_loss(self):
        m = torch.zeros((1, 1, 4, 4), dtype=torch.float64)
        gt = torch.ones((1, 1, 4, 4), dtype=torch.float64)
        assert L.loss_mask(m, gt).item() == pytest.approx(5.0, abs=1e-12)
        assert L.loss_mask(gt, gt).item() == 0.0

    def test_perceptual_identity_zero(self):
        emb = ToyEmbedder("image", 8, seed=3).double()
        x = random_tensor((1, 3, 8, 8), seed=7, scale=0.2, offset=0.5)
        assert L.loss_perceptual(x, x.clone(), emb).item() == 0.0

    def test_perceptual_monotone_on_path(self):
        emb = ToyEmbedder("image", 8, seed=3).double()
        x = random_tensor((1, 3, 8, 8), seed=8, scale=0.2, offset=0.5)
        o = random_tensor((1, 3, 8, 8), seed=9, scale=0.2, offset=0.5)
        vals = []
        for t in np.linspace(0.0, 1.0, 10):
            vals.append(L.loss_perceptual(x, x + t * (o - x), emb).item())
        assert vals[0] == pytest.approx(0.0, abs=1e-12)
        assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))

    def test_face_emphasis_invalid_box_flagged(self):
        x = random_tensor((1, 3, 8, 8), seed=1)
        emb = ToyEmbedder("face", 8, seed=0).double()
        val, flagged = L.loss_face_emphasis(x, x, None, emb)
        assert val.item() == 0.0 and not flagged
        box = FaceBox(0, 0, 8, out_size=8, valid=False)
        val, flagged = L.loss_face_emphasis(x, x, box, emb)
        assert val.item() == 0.0 and not flagged

    def test_face_emphasis_identical_zero(self):
        x = random_tensor((1, 3, 8, 8), seed=2, scale=0.2, offset=0.5)
        emb = ToyEmbedder("face", 8, seed=0).double()
        box = FaceBox(1, 1, 6, out_size=4)
        val, flagged = L.loss_face_emphasis(x, x.clone(), box, emb)
        assert flagged and val.item() == 0.0

    def test_facep_identity_zero_and_bound(self):
        emb = ToyEmbedder("face", 8, seed=4).double()
        a = random_tensor((1, 3, 8, 8), seed=11, scale=0.2, offset=0.5)
        b = random_tensor((1, 3, 8, 8), seed=12, scale=0.2, offset=0.5)
        assert L.loss_facep(a, a.clone(), emb).item() == 0.0
        full = L.loss_facep(a, b, emb).item()
        top_only = L.loss_facep(a, b, ToyEmbedder("face", 8, seed=4, layer_spec=("embed",)).double()).item()
        assert full >= top_only - 1e-12
        assert full >= 0.0


class GradCase:
    pass


def _embedder64(seed=0, kind="image"):
    return ToyEmbedder(kind, 6, seed=seed).double()


GRAD_CASES = {
    "lsgan_g": lambda x: L.loss_lsgan_g(x),
    "lsgan_d": lambda x: L.loss_lsgan_d(x, x * 0.5 + 0.1),
    "hinge_g": lambda x: L.loss_hinge_g([x]),
    "hinge_d": lambda x: L.loss_hinge_d([x], [x * 0.7 + 0.2]),
    "fm": lambda x: L.feature_matching([x], [x.flip(-1) + 0.05]),
    "ce": lambda x: L.loss_ce(
        x.reshape(1, 3, 4, 4).repeat_interleave(1, 0),
        torch.tensor([[[0, 1, 2, 0]] * 4]),
    ),
    "mask": lambda x: L.loss_mask(x, torch.full_like(x, 0.3)),
    "perceptual": lambda x: L.loss_perceptual(x, x.flip(-1) + 0.03, _embedder64(1)),
    "face_emphasis": lambda x: L.loss_face_emphasis(
        x, x.flip(-1) + 0.03, FaceBox(0, 0, 4, out_size=4), _embedder64(2, "face")
    )[0],
    "facep": lambda x: L.loss_facep(x.flip(-1) + 0.03, x, _embedder64(3, "face")),
}


@pytest.mark.parametrize("name", sorted(GRAD_CASES))
def test_gradient_matches_finite_differences(name):
    fn = GRAD_CASES[name]
    shape = (1, 3, 4, 4)
    for seed in range(3):
        x = random_tensor(shape, seed=seed, scale=0.3, offset=0.4)
        err = check_grad(fn, x)
        assert err < 1e-4, f"{name} seed {seed}: rel err {err}"
