import numpy as np
import pytest
import torch

from reenact import core
from reenact.config import FaceRefinerTrainConfig
from reenact.core import Frame
from reenact.face_refine import (
    FaceRefinerTrainer,
    blend_back,
    degrade_crop,
    refine_crop,
)
from reenact.networks import FaceRefiner
from reenact.perception import FaceBox


@pytest.fixture(scope="module")
def quick_cfg():
    return FaceRefinerTrainConfig(crop=16, base_channels=8, batch=2, steps=2)


class TestBlendBack:
    def frame(self, rng):
        return Frame(rng.uniform(size=(40, 30, 3)))

    def test_zero_mask_keeps_frame(self, rng):
        f = self.frame(rng)
        box = FaceBox(5, 6, 8, out_size=8)
        out = blend_back(f, box, np.ones((8, 8, 3)), np.zeros((8, 8)))
        assert np.array_equal(out.values, f.values)

    def test_full_mask_replaces_box(self, rng):
        f = self.frame(rng)
        box = FaceBox(5, 6, 8, out_size=8)
        crop = rng.uniform(size=(8, 8, 3))
        out = blend_back(f, box, crop, np.ones((8, 8)))
        rs, cs = box.as_slices()
        assert np.allclose(out.values[rs, cs], crop)

    def test_outside_box_bit_identical(self, rng):
        f = self.frame(rng)
        box = FaceBox(5, 6, 8, out_size=8)
        out = blend_back(f, box, rng.uniform(size=(8, 8, 3)), rng.uniform(size=(8, 8)))
        mask = np.ones((40, 30), dtype=bool)
        rs, cs = box.as_slices()
        mask[rs, cs] = False
        assert np.array_equal(out.values[mask], f.values[mask])

    def test_binary_mask_idempotent(self, rng):
        f = self.frame(rng)
        box = FaceBox(5, 6, 8, out_size=8)
        crop = rng.uniform(size=(8, 8, 3))
        mask = (rng.uniform(size=(8, 8)) > 0.5).astype(np.float64)
        once = blend_back(f, box, crop, mask)
        twice = blend_back(once, box, crop, mask)
        assert np.allclose(once.values, twice.values, atol=1e-12)

    def test_box_outside_frame_rejected(self, rng):
        f = self.frame(rng)
        with pytest.raises(core.ShapeError):
            blend_back(f, FaceBox(25, 35, 10, out_size=8), np.zeros((8, 8, 3)), np.zeros((8, 8)))


class TestRefineCrop:
    def test_shape_preserved(self):
        torch.manual_seed(0)
        model = FaceRefiner(embed_dim=16, crop=16, base=8)
        c0 = np.random.default_rng(0).uniform(size=(16, 16, 3))
        c, m = refine_crop(model, c0, np.zeros(16))
        assert c.shape == (16, 16, 3)
        assert m.shape == (16, 16)

    def test_deterministic(self):
        torch.manual_seed(0)
        model = FaceRefiner(embed_dim=16, crop=16, base=8)
        c0 = np.random.default_rng(1).uniform(size=(16, 16, 3))
        a = refine_crop(model, c0, np.zeros(16))
        b = refine_crop(model, c0, np.zeros(16))
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_conditioning_changes_output(self):
        torch.manual_seed(0)
        model = FaceRefiner(embed_dim=16, crop=16, base=8)
        from reenact.networks import init_weights

        init_weights(model)
        c0 = np.random.default_rng(2).uniform(size=(16, 16, 3))
        rng = np.random.default_rng(3)
        a, _ = refine_crop(model, c0, rng.normal(size=16))
        b, _ = refine_crop(model, c0, rng.normal(size=16))
        assert ((a - b) ** 2).sum() > 0


class TestDegrade:
    def test_changes_image_and_stays_in_range(self, rng):
        crop = rng.uniform(size=(16, 16, 3))
        out = degrade_crop(crop, rng, (0.5, 2.0), 0.05)
        assert out.shape == crop.shape
        assert out.min() >= 0.0 and out.max() <= 1.0
        assert not np.array_equal(out, crop)


class TestTrainStep:
    def test_losses_finite(self, tiny_dataset, providers, quick_cfg):
        tr = FaceRefinerTrainer(tiny_dataset, providers, quick_cfg, seed=7)
        rep = tr.train_step()
        assert all(np.isfinite(v) for v in rep.values.values())
        assert {"rec", "facep", "mask_reg", "adv"} <= set(rep.values)

    def test_seed_reproducible(self, tiny_dataset, providers, quick_cfg):
        from reenact.config import ProviderConfig
        from reenact.perception import PerceptionProviders

        r1 = FaceRefinerTrainer(tiny_dataset, providers, quick_cfg, seed=8).train(2)
        prov2 = PerceptionProviders.build(ProviderConfig())
        r2 = FaceRefinerTrainer(tiny_dataset, prov2, quick_cfg, seed=8).train(2)
        assert [r.values for r in r1] == [r.values for r in r2]

    def test_render_input_hook(self, tiny_dataset, providers, quick_cfg):
        calls = []

        def degrade_via_renderer(clean, rng):
            calls.append(1)
            return np.clip(clean * 0.5 + 0.25, 0, 1)

        tr = FaceRefinerTrainer(
            tiny_dataset, providers, quick_cfg, seed=9, degrade_fn=degrade_via_renderer
        )
        tr.train_step()
        assert calls
