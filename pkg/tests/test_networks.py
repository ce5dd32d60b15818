import torch

from reenact.networks import (
    BodyMapGenerator,
    FaceRefiner,
    FrameRenderer,
    MultiScaleDiscriminator,
    init_weights,
)


class TestBodyMapGenerator:
    def test_output_shape_matches_input(self):
        torch.manual_seed(0)
        g = BodyMapGenerator(ngf=8, n_res=2)
        y = g(torch.randn(2, 28, 128, 80))
        assert y.shape == (2, 22, 128, 80)

    def test_eval_deterministic(self):
        torch.manual_seed(0)
        g = BodyMapGenerator(ngf=8, n_res=2)
        init_weights(g)
        g.eval()
        x = torch.randn(1, 28, 64, 48)
        with torch.no_grad():
            a = g(x)
            b = g(x)
        assert torch.equal(a.argmax(dim=1), b.argmax(dim=1))
        assert torch.equal(a, b)


class TestDiscriminators:
    def test_two_scales_with_at_least_three_activations(self):
        d = MultiScaleDiscriminator(30, ndf=8)
        outs = d(torch.randn(1, 30, 64, 40))
        assert len(outs) == 2
        for acts in outs:
            assert len(acts) - 1 >= 3  # intermediate layers before the score map


class TestFrameRenderer:
    def test_toy_geometry_five_stages(self):
        fr = FrameRenderer(embed_dim=16, out_size=(128, 80), base_ch=32)
        assert fr.n_stages == 5
        assert fr.canvas == 128
        img, mask = fr(torch.rand(1, 27, 128, 80), torch.randn(1, 16))
        assert img.shape == (1, 3, 128, 80)
        assert mask.shape == (1, 1, 128, 80)

    def test_full_scale_geometry_seven_stages(self):
        fr = FrameRenderer(embed_dim=8, out_size=(512, 320), base_ch=8, min_ch=4)
        assert fr.n_stages == 7
        assert fr.canvas == 512
        img, mask = fr(torch.rand(1, 27, 512, 320), torch.randn(1, 8))
        assert img.shape == (1, 3, 512, 320)
        assert mask.shape == (1, 1, 512, 320)

    def test_outputs_in_unit_range(self):
        fr = FrameRenderer(embed_dim=16, out_size=(64, 48), base_ch=16)
        img, mask = fr(torch.rand(1, 27, 64, 48), torch.randn(1, 16) * 5)
        assert img.min() >= 0.0 and img.max() <= 1.0
        assert mask.min() >= 0.0 and mask.max() <= 1.0

    def test_different_embeddings_change_output(self):
        torch.manual_seed(1)
        fr = FrameRenderer(embed_dim=16, out_size=(64, 48), base_ch=16)
        init_weights(fr)
        fr.eval()
        cond = torch.rand(1, 27, 64, 48)
        with torch.no_grad():
            a, _ = fr(cond, torch.randn(1, 16))
            b, _ = fr(cond, torch.randn(1, 16))
        assert ((a - b) ** 2).sum() > 0


class TestFaceRefiner:
    def test_shapes_preserved(self):
        m = FaceRefiner(embed_dim=12, crop=32, base=8)
        c, mc = m(torch.rand(2, 3, 32, 32), torch.randn(2, 12))
        assert c.shape == (2, 3, 32, 32)
        assert mc.shape == (2, 1, 32, 32)

    def test_conditioning_changes_output(self):
        torch.manual_seed(2)
        m = FaceRefiner(embed_dim=12, crop=32, base=8)
        init_weights(m)
        m.eval()
        x = torch.rand(1, 3, 32, 32)
        with torch.no_grad():
            a, _ = m(x, torch.randn(1, 12))
            b, _ = m(x, torch.randn(1, 12))
        assert ((a - b) ** 2).sum() > 0
