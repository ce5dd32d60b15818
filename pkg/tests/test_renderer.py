import numpy as np
import pytest
import torch

from reenact import core, renderer
from reenact.config import AugmentConfig, RendererTrainConfig
from reenact.core import Frame, SemanticMap
from reenact.losses import loss_mask
from reenact.networks import FrameRenderer
from reenact.renderer import (
    RendererTrainer,
    cond_map_for,
    embed_identity,
    identity_dim,
    part_extract,
    render_frame,
)


@pytest.fixture(scope="module")
def quick_cfg():
    return RendererTrainConfig(base_channels=32, ndf=8, batch=2, steps=2, face_crop=16)


class TestPartExtract:
    def test_five_crops_at_224(self, sample_record):
        crops = part_extract(sample_record.frame, sample_record.parsing)
        assert crops.crops.shape == (5, 224, 224, 3)
        assert all(crops.present)

    def test_skin_crop_is_constant_median(self, sample_record):
        crops = part_extract(sample_record.frame, sample_record.parsing)
        skin = crops.crops[4]
        assert np.allclose(skin, skin[0, 0])
        member = np.isin(sample_record.parsing.labels, renderer.PART_GROUPS[4])
        median = np.median(sample_record.frame.values[member], axis=0)
        assert np.allclose(skin[0, 0], median)

    def test_face_only_figure_flags_other_crops(self):
        labels = np.zeros((32, 32), dtype=np.uint8)
        labels[8:16, 10:20] = core.LABEL_FACE
        frame = Frame(np.full((32, 32, 3), 0.5))
        crops = part_extract(frame, SemanticMap(labels))
        assert crops.present[0]
        assert not any(crops.present[1:])
        assert crops.crops[1].sum() == 0

    def test_empty_face_group_rejected(self):
        labels = np.zeros((16, 16), dtype=np.uint8)
        labels[4:8, 4:8] = core.LABEL_PANTS
        with pytest.raises(core.ShapeError):
            part_extract(Frame(np.zeros((16, 16, 3))), SemanticMap(labels))


class TestEmbedIdentity:
    def test_dim_arithmetic(self, sample_record, providers):
        crops = part_extract(sample_record.frame, sample_record.parsing)
        e = embed_identity(crops, providers)
        assert e.shape == (identity_dim(providers),)
        assert identity_dim(providers) == 128 + 4 * 32

    def test_paper_scale_arithmetic(self):
        from reenact.config import ProviderConfig
        from reenact.perception import PerceptionProviders

        prov = PerceptionProviders.build(ProviderConfig(face_dim=2048, image_dim=512))
        assert identity_dim(prov) == 4096

    def test_same_person_same_embedding(self, sample_record, providers):
        crops = part_extract(sample_record.frame, sample_record.parsing)
        e1 = embed_identity(crops, providers)
        e2 = embed_identity(crops, providers)
        assert np.array_equal(e1, e2)

    def test_face_first_ordering(self, sample_record, providers):
        crops = part_extract(sample_record.frame, sample_record.parsing)
        e = embed_identity(crops, providers)
        face = providers.face_embed.embed_array(crops.crops[0])
        assert np.array_equal(e[: len(face)], face)


class TestCondMap:
    def test_27_label_space_with_face_labels(self, sample_record):
        cond = cond_map_for(sample_record)
        assert cond.n_labels == core.N_COND_LABELS
        present = set(np.unique(cond.labels))
        assert present & {22, 23, 24, 25, 26}
        assert present & {20, 21}


class TestRenderFrame:
    def test_shapes_and_ranges(self, sample_record, providers):
        torch.manual_seed(0)
        model = FrameRenderer(identity_dim(providers), out_size=(128, 80), base_ch=32)
        cond = cond_map_for(sample_record)
        e = np.zeros(identity_dim(providers))
        frame, mask = render_frame(model, cond, e)
        assert (frame.height, frame.width) == (128, 80)
        assert mask.values.min() >= 0.0 and mask.values.max() <= 1.0

    def test_different_embedding_different_image(self, sample_record, providers):
        torch.manual_seed(0)
        model = FrameRenderer(identity_dim(providers), out_size=(128, 80), base_ch=32)
        cond = cond_map_for(sample_record)
        rng = np.random.default_rng(4)
        a, _ = render_frame(model, cond, rng.normal(size=identity_dim(providers)))
        b, _ = render_frame(model, cond, rng.normal(size=identity_dim(providers)))
        assert ((a.values - b.values) ** 2).sum() > 0

    def test_wrong_label_space_rejected(self, sample_record, providers):
        model = FrameRenderer(identity_dim(providers), out_size=(128, 80), base_ch=32)
        with pytest.raises(core.LabelError):
            render_frame(model, sample_record.parsing, np.zeros(identity_dim(providers)))


class TestMaskSupervision:
    def test_ground_truth_mask_gives_zero_loss(self, sample_record):
        from reenact.augment import inject_hand_labels

        gt_fg = core.binarize(
            inject_hand_labels(sample_record.parsing, sample_record.pose.keypoints)
        ).values
        m = torch.from_numpy(gt_fg)[None, None]
        assert loss_mask(m, m.clone()).item() == 0.0


class TestTrainStep:
    def test_losses_finite(self, tiny_dataset, providers, quick_cfg):
        tr = RendererTrainer(tiny_dataset, providers, quick_cfg, AugmentConfig(), seed=4)
        rep = tr.train_step()
        assert all(np.isfinite(v) for v in rep.values.values())
        assert {"g_hinge", "g_fm", "g_perc", "g_face", "g_mask"} <= set(rep.values)

    def test_seed_reproducible(self, tiny_dataset, providers, quick_cfg):
        r1 = RendererTrainer(tiny_dataset, providers, quick_cfg, AugmentConfig(), seed=6).train(2)
        from reenact.config import ProviderConfig
        from reenact.perception import PerceptionProviders

        prov2 = PerceptionProviders.build(ProviderConfig())
        r2 = RendererTrainer(tiny_dataset, prov2, quick_cfg, AugmentConfig(), seed=6).train(2)
        assert [r.values for r in r1] == [r.values for r in r2]
