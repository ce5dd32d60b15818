import numpy as np
import pytest
import torch

from reenact import core
from reenact.core import Frame, NoFaceError, UnsupportedInputError
from reenact.perception import (
    OracleDenseMapper,
    OracleHumanParser,
    OracleInpainter,
    OracleKeypointDetector,
    PerceptionProviders,
    ToyEmbedder,
    crop_resize,
    face_box,
)
from reenact.config import ProviderConfig
from reenact.core import BlendMask, Keypoint, KeypointSet


class TestOracles:
    def test_parser_identity(self, sample_record):
        hp = OracleHumanParser()
        out = hp.parse(sample_record)
        assert out == sample_record.parsing
        assert hp.calls == 1

    def test_parser_histogram_preserved(self, sample_record):
        out = OracleHumanParser().parse(sample_record)
        for lbl in range(core.N_BODY_LABELS):
            assert (out.labels == lbl).sum() == (sample_record.parsing.labels == lbl).sum()

    def test_parser_rejects_frames(self, sample_record):
        with pytest.raises(UnsupportedInputError):
            OracleHumanParser().parse(sample_record.frame)

    def test_keypoints_and_stick(self, sample_record):
        op = OracleKeypointDetector()
        kps, stick = op.detect(sample_record)
        assert kps == sample_record.pose.keypoints
        assert stick == sample_record.pose.stick

    def test_dense(self, sample_record):
        dp = OracleDenseMapper()
        out = dp.map(sample_record)
        assert np.array_equal(out, sample_record.pose.dense)
        assert out[..., 2].max() <= 24

    def test_inpaint_removes_figure(self, sample_record):
        ip = OracleInpainter()
        mask = core.binarize(sample_record.parsing)
        out = ip.inpaint(sample_record.frame, mask, record=sample_record)
        fg = mask.values.astype(bool)
        assert np.array_equal(out.values[fg], sample_record.background.values[fg])
        assert np.array_equal(out.values[~fg], sample_record.frame.values[~fg])

    def test_inpaint_idempotent(self, sample_record):
        ip = OracleInpainter()
        mask = core.binarize(sample_record.parsing)
        once = ip.inpaint(sample_record.frame, mask, record=sample_record)
        twice = ip.inpaint(once, mask, record=sample_record)
        assert once == twice

    def test_inpaint_needs_record(self, sample_record):
        with pytest.raises(UnsupportedInputError):
            OracleInpainter().inpaint(
                sample_record.frame, core.binarize(sample_record.parsing)
            )


class TestToyEmbedder:
    def test_deterministic(self):
        a = ToyEmbedder("image", 32, seed=5)
        b = ToyEmbedder("image", 32, seed=5)
        x = torch.rand(1, 3, 32, 32, generator=torch.Generator().manual_seed(1))
        assert torch.equal(a.embed(x), b.embed(x))

    def test_same_image_same_embedding(self):
        e = ToyEmbedder("face", 64, seed=2)
        x = torch.rand(1, 3, 48, 48, generator=torch.Generator().manual_seed(3))
        assert torch.equal(e.embed(x), e.embed(x.clone()))

    def test_distinct_images_distinct_embeddings(self):
        e = ToyEmbedder("face", 64, seed=2)
        g = torch.Generator().manual_seed(4)
        x1 = torch.rand(1, 3, 48, 48, generator=g)
        x2 = torch.rand(1, 3, 48, 48, generator=g)
        assert not torch.equal(e.embed(x1), e.embed(x2))

    def test_embedding_dim(self):
        assert ToyEmbedder("face", 128, seed=0).embed(torch.rand(2, 3, 16, 16)).shape == (2, 128)

    def test_paper_scale_dims(self):
        face = ToyEmbedder("face", 2048, seed=0)
        img = ToyEmbedder("image", 512, seed=1)
        assert face.dim + 4 * img.dim == 4096

    def test_empty_layer_spec_rejected(self):
        with pytest.raises(core.ConfigError):
            ToyEmbedder("face", 8, seed=0, layer_spec=())

    def test_lipschitz_bound(self):
        e = ToyEmbedder("image", 16, seed=7)
        L = e.lipschitz_bound
        g = torch.Generator().manual_seed(11)
        x = torch.rand(1, 3, 24, 24, generator=g)
        for _ in range(20):
            delta = torch.randn(1, 3, 24, 24, generator=g) * 0.05
            lhs = (e.embed(x + delta) - e.embed(x)).norm()
            assert lhs <= L * delta.norm() + 1e-6

    def test_taps_exposed(self):
        e = ToyEmbedder("image", 8, seed=0)
        acts = e.activations(torch.rand(1, 3, 32, 32))
        assert list(acts) == ["low", "mid", "high", "embed"]
        assert acts["low"].shape[2:] == (32, 32)
        assert acts["mid"].shape[2:] == (8, 8)
        assert acts["high"].shape[2:] == (2, 2)


def _kps(points):
    return KeypointSet([Keypoint(n, x, y, v) for n, x, y, v in points])


class TestFaceBox:
    def test_landmarks_inside_box(self, sample_record):
        box = face_box(sample_record.pose.keypoints, out_size=32, margin=0.2, frame_size=(128, 80))
        for p in sample_record.pose.keypoints.visible_subset("face_"):
            assert box.x0 - 1e-6 <= p.x <= box.x0 + box.side + 1e-6
            assert box.y0 - 1e-6 <= p.y <= box.y0 + box.side + 1e-6

    def test_margin_zero_tight(self):
        kps = _kps([("face_a", 10.0, 20.0, True), ("face_b", 14.0, 26.0, True)])
        box = face_box(kps, margin=0.0)
        assert box.side == pytest.approx(6.0)

    def test_clamped_at_frame_edge(self):
        kps = _kps([("face_a", 1.0, 1.0, True), ("face_b", 6.0, 5.0, True)])
        box = face_box(kps, margin=1.0, frame_size=(40, 30))
        assert box.x0 >= 0 and box.y0 >= 0

    def test_no_visible_landmarks(self):
        kps = _kps([("face_a", 1.0, 1.0, False), ("nose", 5.0, 5.0, True)])
        with pytest.raises(NoFaceError):
            face_box(kps)

    def test_crop_resize_shape(self, sample_record):
        box = face_box(sample_record.pose.keypoints, out_size=24, frame_size=(128, 80))
        crop = crop_resize(sample_record.frame, box)
        assert crop.shape == (24, 24, 3)


class TestProvidersBundle:
    def test_build_and_counts(self, sample_record):
        prov = PerceptionProviders.build(ProviderConfig(face_dim=16, image_dim=8))
        prov.hp.parse(sample_record)
        prov.op.detect(sample_record)
        counts = prov.call_counts()
        assert counts["hp"] == 1 and counts["op"] == 1 and counts["dp"] == 0
