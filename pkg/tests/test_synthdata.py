import math
from dataclasses import replace

import numpy as np
import pytest

from reenact import core, synthdata
from reenact.core import FormatError, PlacementError
from reenact.synthdata import (
    BodyParams,
    PoseParams,
    canonical_pose,
    generate_dataset,
    load_dataset,
    render_person,
    sample_body,
    sample_sequence,
    sample_training_pair,
    write_dataset,
)

SIZE = (128, 80)


class TestRenderPerson:
    def test_deterministic(self, rng):
        body = sample_body(rng)
        a = render_person(body, canonical_pose(), SIZE)
        b = render_person(body, canonical_pose(), SIZE)
        assert a == b

    def test_arm_width_doubles_pixel_count(self):
        base = BodyParams()
        thick = replace(base, arm_halfw=2 * base.arm_halfw)
        c1 = (render_person(base, canonical_pose(), SIZE).parsing.labels == core.LABEL_LEFT_ARM).sum()
        c2 = (render_person(thick, canonical_pose(), SIZE).parsing.labels == core.LABEL_LEFT_ARM).sum()
        assert abs(c2 / c1 - 2.0) < 0.2

    def test_canonical_pose_symmetric(self, rng):
        rec = render_person(sample_body(rng), canonical_pose(), SIZE)
        swap = np.arange(core.N_COND_LABELS, dtype=np.uint8)
        for a, b in [
            (core.LABEL_LEFT_ARM, core.LABEL_RIGHT_ARM),
            (core.LABEL_LEFT_LEG, core.LABEL_RIGHT_LEG),
            (core.LABEL_LEFT_SHOE, core.LABEL_RIGHT_SHOE),
        ]:
            swap[a], swap[b] = b, a
        mirrored = swap[rec.parsing.labels[:, ::-1]]
        assert np.array_equal(mirrored, rec.parsing.labels)

    def test_parsing_nonempty_and_labels_valid(self, tiny_dataset):
        for rec in tiny_dataset.records:
            assert (rec.parsing.labels != 0).sum() > 0
            assert rec.parsing.labels.max() < core.N_BODY_LABELS

    def test_keypoints_near_figure(self, tiny_dataset):
        for rec in tiny_dataset.records[:6]:
            fg = rec.parsing.labels != 0
            ys, xs = np.nonzero(fg)
            for kp in rec.pose.keypoints:
                if not kp.visible:
                    continue
                d = np.min(np.hypot(xs + 0.5 - kp.x, ys + 0.5 - kp.y))
                assert d <= 2.0, (kp.name, d)

    def test_dense_background_matches_parsing(self, tiny_dataset):
        for rec in tiny_dataset.records[:6]:
            assert np.array_equal(rec.pose.dense[..., 2] == 0, rec.parsing.labels == 0)

    def test_dense_part_indices_bounded(self, sample_record):
        assert sample_record.pose.dense[..., 2].max() <= core.DENSE_PART_MAX
        assert sample_record.pose.dense[..., :2].min() >= 0.0
        assert sample_record.pose.dense[..., :2].max() <= 1.0

    def test_one_hot_sums_match_label_counts(self, sample_record):
        oh = core.one_hot(sample_record.parsing, core.N_BODY_LABELS)
        for lbl in range(core.N_BODY_LABELS):
            assert oh[lbl].sum() == (sample_record.parsing.labels == lbl).sum()

    def test_oversize_body_rejected(self):
        with pytest.raises(PlacementError):
            render_person(BodyParams(torso_halfw=0.6), canonical_pose(), SIZE)

    def test_joint_limits_enforced(self):
        angles = dict(synthdata.CANONICAL_ANGLES)
        angles["l_shoulder"] = 3.0
        with pytest.raises(ValueError):
            PoseParams(angles=angles)


class TestSequences:
    def test_length_one_is_canonical(self, rng):
        body = sample_body(rng)
        seq = sample_sequence(body, 1, seed=5, size=SIZE)
        assert len(seq) == 1
        assert seq[0] == render_person(body, canonical_pose(), SIZE, frame_index=0)

    def test_seed_reproducible(self, rng):
        body = sample_body(rng)
        a = sample_sequence(body, 5, seed=9, size=SIZE)
        b = sample_sequence(body, 5, seed=9, size=SIZE)
        assert a == b

    def test_shared_person_id(self, rng):
        seq = sample_sequence(sample_body(rng), 4, seed=2, size=SIZE, person_id="p007")
        assert all(r.person_id == "p007" for r in seq)
        assert [r.frame_index for r in seq] == [0, 1, 2, 3]


class TestTrainingPairs:
    def test_window_zero_self_pair(self, tiny_dataset, rng):
        a, b = sample_training_pair(tiny_dataset, window=0, rng=rng)
        assert a.person_id == b.person_id
        assert a.frame_index == b.frame_index

    def test_window_bound_holds(self, tiny_dataset, rng):
        for _ in range(10_000):
            a, b = sample_training_pair(tiny_dataset, window=2, rng=rng)
            assert abs(a.frame_index - b.frame_index) <= 2

    def test_never_cross_person(self, tiny_dataset, rng):
        for _ in range(2000):
            a, b = sample_training_pair(tiny_dataset, window=250, rng=rng)
            assert a.person_id == b.person_id

    def test_empty_dataset_exhausts(self, rng):
        empty = synthdata.Dataset(by_person={}, size=SIZE)
        with pytest.raises(core.ExhaustionError):
            sample_training_pair(empty, rng=rng)


class TestDatasetIO:
    def test_round_trip(self, tmp_path):
        ds = generate_dataset(2, 3, SIZE, seed=7)
        write_dataset(ds, tmp_path / "ds")
        back = load_dataset(tmp_path / "ds")
        assert back.size == ds.size
        assert back.persons == ds.persons
        for pid in ds.persons:
            assert back.by_person[pid] == ds.by_person[pid]

    def test_manifest_counts(self, tmp_path):
        ds = generate_dataset(2, 3, SIZE, seed=7)
        write_dataset(ds, tmp_path / "ds")
        text = (tmp_path / "ds" / "manifest").read_text()
        assert "person p000 3" in text
        assert "person p001 3" in text

    def test_missing_file_errors(self, tmp_path):
        ds = generate_dataset(1, 2, SIZE, seed=7)
        write_dataset(ds, tmp_path / "ds")
        (tmp_path / "ds" / "persons" / "p000" / "frames" / "0001.map.png").unlink()
        with pytest.raises(FormatError):
            load_dataset(tmp_path / "ds")

    def test_corrupt_manifest_errors(self, tmp_path):
        ds = generate_dataset(1, 2, SIZE, seed=7)
        write_dataset(ds, tmp_path / "ds")
        (tmp_path / "ds" / "manifest").write_text("garbage 99\n")
        with pytest.raises(FormatError):
            load_dataset(tmp_path / "ds")

    def test_missing_manifest_errors(self, tmp_path):
        with pytest.raises(FormatError):
            load_dataset(tmp_path)


class TestStickRender:
    def test_colors_on_8bit_grid(self, sample_record):
        vals = sample_record.pose.stick.values * 255.0
        assert np.allclose(vals, np.round(vals))

    def test_limb_legend_stable(self, rng):
        body = sample_body(rng)
        a = render_person(body, canonical_pose(), SIZE)
        b = render_person(body, canonical_pose(), SIZE)
        assert a.pose.stick == b.pose.stick

    def test_joints_on_sticks(self, sample_record):
        stick = sample_record.pose.stick.values
        lit = stick.sum(axis=2) > 0
        ys, xs = np.nonzero(lit)
        for name in ("neck", "pelvis", "l_elbow", "r_knee"):
            kp = sample_record.pose.keypoints.get(name)
            d = np.min(np.hypot(xs + 0.5 - kp.x, ys + 0.5 - kp.y))
            assert d <= 1.5, (name, d)
