"""End-to-end orchestration: checkpoints, per-frame flow, caching.

A reenactment run fixes one target person and streams driving frames.
Per-person work (parsing the target, extracting identity crops, the
identity embedding and its projection to the renderer's base tensor,
the reference face crop) happens exactly once; every frame then only
needs the three stage forwards plus blending. Frames are processed
independently, so outputs are a pure function of (constants, driving
frame, background frame) and any processing order yields identical
results.
"""

from __future__ import annotations

import logging
import pickle
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from scipy import ndimage

from . import augment, bodymap, core, face_refine, renderer
from .config import PipelineConfig
from .core import BlendMask, CheckpointError, Frame, LabelSpace, SemanticMap, blend
from .networks import BodyMapGenerator, FaceRefiner, FrameRenderer
from .perception import PerceptionProviders, crop_resize, face_box
from .synthdata import Dataset, SampleRecord

logger = logging.getLogger("reenact")

CHECKPOINT_VERSION = 1
STAGE_KINDS = ("p2b", "b2f", "fr")


@dataclass
class Checkpoint:
    kind: str
    size: tuple[int, int]
    label_space: dict
    provider: dict
    stage_cfg: dict
    states: dict[str, dict[str, np.ndarray]]

    def state_tensors(self, module: str) -> dict[str, torch.Tensor]:
        return {k: torch.from_numpy(v.copy()) for k, v in self.states[module].items()}


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    payload = {
        "format": "reenact-checkpoint",
        "version": CHECKPOINT_VERSION,
        "kind": ckpt.kind,
        "size": tuple(ckpt.size),
        "label_space": ckpt.label_space,
        "provider": ckpt.provider,
        "stage_cfg": ckpt.stage_cfg,
        "states": ckpt.states,
    }
    Path(path).write_bytes(pickle.dumps(payload, protocol=4))


def load_checkpoint(path: str | Path) -> Checkpoint:
    try:
        payload = pickle.loads(Path(path).read_bytes())
    except Exception as exc:
        raise CheckpointError(f"{path}: cannot read checkpoint: {exc}") from exc
    if not isinstance(payload, dict) or payload.get("format") != "reenact-checkpoint":
        raise CheckpointError(f"{path}: not a reenact checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: checkpoint version {payload.get('version')} needs migration; "
            f"this build reads version {CHECKPOINT_VERSION}"
        )
    if payload.get("kind") not in STAGE_KINDS:
        raise CheckpointError(f"{path}: unknown stage kind {payload.get('kind')!r}")
    return Checkpoint(
        kind=payload["kind"],
        size=tuple(payload["size"]),
        label_space=payload["label_space"],
        provider=payload["provider"],
        stage_cfg=payload["stage_cfg"],
        states=payload["states"],
    )


def _states_of(modules: dict[str, torch.nn.Module]) -> dict[str, dict[str, np.ndarray]]:
    return {
        name: {k: v.detach().cpu().numpy().copy() for k, v in m.state_dict().items()}
        for name, m in modules.items()
    }


def checkpoint_from_stage(
    kind: str,
    modules: dict[str, torch.nn.Module],
    cfg: PipelineConfig,
    stage_cfg_dict: dict,
) -> Checkpoint:
    provider = {
        "seed": cfg.providers.seed,
        "face_dim": cfg.providers.face_dim,
        "image_dim": cfg.providers.image_dim,
        "face_margin": cfg.providers.face_margin,
        "inpaint_dilate": cfg.providers.inpaint_dilate,
    }
    return Checkpoint(
        kind=kind,
        size=tuple(cfg.size),
        label_space=LabelSpace().to_meta(),
        provider=provider,
        stage_cfg=stage_cfg_dict,
        states=_states_of(modules),
    )


def build_stage_model(ckpt: Checkpoint):
    """Reconstruct the stage generator in eval mode from a checkpoint."""
    cfg = ckpt.stage_cfg
    if ckpt.kind == "p2b":
        model = BodyMapGenerator(
            in_ch=bodymap.IN_CHANNELS,
            out_ch=core.N_BODY_LABELS,
            ngf=cfg["ngf"],
            n_res=cfg["n_res"],
        )
    elif ckpt.kind == "b2f":
        embed_dim = ckpt.provider["face_dim"] + 4 * ckpt.provider["image_dim"]
        model = FrameRenderer(
            embed_dim=embed_dim,
            out_size=tuple(ckpt.size),
            cond_ch=core.N_COND_LABELS,
            base_ch=cfg["base_channels"],
        )
    elif ckpt.kind == "fr":
        model = FaceRefiner(
            embed_dim=ckpt.provider["face_dim"], crop=cfg["crop"], base=cfg["base_channels"]
        )
    else:
        raise CheckpointError(f"unknown stage kind {ckpt.kind!r}")
    model.load_state_dict(ckpt.state_tensors("generator"))
    model.eval()
    return model


# ---------------------------------------------------------------------------
# Background preparation
# ---------------------------------------------------------------------------


def extract_target_background(
    frame: Frame,
    parsing: SemanticMap,
    providers: PerceptionProviders,
    record: SampleRecord | None = None,
    dilate_radius: int | None = None,
) -> Frame:
    """Regenerate the dilated figure region, keeping the rest untouched."""
    radius = providers.inpaint_dilate if dilate_radius is None else dilate_radius
    fg = core.binarize(parsing).values.astype(bool)
    if radius > 0:
        fg = ndimage.binary_dilation(fg, iterations=radius)
    return providers.inpaint.inpaint(frame, BlendMask(fg.astype(np.float64)), record=record)


def resolve_backgrounds(
    mode: str,
    n_frames: int,
    driving: list[SampleRecord],
    target: SampleRecord,
    providers: PerceptionProviders,
) -> list[Frame]:
    """Background source: 'inpaint-driving', 'inpaint-target', file or dir."""
    if mode == "inpaint-driving":
        return [
            extract_target_background(rec.frame, rec.parsing, providers, record=rec)
            for rec in driving
        ]
    if mode == "inpaint-target":
        bg = extract_target_background(target.frame, target.parsing, providers, record=target)
        return [bg] * n_frames
    path = Path(mode)
    if path.is_file():
        return [core.decode_frame(path)] * n_frames
    if path.is_dir():
        files = sorted(path.glob("*.png"))
        if len(files) < n_frames:
            raise core.ShapeError(
                f"background directory holds {len(files)} frames, need {n_frames}"
            )
        return [core.decode_frame(p) for p in files[:n_frames]]
    raise core.ConfigError(f"unknown background source {mode!r}")


# ---------------------------------------------------------------------------
# Reenactor
# ---------------------------------------------------------------------------


@dataclass
class ReenactFrame:
    frame: Frame
    body_map: SemanticMap
    mask: BlendMask
    composited: Frame  # before face refinement


class Reenactor:
    """Loads the three stage checkpoints and runs the per-frame flow."""

    def __init__(
        self,
        p2b_path: str | Path,
        b2f_path: str | Path,
        fr_path: str | Path | None,
        providers: PerceptionProviders | None = None,
    ) -> None:
        ck_p2b = load_checkpoint(p2b_path)
        ck_b2f = load_checkpoint(b2f_path)
        ck_fr = load_checkpoint(fr_path) if fr_path else None
        expected = {"p2b": ck_p2b.kind, "b2f": ck_b2f.kind}
        if ck_fr is not None:
            expected["fr"] = ck_fr.kind
        for want, got in expected.items():
            if want != got:
                raise CheckpointError(f"expected a {want} checkpoint, got {got}")
        sizes = {ck_p2b.size, ck_b2f.size}
        if len(sizes) != 1:
            raise CheckpointError(f"checkpoint resolutions disagree: {sizes}")
        spaces = [ck.label_space for ck in (ck_p2b, ck_b2f, ck_fr) if ck is not None]
        if any(s != spaces[0] for s in spaces):
            raise CheckpointError("checkpoint label spaces disagree")
        provs = [ck.provider for ck in (ck_b2f, ck_fr) if ck is not None]
        if any(p != provs[0] for p in provs):
            raise CheckpointError("checkpoint provider configs disagree")

        self.size = ck_p2b.size
        self.fr_crop = ck_fr.stage_cfg["crop"] if ck_fr is not None else 64
        if providers is None:
            from .config import ProviderConfig

            providers = PerceptionProviders.build(
                ProviderConfig(
                    seed=ck_b2f.provider["seed"],
                    face_dim=ck_b2f.provider["face_dim"],
                    image_dim=ck_b2f.provider["image_dim"],
                    face_margin=ck_b2f.provider["face_margin"],
                    inpaint_dilate=ck_b2f.provider["inpaint_dilate"],
                )
            )
        else:
            if providers.face_embed.dim != ck_b2f.provider["face_dim"]:
                raise CheckpointError("provider face embedding dim disagrees with checkpoint")
            if providers.image_embed.dim != ck_b2f.provider["image_dim"]:
                raise CheckpointError("provider image embedding dim disagrees with checkpoint")
        self.providers = providers

        self.body_model: BodyMapGenerator = build_stage_model(ck_p2b)
        self.render_model: FrameRenderer = build_stage_model(ck_b2f)
        self.face_model: FaceRefiner | None = (
            build_stage_model(ck_fr) if ck_fr is not None else None
        )
        self.project_calls = 0

    # -- per-person constants -------------------------------------------

    def prepare_target(self, target: SampleRecord) -> dict:
        """Compute and cache everything that depends only on the target."""
        p_star_raw = self.providers.hp.parse(target)
        kps, _ = self.providers.op.detect(target)
        p_star = augment.inject_hand_labels(p_star_raw, kps)
        crops = renderer.part_extract(target.frame, p_star_raw)
        e_z = renderer.embed_identity(crops, self.providers)
        with torch.no_grad():
            base = self.render_model.project(
                torch.from_numpy(e_z.astype(np.float32))[None]
            )
        self.project_calls += 1

        face_ref = None
        if self.face_model is not None:
            try:
                box = face_box(
                    kps,
                    out_size=self.fr_crop,
                    margin=self.providers.face_margin,
                    frame_size=(target.frame.height, target.frame.width),
                )
                crop = crop_resize(target.frame, box)
                ref_embed = self.providers.face_embed.embed_array(crop)
                face_ref = ref_embed
            except core.NoFaceError:
                logger.warning("no face detected in target; face refinement disabled")
        return {
            "p_star": p_star,
            "crops": crops,
            "e_z": e_z,
            "base": base,
            "face_ref": face_ref,
        }

    # -- per-frame flow ---------------------------------------------------

    def render_frame(
        self,
        constants: dict,
        driving: SampleRecord,
        background: Frame,
        force_mask_zero: bool = False,
        skip_fr: bool = False,
    ) -> ReenactFrame:
        kps, stick = self.providers.op.detect(driving)
        dense = self.providers.dp.map(driving)
        pose = core.PoseBundle(keypoints=kps, stick=stick, dense=dense)

        _, gen_map = bodymap.forward_map(self.body_model, constants["p_star"], pose)
        cond = augment.inject_face_labels(gen_map, kps)
        cond_t = torch.from_numpy(renderer.cond_to_tensor(cond))[None]
        with torch.no_grad():
            z_t, m_t = self.render_model.decode(constants["base"], cond_t)
        z = Frame(z_t[0].numpy().astype(np.float64).transpose(1, 2, 0))
        m_values = np.clip(m_t[0, 0].numpy().astype(np.float64), 0.0, 1.0)
        if force_mask_zero:
            m_values = np.zeros_like(m_values)
        mask = BlendMask(m_values)
        composited = blend(z, mask, background)

        out = composited
        if (
            not skip_fr
            and not force_mask_zero
            and self.face_model is not None
            and constants["face_ref"] is not None
        ):
            try:
                box = face_box(
                    kps,
                    out_size=self.fr_crop,
                    margin=self.providers.face_margin,
                    frame_size=(composited.height, composited.width),
                )
                c0 = crop_resize(composited, box)
                crop, crop_mask = face_refine.refine_crop(
                    self.face_model, c0, constants["face_ref"]
                )
                out = face_refine.blend_back(composited, box, crop, crop_mask)
            except core.NoFaceError:
                logger.warning(
                    "no visible face landmarks on driving frame %d; refinement skipped",
                    driving.frame_index,
                )
        return ReenactFrame(frame=out, body_map=gen_map, mask=mask, composited=composited)

    def reenact(
        self,
        target: SampleRecord,
        driving: list[SampleRecord],
        backgrounds: list[Frame],
        force_mask_zero: bool = False,
        skip_fr: bool = False,
    ) -> list[ReenactFrame]:
        if not driving:
            raise core.ShapeError("driving sequence is empty")
        if len(backgrounds) != len(driving):
            raise core.ShapeError(
                f"{len(driving)} driving frames but {len(backgrounds)} backgrounds"
            )
        constants = self.prepare_target(target)
        return [
            self.render_frame(constants, rec, bg, force_mask_zero, skip_fr)
            for rec, bg in zip(driving, backgrounds)
        ]


def write_run(outputs: list[ReenactFrame], out_dir: str | Path, debug_dir: str | Path | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, res in enumerate(outputs):
        core.encode_frame(res.frame, out / f"{i:04d}.frame.png")
        core.encode_map(res.body_map, out / f"{i:04d}.map.png")
    if debug_dir is not None:
        dbg = Path(debug_dir)
        dbg.mkdir(parents=True, exist_ok=True)
        for i, res in enumerate(outputs):
            core.encode_mask(res.mask, dbg / f"{i:04d}.mask.png")
            core.encode_frame(res.composited, dbg / f"{i:04d}.pre_refine.png")


def select_records(dataset: Dataset, spec: str) -> list[SampleRecord]:
    """Parse 'person', 'person:idx' or 'person:a-b' into records."""
    if ":" not in spec:
        pid, rng = spec, None
    else:
        pid, rng = spec.split(":", 1)
    if pid not in dataset.by_person:
        raise core.ConfigError(f"person {pid!r} not in dataset (have {dataset.persons})")
    recs = dataset.by_person[pid]
    if rng is None:
        return list(recs)
    if "-" in rng:
        a, b = rng.split("-", 1)
        lo, hi = int(a), int(b)
        if lo < 0 or hi >= len(recs) or lo > hi:
            raise core.ConfigError(f"frame range {rng} outside 0..{len(recs) - 1}")
        return list(recs[lo : hi + 1])
    idx = int(rng)
    if idx < 0 or idx >= len(recs):
        raise core.ConfigError(f"frame {idx} outside 0..{len(recs) - 1}")
    return [recs[idx]]
