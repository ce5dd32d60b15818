"""Network blocks for the three trainable stages.

The body-map generator is an encode / residual / decode CNN over the
concatenated conditioning stack (one-hot target parsing + stick render
+ dense body-surface render) emitting 22 label logits. The frame
renderer decodes a projected identity embedding through upsampling
stages whose normalization layers are modulated by the conditioning
map. Discriminators are patch-level and expose per-layer activations
for feature-matching losses.
"""

from __future__ import annotations

import math

import torch
import torch.nn as nn
import torch.nn.functional as F


def init_weights(module: nn.Module) -> None:
    """Normal(0, 0.02) init, draws from the ambient torch RNG."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
            nn.init.normal_(m.weight, 0.0, 0.02)
            if m.bias is not None:
                nn.init.zeros_(m.bias)
        elif isinstance(m, (nn.BatchNorm2d, nn.InstanceNorm2d)) and m.affine:
            nn.init.normal_(m.weight, 1.0, 0.02)
            nn.init.zeros_(m.bias)


class ResBlock(nn.Module):
    def __init__(self, ch: int) -> None:
        super().__init__()
        self.conv0 = nn.Conv2d(ch, ch, 3, padding=1)
        self.bn0 = nn.BatchNorm2d(ch)
        self.conv1 = nn.Conv2d(ch, ch, 3, padding=1)
        self.bn1 = nn.BatchNorm2d(ch)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = F.relu(self.bn0(self.conv0(x)))
        h = self.bn1(self.conv1(h))
        return x + h


class BodyMapGenerator(nn.Module):
    """Conditioning stack -> 22-channel label logits at input resolution."""

    def __init__(self, in_ch: int = 28, out_ch: int = 22, ngf: int = 24, n_res: int = 4) -> None:
        super().__init__()
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.stem = nn.Sequential(
            nn.Conv2d(in_ch, ngf, 7, padding=3), nn.BatchNorm2d(ngf), nn.ReLU(inplace=True)
        )
        self.down = nn.Sequential(
            nn.Conv2d(ngf, 2 * ngf, 3, stride=2, padding=1),
            nn.BatchNorm2d(2 * ngf),
            nn.ReLU(inplace=True),
            nn.Conv2d(2 * ngf, 4 * ngf, 3, stride=2, padding=1),
            nn.BatchNorm2d(4 * ngf),
            nn.ReLU(inplace=True),
        )
        self.res = nn.Sequential(*[ResBlock(4 * ngf) for _ in range(n_res)])
        self.up = nn.Sequential(
            nn.ConvTranspose2d(4 * ngf, 2 * ngf, 4, stride=2, padding=1),
            nn.InstanceNorm2d(2 * ngf, affine=True),
            nn.ReLU(inplace=True),
            nn.ConvTranspose2d(2 * ngf, ngf, 4, stride=2, padding=1),
            nn.InstanceNorm2d(ngf, affine=True),
            nn.ReLU(inplace=True),
        )
        self.head = nn.Conv2d(ngf, out_ch, 7, padding=3)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.stem(x)
        h = self.down(h)
        h = self.res(h)
        h = self.up(h)
        return self.head(h)


class PatchDiscriminator(nn.Module):
    """PatchGAN discriminator returning all intermediate activations."""

    def __init__(self, in_ch: int, ndf: int = 24) -> None:
        super().__init__()
        self.block0 = nn.Sequential(nn.Conv2d(in_ch, ndf, 4, stride=2, padding=1))
        self.block1 = nn.Sequential(
            nn.Conv2d(ndf, 2 * ndf, 4, stride=2, padding=1),
            nn.InstanceNorm2d(2 * ndf, affine=True),
        )
        self.block2 = nn.Sequential(
            nn.Conv2d(2 * ndf, 4 * ndf, 4, stride=1, padding=1),
            nn.InstanceNorm2d(4 * ndf, affine=True),
        )
        self.out = nn.Conv2d(4 * ndf, 1, 4, stride=1, padding=1)

    def forward(self, x: torch.Tensor) -> list[torch.Tensor]:
        a0 = F.leaky_relu(self.block0(x), 0.2)
        a1 = F.leaky_relu(self.block1(a0), 0.2)
        a2 = F.leaky_relu(self.block2(a1), 0.2)
        return [a0, a1, a2, self.out(a2)]


class MultiScaleDiscriminator(nn.Module):
    """Full- and half-resolution patch discriminators."""

    def __init__(self, in_ch: int, ndf: int = 24, n_scales: int = 2) -> None:
        super().__init__()
        self.scales = nn.ModuleList([PatchDiscriminator(in_ch, ndf) for _ in range(n_scales)])

    def forward(self, x: torch.Tensor) -> list[list[torch.Tensor]]:
        outs = []
        cur = x
        for i, d in enumerate(self.scales):
            if i > 0:
                cur = F.avg_pool2d(cur, 3, stride=2, padding=1, count_include_pad=False)
            outs.append(d(cur))
        return outs


class Spade(nn.Module):
    """Parameter-free norm modulated by the conditioning label map."""

    def __init__(self, ch: int, cond_ch: int, hidden: int = 32) -> None:
        super().__init__()
        self.norm = nn.InstanceNorm2d(ch, affine=False)
        self.shared = nn.Sequential(nn.Conv2d(cond_ch, hidden, 3, padding=1), nn.ReLU(inplace=True))
        self.gamma = nn.Conv2d(hidden, ch, 3, padding=1)
        self.beta = nn.Conv2d(hidden, ch, 3, padding=1)

    def forward(self, x: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        c = F.interpolate(cond, size=x.shape[2:], mode="nearest")
        h = self.shared(c)
        return self.norm(x) * (1.0 + self.gamma(h)) + self.beta(h)


class SpadeResBlock(nn.Module):
    def __init__(self, in_ch: int, out_ch: int, cond_ch: int) -> None:
        super().__init__()
        mid = min(in_ch, out_ch)
        self.norm0 = Spade(in_ch, cond_ch)
        self.conv0 = nn.Conv2d(in_ch, mid, 3, padding=1)
        self.norm1 = Spade(mid, cond_ch)
        self.conv1 = nn.Conv2d(mid, out_ch, 3, padding=1)
        self.learned_skip = in_ch != out_ch
        if self.learned_skip:
            self.norm_s = Spade(in_ch, cond_ch)
            self.conv_s = nn.Conv2d(in_ch, out_ch, 1, bias=False)

    def forward(self, x: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        skip = self.conv_s(self.norm_s(x, cond)) if self.learned_skip else x
        h = self.conv0(F.leaky_relu(self.norm0(x, cond), 0.2))
        h = self.conv1(F.leaky_relu(self.norm1(h, cond), 0.2))
        return skip + h


class FrameRenderer(nn.Module):
    """Identity embedding + conditioning map -> (image, blending mask).

    The embedding is projected to a 4x4 base tensor and decoded through
    upsampling stages with map-modulated normalization; the square
    decode canvas is center-cropped to the configured resolution.
    """

    def __init__(
        self,
        embed_dim: int,
        out_size: tuple[int, int],
        cond_ch: int = 27,
        base_ch: int = 192,
        min_ch: int = 16,
    ) -> None:
        super().__init__()
        h, w = out_size
        self.out_size = (h, w)
        self.cond_ch = cond_ch
        side = max(h, w)
        self.n_stages = max(1, math.ceil(math.log2(side / 4.0)))
        self.canvas = 4 * 2**self.n_stages
        if self.canvas < side:
            self.n_stages += 1
            self.canvas *= 2
        chans = [base_ch]
        for i in range(self.n_stages):
            chans.append(max(min_ch, base_ch // 2 ** (i + 1)))
        self.fc = nn.Linear(embed_dim, 4 * 4 * chans[0])
        self.blocks = nn.ModuleList(
            [SpadeResBlock(chans[i], chans[i + 1], cond_ch) for i in range(self.n_stages)]
        )
        self.img_head = nn.Conv2d(chans[-1], 3, 3, padding=1)
        self.mask_head = nn.Conv2d(chans[-1], 1, 3, padding=1)

    def project(self, e_z: torch.Tensor) -> torch.Tensor:
        """Per-person constant: embedding -> 4x4 base tensor."""
        b = e_z.shape[0]
        return self.fc(e_z).view(b, -1, 4, 4)

    def pad_cond(self, cond: torch.Tensor) -> tuple[torch.Tensor, tuple[int, int]]:
        b, c, h, w = cond.shape
        top = (self.canvas - h) // 2
        left = (self.canvas - w) // 2
        canvas = cond.new_zeros((b, c, self.canvas, self.canvas))
        canvas[:, 0] = 1.0  # padding is background
        canvas[:, :, top : top + h, left : left + w] = cond
        return canvas, (top, left)

    def decode(self, base: torch.Tensor, cond: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        h, w = self.out_size
        cond_canvas, (top, left) = self.pad_cond(cond)
        x = base
        for block in self.blocks:
            x = F.interpolate(x, scale_factor=2.0, mode="nearest")
            x = block(x, cond_canvas)
        x = x[:, :, top : top + h, left : left + w]
        x = F.leaky_relu(x, 0.2)
        return torch.sigmoid(self.img_head(x)), torch.sigmoid(self.mask_head(x))

    def forward(self, cond: torch.Tensor, e_z: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        return self.decode(self.project(e_z), cond)


class FaceRefiner(nn.Module):
    """Autoencoder over a face crop, conditioned on an identity embedding."""

    def __init__(self, embed_dim: int, crop: int = 64, base: int = 32) -> None:
        super().__init__()
        self.crop = crop
        self.enc = nn.Sequential(
            nn.Conv2d(3, base, 3, padding=1),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(base, 2 * base, 4, stride=2, padding=1),
            nn.InstanceNorm2d(2 * base, affine=True),
            nn.LeakyReLU(0.2, inplace=True),
            nn.Conv2d(2 * base, 4 * base, 4, stride=2, padding=1),
            nn.InstanceNorm2d(4 * base, affine=True),
            nn.LeakyReLU(0.2, inplace=True),
        )
        self.cond_fc = nn.Linear(embed_dim, 4 * base)
        self.merge = nn.Sequential(
            nn.Conv2d(8 * base, 4 * base, 3, padding=1),
            nn.InstanceNorm2d(4 * base, affine=True),
            nn.LeakyReLU(0.2, inplace=True),
        )
        self.dec = nn.Sequential(
            nn.ConvTranspose2d(4 * base, 2 * base, 4, stride=2, padding=1),
            nn.InstanceNorm2d(2 * base, affine=True),
            nn.LeakyReLU(0.2, inplace=True),
            nn.ConvTranspose2d(2 * base, base, 4, stride=2, padding=1),
            nn.InstanceNorm2d(base, affine=True),
            nn.LeakyReLU(0.2, inplace=True),
        )
        self.img_head = nn.Conv2d(base, 3, 3, padding=1)
        self.mask_head = nn.Conv2d(base, 1, 3, padding=1)

    def forward(self, crop: torch.Tensor, cond_vec: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        if crop.shape[2] != crop.shape[3]:
            raise ValueError(f"face crop must be square, got {tuple(crop.shape)}")
        h = self.enc(crop)
        c = self.cond_fc(cond_vec)[:, :, None, None].expand(-1, -1, h.shape[2], h.shape[3])
        h = self.merge(torch.cat([h, c], dim=1))
        h = self.dec(h)
        return torch.sigmoid(self.img_head(h)), torch.sigmoid(self.mask_head(h))
