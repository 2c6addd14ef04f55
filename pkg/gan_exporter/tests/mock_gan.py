"""A miniature generator with the StyleGAN2-ADA module layout.

Small enough to run in tests, structurally faithful where the exporter
cares: ``G.z_dim``, ``G.mapping`` with a ``w_avg`` buffer and truncation,
and ``G.synthesis`` with ``b<res>`` blocks that each return ``(x, img)``
at doubling resolutions.
"""

import torch
import torch.nn as nn
import torch.nn.functional as F


class MappingNetwork(nn.Module):
    def __init__(self, z_dim=64, w_dim=64):
        super().__init__()
        self.fc0 = nn.Linear(z_dim, w_dim)
        self.fc1 = nn.Linear(w_dim, w_dim)
        self.register_buffer("w_avg", torch.zeros(w_dim))

    def forward(self, z, c=None, truncation_psi=1.0):
        z = z / (z.square().mean(dim=1, keepdim=True) + 1e-8).sqrt()
        w = F.leaky_relu(self.fc0(z), 0.2)
        w = F.leaky_relu(self.fc1(w), 0.2)
        if truncation_psi != 1.0:
            w = self.w_avg + truncation_psi * (w - self.w_avg)
        return w


class SynthesisBlock(nn.Module):
    def __init__(self, in_channels, out_channels, resolution, w_dim=64, is_first=False):
        super().__init__()
        self.resolution = resolution
        self.is_first = is_first
        if is_first:
            self.const = nn.Parameter(torch.randn(in_channels, resolution, resolution))
        self.affine = nn.Linear(w_dim, in_channels)
        self.conv = nn.Conv2d(in_channels, out_channels, 3, padding=1)
        self.torgb = nn.Conv2d(out_channels, 3, 1)

    def forward(self, x, img, w):
        if self.is_first:
            x = self.const.unsqueeze(0).repeat(w.shape[0], 1, 1, 1)
        else:
            x = F.interpolate(x, scale_factor=2, mode="nearest")
        style = self.affine(w).unsqueeze(-1).unsqueeze(-1)
        x = F.leaky_relu(self.conv(x * (1.0 + 0.1 * style)), 0.2)
        y = self.torgb(x)
        if img is None:
            img = y
        else:
            img = F.interpolate(img, scale_factor=2, mode="nearest") + y
        return x, img


class SynthesisNetwork(nn.Module):
    def __init__(self, resolutions=(4, 8, 16, 32), channels=(32, 16, 8, 4), w_dim=64):
        super().__init__()
        self.img_resolution = resolutions[-1]
        in_channels = channels[0]
        for i, (res, out_channels) in enumerate(zip(resolutions, channels)):
            block = SynthesisBlock(in_channels, out_channels, res, w_dim, is_first=i == 0)
            setattr(self, f"b{res}", block)
            in_channels = out_channels

    def forward(self, w):
        x, img = None, None
        for name, block in self.named_children():
            x, img = block(x, img, w)
        return img


class Generator(nn.Module):
    def __init__(self, z_dim=64, resolutions=(4, 8, 16, 32), channels=(32, 16, 8, 4)):
        super().__init__()
        self.z_dim = z_dim
        self.mapping = MappingNetwork(z_dim=z_dim)
        self.synthesis = SynthesisNetwork(resolutions=resolutions, channels=channels)

    def forward(self, z, c=None, truncation_psi=1.0, noise_mode="const"):
        w = self.mapping(z, c, truncation_psi=truncation_psi)
        return self.synthesis(w)


def make_checkpoint(path, seed=7, **kwargs):
    torch.manual_seed(seed)
    generator = Generator(**kwargs)
    torch.save({"G_ema": generator}, path)
    return path
