"""Capture synthesis-block activations from a StyleGAN2-ADA generator.

The adapter duck-types the NVlabs layout: a generator with ``z_dim``, a
``mapping`` module, and a ``synthesis`` module whose children are resolution
blocks named ``b4``, ``b8``, ... Each block's feature output (the tensor it
passes to the next stage, i.e. post-block activations after the final
convolution) is captured with a forward hook; this is the extraction point,
chosen because it is the only activation the checkpoint structure exposes
uniformly. Checkpoints are loaded with ``torch.load``; original NVlabs
pickles additionally need their ``dnnlib``/``torch_utils`` code importable.

Activations are transposed to channel-last and written as a feature store
(see store_writer); generated images are saved as PPM at output resolution
with no post-processing.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .store_writer import write_block_file, write_manifest, write_ppm

DEFAULT_CLASS_NAMES = [
    "Whitespace",
    "Cortical Tubulointerstitium",
    "Glomerulus",
    "Arteriole",
    "Artery",
]


class ExportError(Exception):
    exit_code = 1


class CheckpointLoadError(ExportError):
    exit_code = 3


@dataclass
class ExportConfig:
    checkpoint: str
    out_dir: str
    n_images: int
    truncation: float = 0.7
    latent_seed: int = 0
    block_count: int = 5
    class_names: list[str] = field(default_factory=lambda: list(DEFAULT_CLASS_NAMES))

    def validate(self) -> None:
        if not 0.0 < self.truncation <= 1.0:
            raise ExportError(f"truncation must be in (0, 1], got {self.truncation}")
        if self.block_count < 1:
            raise ExportError(f"block count must be >= 1, got {self.block_count}")
        if self.n_images < 1:
            raise ExportError(f"need at least one image, got {self.n_images}")


def load_generator(path: str) -> torch.nn.Module:
    try:
        payload = torch.load(path, map_location="cpu", weights_only=False)
    except Exception as exc:  # noqa: BLE001 - any unpickling failure is fatal
        raise CheckpointLoadError(f"cannot load checkpoint {path}: {exc}") from exc
    generator = payload
    if isinstance(payload, dict):
        for key in ("G_ema", "G", "generator"):
            if key in payload:
                generator = payload[key]
                break
    if not hasattr(generator, "synthesis"):
        raise CheckpointLoadError(
            f"checkpoint {path} does not expose a generator with a .synthesis module"
        )
    generator.eval()
    return generator


def _synthesis_blocks(generator) -> list[tuple[int, str, torch.nn.Module]]:
    """(resolution, name, module) for every b<res> child, coarse to fine."""
    blocks = []
    for name, module in generator.synthesis.named_children():
        match = re.fullmatch(r"b(\d+)", name)
        if match:
            blocks.append((int(match.group(1)), name, module))
    if not blocks:
        raise ExportError("synthesis module has no b<resolution> blocks")
    return sorted(blocks, key=lambda item: item[0])


def _feature_of(output) -> torch.Tensor:
    # synthesis blocks return (x, img); bare tensors are accepted too
    tensor = output[0] if isinstance(output, (tuple, list)) else output
    if not torch.is_tensor(tensor) or tensor.dim() != 4:
        raise ExportError(f"unexpected block output of type {type(tensor)}")
    return tensor


def _run_generator(generator, z: torch.Tensor, truncation: float) -> torch.Tensor:
    try:
        return generator(z, None, truncation_psi=truncation, noise_mode="const")
    except TypeError:
        return generator(z, truncation_psi=truncation)


def export_features(config: ExportConfig) -> Path:
    """Generate images, capture last-k block activations, write the store."""
    config.validate()
    generator = load_generator(config.checkpoint)
    torch.use_deterministic_algorithms(True)

    resolution_blocks = _synthesis_blocks(generator)
    if config.block_count > len(resolution_blocks):
        raise ExportError(
            f"asked for {config.block_count} blocks, synthesis has {len(resolution_blocks)}"
        )
    captured_blocks = resolution_blocks[-config.block_count :]

    capture: dict[str, torch.Tensor] = {}
    handles = []
    for _, name, module in captured_blocks:
        def hook(mod, args, output, name=name):
            capture[name] = _feature_of(output).detach()

        handles.append(module.register_forward_hook(hook))

    out_dir = Path(config.out_dir)
    if out_dir.exists() and any(out_dir.iterdir()):
        raise ExportError(f"refusing to write into non-empty directory {out_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)

    z_dim = int(getattr(generator, "z_dim", 512))
    block_shapes: list[tuple[int, int]] | None = None
    image_size: int | None = None
    image_entries = []
    try:
        for index in range(config.n_images):
            image_id = f"img_{index:03d}"
            image_seed = config.latent_seed + index
            stream = torch.Generator(device="cpu").manual_seed(image_seed)
            z = torch.randn(1, z_dim, generator=stream)
            capture.clear()
            with torch.no_grad():
                img = _run_generator(generator, z, config.truncation)

            missing = [name for _, name, _ in captured_blocks if name not in capture]
            if missing:
                raise ExportError(f"blocks produced no activations: {missing}")
            shapes = []
            block_files = []
            for block_index, (resolution, name, _) in enumerate(captured_blocks):
                activation = capture[name][0]  # [C, H, W]
                channels, height, width = activation.shape
                if height != resolution or width != resolution:
                    raise ExportError(
                        f"block {name} emitted {height}x{width}, expected {resolution}"
                    )
                shapes.append((height, channels))
                channel_last = (
                    activation.permute(1, 2, 0).contiguous().numpy().astype(np.float32)
                )
                relative = f"images/{image_id}/block_{block_index}.hdgf"
                write_block_file(out_dir / relative, channel_last)
                block_files.append(relative)

            if block_shapes is None:
                block_shapes = shapes
                image_size = shapes[-1][0]
                for resolution, _ in shapes:
                    if image_size % resolution:
                        raise ExportError(
                            f"block resolution {resolution} does not divide "
                            f"output size {image_size}"
                        )
            elif shapes != block_shapes:
                raise ExportError(f"{image_id}: block shapes changed between images")

            frame = img[0]
            if frame.shape[-1] != image_size or frame.shape[-2] != image_size:
                raise ExportError(
                    f"generator output {tuple(frame.shape)} does not end at the "
                    f"finest captured block resolution {image_size}"
                )
            rgb = (
                (frame.clamp(-1.0, 1.0).permute(1, 2, 0).numpy() + 1.0) * 127.5
            ).round().astype(np.uint8)
            render_rel = f"renders/{image_id}.ppm"
            write_ppm(rgb, out_dir / render_rel)

            image_entries.append(
                {
                    "image_id": image_id,
                    "block_files": block_files,
                    "mask_file": None,
                    "render_file": render_rel,
                    "metadata": {"seed": image_seed, "truncation": config.truncation},
                }
            )
    finally:
        for handle in handles:
            handle.remove()

    write_manifest(out_dir, image_size, config.class_names, block_shapes, image_entries)
    return out_dir
