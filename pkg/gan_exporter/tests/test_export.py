import hashlib
import json
import struct
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from gan_exporter.export import ExportConfig, ExportError, export_features, load_generator
from gan_exporter.store_writer import read_block_file
from mock_gan import make_checkpoint


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    return make_checkpoint(tmp_path_factory.mktemp("ckpt") / "g.pt", seed=7)


def _export(checkpoint, out, **overrides):
    config = ExportConfig(
        checkpoint=str(checkpoint),
        out_dir=str(out),
        n_images=overrides.pop("n_images", 3),
        truncation=overrides.pop("truncation", 0.7),
        latent_seed=overrides.pop("latent_seed", 11),
        block_count=overrides.pop("block_count", 3),
        **overrides,
    )
    return export_features(config)


def _checksum(root: Path) -> str:
    digest = hashlib.sha256()
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        digest.update(str(path.relative_to(root)).encode())
        digest.update(path.read_bytes())
    return digest.hexdigest()


def test_exported_store_passes_primary_validation(checkpoint, tmp_path):
    out = _export(checkpoint, tmp_path / "store")
    result = subprocess.run(
        ["hdgan", "validate-store", str(out)], capture_output=True, text=True
    )
    assert result.returncode == 0, result.stderr
    manifest = json.loads((out / "manifest.json").read_text())
    # last 3 of the mock's 4 blocks: 8, 16, 32 with its channel counts
    assert [(b["height"], b["channels"]) for b in manifest["blocks"]] == [
        (8, 16), (16, 8), (32, 4),
    ]
    assert manifest["image_height"] == 32
    assert manifest["images"][0]["metadata"] == {"seed": 11, "truncation": 0.7}
    assert (out / "renders" / "img_000.ppm").exists()


def test_primary_inference_runs_on_exported_store(checkpoint, tmp_path):
    out = _export(checkpoint, tmp_path / "store")
    manifest = json.loads((out / "manifest.json").read_text())
    feature_dim = sum(b["channels"] for b in manifest["blocks"])
    model = tmp_path / "m.hdgm"
    _write_minimal_checkpoint(model, feature_dim, len(manifest["class_names"]))
    mask_out = tmp_path / "img_001.pgm"
    result = subprocess.run(
        [
            "hdgan", "infer", "--store", str(out), "--model", str(model),
            "--image", "img_001", "--chunk-mb", "1", "--out", str(mask_out),
        ],
        capture_output=True,
        text=True,
    )
    assert result.returncode == 0, result.stderr
    assert mask_out.exists()


def _write_minimal_checkpoint(path, feature_dim, num_classes, h1=8, h2=4):
    """Hand-rolled .hdgm per the published format; independent of hdgan."""
    rng = np.random.default_rng(0)
    names = [f"class_{i}" for i in range(num_classes)]
    chunks = [
        b"HDGM",
        struct.pack("<IIIIIf", 1, feature_dim, h1, h2, num_classes, 0.0),
        struct.pack("<I", len(names)),
    ]
    for name in names:
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)) + raw)
    shapes = [
        (h1, feature_dim), (h1,), (h1,), (h1,), (h1,), (h1,),
        (h2, h1), (h2,), (h2,), (h2,), (h2,), (h2,),
        (num_classes, h2), (num_classes,),
    ]
    for i, shape in enumerate(shapes):
        if len(shape) == 2:
            tensor = rng.normal(size=shape) * 0.1
        elif i in (2, 5, 8, 11):  # gamma and running-var slots must be positive
            tensor = np.ones(shape)
        else:
            tensor = np.zeros(shape)
        chunks.append(tensor.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def test_reexport_is_identical(checkpoint, tmp_path):
    a = _export(checkpoint, tmp_path / "a")
    b = _export(checkpoint, tmp_path / "b")
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
    assert _checksum(a) == _checksum(b)
    c = _export(checkpoint, tmp_path / "c", latent_seed=12)
    assert _checksum(a) != _checksum(c)


def test_channel_last_transposition_is_lossless(checkpoint, tmp_path):
    out = _export(checkpoint, tmp_path / "store", n_images=1)
    # recapture the same activations with a local hook and compare bit-exactly
    generator = load_generator(str(checkpoint))
    captured = {}
    block = generator.synthesis.b16

    def hook(mod, args, output):
        captured["x"] = output[0].detach()

    handle = block.register_forward_hook(hook)
    stream = torch.Generator(device="cpu").manual_seed(11)
    z = torch.randn(1, generator.z_dim, generator=stream)
    with torch.no_grad():
        generator(z, None, truncation_psi=0.7, noise_mode="const")
    handle.remove()

    stored = read_block_file(out / "images" / "img_000" / "block_1.hdgf")
    recovered = np.transpose(stored, (2, 0, 1))
    assert np.array_equal(recovered, captured["x"][0].numpy().astype(np.float32))


def test_block_count_and_truncation_validation(checkpoint, tmp_path):
    with pytest.raises(ExportError):
        _export(checkpoint, tmp_path / "x", block_count=9)
    with pytest.raises(ExportError):
        _export(checkpoint, tmp_path / "y", truncation=0.0)


def test_missing_checkpoint_is_exit_3(tmp_path):
    from gan_exporter.cli import run

    code = run([
        "export", "--checkpoint", str(tmp_path / "none.pt"), "--out",
        str(tmp_path / "s"), "--images", "1", "--seed", "1",
    ])
    assert code == 3


def test_cli_export_round_trip(checkpoint, tmp_path):
    from gan_exporter.cli import run

    out = tmp_path / "cli_store"
    code = run([
        "export", "--checkpoint", str(checkpoint), "--out", str(out),
        "--images", "2", "--trunc", "0.7", "--blocks", "2", "--seed", "3",
    ])
    assert code == 0
    result = subprocess.run(
        ["hdgan", "validate-store", str(out)], capture_output=True, text=True
    )
    assert result.returncode == 0, result.stderr
