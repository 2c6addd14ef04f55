import struct

import numpy as np
import pytest

from hdgan.errors import (
    BoundsError,
    ConfigError,
    DataError,
    FormatError,
    IoError,
    SchemaError,
)
from hdgan.feature_store import (
    HEADER_BYTES,
    PAGE_BYTES,
    BlockSpec,
    FeatureStoreManifest,
    ImageEntry,
    create_store,
    open_store,
    validate_store,
)
from hdgan.resampler import ResampleMode
from hdgan.rng import Rng

from _reference import full_feature_tensor_ref


def _manifest(blocks, image_ids=("img_a",), size=(4, 4), class_names=("bg", "fg")):
    return FeatureStoreManifest(
        image_height=size[0],
        image_width=size[1],
        class_names=tuple(class_names),
        blocks=[BlockSpec(i, h, w, c) for i, (h, w, c) in enumerate(blocks)],
        images=[
            ImageEntry(
                image_id=image_id,
                block_files=[f"images/{image_id}/block_{k}.hdgf" for k in range(len(blocks))],
            )
            for image_id in image_ids
        ],
    )


def _two_block_store(tmp_path):
    """Blocks [2x2x2, 4x4x1] at image size 4x4: D = 3."""
    manifest = _manifest([(2, 2, 2), (4, 4, 1)])
    rng = Rng(50)
    block0 = rng.normal(8).reshape(2, 2, 2).astype(np.float32)
    block1 = rng.normal(16).reshape(4, 4, 1).astype(np.float32)
    handle = create_store(manifest, {"img_a": [block0, block1]}, tmp_path / "s")
    return handle, block0, block1


def test_round_trip_identity_and_file_size(tmp_path):
    manifest = _manifest([(2, 2, 1)])
    data = np.array([[1.0, 2.0], [3.0, 4.0]], dtype=np.float32)[:, :, None]
    handle = create_store(manifest, {"img_a": [data]}, tmp_path / "s")
    block_path = tmp_path / "s" / "images" / "img_a" / "block_0.hdgf"
    assert block_path.stat().st_size == 64 + 16
    reread = open_store(tmp_path / "s")
    assert np.array_equal(np.asarray(reread.volume("img_a", 0)), data)


def test_feature_dim_is_channel_sum(tmp_path):
    handle, _, _ = _two_block_store(tmp_path)
    assert handle.feature_dim == 3


def test_nan_payload_rejected(tmp_path):
    manifest = _manifest([(2, 2, 1)])
    bad = np.array([[1.0, np.nan], [3.0, 4.0]], dtype=np.float32)[:, :, None]
    with pytest.raises(DataError):
        create_store(manifest, {"img_a": [bad]}, tmp_path / "s")


def test_float32_overflow_rejected(tmp_path):
    # finite in float64 but inf after the cast to the store's float32
    manifest = _manifest([(2, 2, 1)])
    huge = np.full((2, 2, 1), 1e39, dtype=np.float64)
    with pytest.raises(DataError):
        create_store(manifest, {"img_a": [huge]}, tmp_path / "s")


def test_shape_mismatch_rejected(tmp_path):
    manifest = _manifest([(2, 2, 1)])
    with pytest.raises(SchemaError):
        create_store(manifest, {"img_a": [np.zeros((2, 3, 1), np.float32)]}, tmp_path / "s")


def test_nonempty_out_dir_rejected(tmp_path):
    out = tmp_path / "s"
    out.mkdir()
    (out / "junk").write_text("x")
    manifest = _manifest([(2, 2, 1)])
    with pytest.raises(IoError):
        create_store(manifest, {"img_a": [np.zeros((2, 2, 1), np.float32)]}, out)


def test_open_missing_block_file(tmp_path):
    handle, _, _ = _two_block_store(tmp_path)
    (handle.root / "images" / "img_a" / "block_1.hdgf").unlink()
    with pytest.raises(IoError):
        open_store(handle.root)


def _corrupt_header(path, offset, value):
    raw = bytearray(path.read_bytes())
    raw[offset : offset + len(value)] = value
    path.write_bytes(bytes(raw))


def test_header_corruption_error_classes(tmp_path):
    handle, _, _ = _two_block_store(tmp_path)
    block = handle.root / "images" / "img_a" / "block_0.hdgf"
    original = block.read_bytes()

    _corrupt_header(block, 0, b"JUNK")  # magic
    with pytest.raises(FormatError):
        open_store(handle.root)

    block.write_bytes(original)
    _corrupt_header(block, 4, struct.pack("<I", 9))  # version
    with pytest.raises(FormatError):
        open_store(handle.root)

    block.write_bytes(original)
    _corrupt_header(block, 16, struct.pack("<I", 3))  # height vs manifest
    with pytest.raises(SchemaError):
        open_store(handle.root)

    block.write_bytes(original)
    open_store(handle.root)  # restored header opens again


def test_truncated_payload_rejected(tmp_path):
    handle, _, _ = _two_block_store(tmp_path)
    block = handle.root / "images" / "img_a" / "block_0.hdgf"
    block.write_bytes(block.read_bytes()[:-4])
    with pytest.raises(SchemaError):
        open_store(handle.root)


def test_fetch_corner_pixel_concatenates_blocks_in_order(tmp_path):
    handle, block0, block1 = _two_block_store(tmp_path)
    got = handle.fetch_pixel_features("img_a", [(0, 0)], ResampleMode.NEAREST)
    expected = np.array(
        [[block0[0, 0, 0], block0[0, 0, 1], block1[0, 0, 0]]], dtype=np.float32
    )
    assert np.array_equal(got, expected)


def test_fetch_matches_full_upsample_oracle(tmp_path):
    handle, block0, block1 = _two_block_store(tmp_path)
    pixels = [(r, c) for r in range(4) for c in range(4)]
    for mode, bilinear in ((ResampleMode.NEAREST, False), (ResampleMode.BILINEAR, True)):
        full = full_feature_tensor_ref([block0, block1], 4, 4, bilinear=bilinear)
        want = np.stack([full[r, c] for r, c in pixels])
        got = handle.fetch_pixel_features("img_a", pixels, mode)
        assert np.allclose(got, want, atol=1e-6)
        if not bilinear:
            assert np.array_equal(got, want)


def test_fetch_bounds_and_unknown_image(tmp_path):
    handle, _, _ = _two_block_store(tmp_path)
    with pytest.raises(BoundsError):
        handle.fetch_pixel_features("img_a", [(4, 0)])
    with pytest.raises(BoundsError):
        handle.fetch_pixel_features("img_a", [(0, -1)])
    with pytest.raises(KeyError):
        handle.fetch_pixel_features("nope", [(0, 0)])


def test_stream_band_arithmetic(tmp_path):
    handle, _, _ = _two_block_store(tmp_path)
    one_row = 4 * handle.feature_dim * 4
    chunks = list(
        handle.stream_region_features("img_a", (0, 0, 4, 4), chunk_budget_bytes=one_row)
    )
    assert [c.features.shape for c in chunks] == [(1, 4, 3)] * 4
    assert [(c.row_start, c.row_stop) for c in chunks] == [(0, 1), (1, 2), (2, 3), (3, 4)]


def test_stream_equals_fetch(tmp_path):
    handle, _, _ = _two_block_store(tmp_path)
    for mode in ResampleMode:
        for budget in (48, 96, 1 << 20):
            bands = [
                c.features
                for c in handle.stream_region_features("img_a", (1, 1, 3, 2), mode, budget)
            ]
            stacked = np.concatenate(bands, axis=0).reshape(-1, 3)
            pixels = [(r, c) for r in range(1, 4) for c in range(1, 3)]
            assert np.array_equal(stacked, handle.fetch_pixel_features("img_a", pixels, mode))


def test_stream_budget_below_one_row(tmp_path):
    handle, _, _ = _two_block_store(tmp_path)
    with pytest.raises(ConfigError):
        list(handle.stream_region_features("img_a", (0, 0, 4, 4), chunk_budget_bytes=1))


def test_stream_budget_law(tmp_path):
    handle, _, _ = _two_block_store(tmp_path)
    row = 4 * handle.feature_dim * 4
    for budget in (row, 2 * row + 5, 10 * row):
        handle.accounting.reset()
        for chunk in handle.stream_region_features(
            "img_a", (0, 0, 4, 4), chunk_budget_bytes=budget
        ):
            assert chunk.features.nbytes <= budget
        assert handle.accounting.bytes_live_peak <= budget


def test_single_pixel_fetch_is_lazy(tmp_path):
    handle, _, _ = _two_block_store(tmp_path)
    fresh = open_store(handle.root)
    fresh.accounting.reset()
    fresh.fetch_pixel_features("img_a", [(0, 0)])
    n_blocks = len(fresh.manifest.blocks)
    assert fresh.accounting.bytes_materialized_total < 2 * PAGE_BYTES * n_blocks
    assert fresh.accounting.bytes_materialized_total >= PAGE_BYTES * n_blocks


def test_accounting_monotone_within_stream(tmp_path):
    handle, _, _ = _two_block_store(tmp_path)
    handle.accounting.reset()
    seen = []
    for _ in handle.stream_region_features("img_a", (0, 0, 4, 4), chunk_budget_bytes=48):
        seen.append(handle.accounting.bytes_materialized_total)
    assert seen == sorted(seen)
    assert seen[-1] > 0


def test_validate_store_accepts_good_and_catches_nan(tmp_path):
    handle, _, _ = _two_block_store(tmp_path)
    assert validate_store(handle.root) == ["img_a"]
    block = handle.root / "images" / "img_a" / "block_1.hdgf"
    raw = bytearray(block.read_bytes())
    raw[HEADER_BYTES : HEADER_BYTES + 4] = struct.pack("<f", float("nan"))
    block.write_bytes(bytes(raw))
    with pytest.raises(DataError):
        validate_store(handle.root)


def test_manifest_rules(tmp_path):
    with pytest.raises(SchemaError):
        _manifest([(3, 3, 1)]).validate()  # 3 does not divide 4
    with pytest.raises(SchemaError):
        _manifest([(4, 4, 1), (2, 2, 1)]).validate()  # heights decreasing
    with pytest.raises(SchemaError):
        _manifest([(2, 2, 1)], image_ids=("bad id",)).validate()
    with pytest.raises(SchemaError):
        _manifest([(2, 2, 1)], image_ids=("a", "a")).validate()


def test_store_property_round_trip_random():
    # randomized round-trip + gather/stream/oracle equivalence
    rng = Rng(51)
    for trial in range(10):
        import tempfile

        with tempfile.TemporaryDirectory() as tmp:
            image_h = 4 * (1 + rng.below(3))
            image_w = 4 * (1 + rng.below(3))
            divisors_h = [d for d in (1, 2, 4) if image_h % d == 0]
            blocks = []
            arrays = []
            n_blocks = 1 + rng.below(3)
            strides = sorted((divisors_h[rng.below(len(divisors_h))] for _ in range(n_blocks)), reverse=True)
            for k, stride in enumerate(strides):
                h, w = image_h // stride, image_w // stride
                c = 1 + rng.below(4)
                blocks.append((h, w, c))
                arrays.append(rng.normal(h * w * c).reshape(h, w, c).astype(np.float32))
            manifest = _manifest(blocks, size=(image_h, image_w))
            handle = create_store(manifest, {"img_a": arrays}, f"{tmp}/s")
            for k, arr in enumerate(arrays):
                assert np.array_equal(np.asarray(handle.volume("img_a", k)), arr)
            pixels = [(r, c) for r in range(image_h) for c in range(image_w)]
            for mode, bilinear in (
                (ResampleMode.NEAREST, False),
                (ResampleMode.BILINEAR, True),
            ):
                oracle = full_feature_tensor_ref(arrays, image_h, image_w, bilinear)
                want = oracle.reshape(-1, handle.feature_dim)
                got = handle.fetch_pixel_features("img_a", pixels, mode)
                assert np.allclose(got, want, atol=1e-6)
                bands = [
                    c.features
                    for c in handle.stream_region_features(
                        "img_a", (0, 0, image_h, image_w), mode, image_w * handle.feature_dim * 4
                    )
                ]
                assert np.array_equal(np.concatenate(bands).reshape(-1, handle.feature_dim), got)
            handle.close()
