"""
Unit tests for procedural scenes, the Lambertian renderer and dataset generation
"""
import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from src.compose.io import encode_srgb8, read_png
from src.errors import InputValidationError, OutputExistsError
from src.minirelit.dataset import MANIFEST_NAME, Manifest, MiniRelitDataset, generate_dataset, load_scene
from src.minirelit.renderer import (
    LightSpec,
    height_and_normals,
    height_at,
    light_direction,
    pixel_grid,
    render_relit,
    render_uniform,
)
from src.minirelit.scene import Blob, SceneSpec, sample_scene
from tests.conftest import slow

ROOT_HALF = 1.0 / np.sqrt(2.0)


def _single_blob_scene(height=6.0):
    """64x64 scene with one blob centered on pixel (row 31, col 32)"""
    return SceneSpec(
        seed=0,
        size=64,
        blobs=[Blob(center=(32.5, 32.5), radius=8.0, height=height, albedo=(0.6, 0.4, 0.3))],
        background_albedo=(0.5, 0.5, 0.5),
        category_id=0,
    )


def test_sample_scene_is_deterministic():
    """Test that equal seeds give identical scenes"""
    assert sample_scene(7, 32, 0) == sample_scene(7, 32, 0)


def test_sample_scene_seeds_differ():
    """Test that neighboring seeds move the blobs"""
    assert sample_scene(7, 32, 0).blobs[0].center != sample_scene(8, 32, 0).blobs[0].center


def test_sample_scene_invariants():
    """Test blob count and radius bounds"""
    scene = sample_scene(0, 32, 3)
    assert 1 <= len(scene.blobs) <= 4
    assert all(32 / 8 <= blob.radius <= 32 / 3 for blob in scene.blobs)


def test_sample_scene_rejects_size():
    """Test unsupported image sizes"""
    with pytest.raises(InputValidationError):
        sample_scene(0, 48, 0)


def test_pixel_grid_orientation():
    """Test that x grows to the right and y grows upward"""
    x, y = pixel_grid(4)
    assert x[0, 0] == 0.5 and x[0, 3] == 3.5
    assert y[0, 0] == 3.5 and y[3, 0] == 0.5


def test_normals_flat_and_apex():
    """Test normals far from the blob and at its apex"""
    _, normals = height_and_normals(_single_blob_scene())
    np.testing.assert_allclose(normals[0, 0], (0.0, 0.0, 1.0), atol=1e-4)
    np.testing.assert_allclose(normals[31, 32], (0.0, 0.0, 1.0), atol=1e-3)


def test_normals_match_finite_differences():
    """Test analytic normals against central differences of the height field"""
    scene = _single_blob_scene()
    _, normals = height_and_normals(scene)
    i, j = 29, 35
    x, y = j + 0.5, scene.size - (i + 0.5)
    delta = 1e-5
    dh_dx = (height_at(scene, np.array(x + delta), np.array(y)) - height_at(scene, np.array(x - delta), np.array(y))) / (2 * delta)
    dh_dy = (height_at(scene, np.array(x), np.array(y + delta)) - height_at(scene, np.array(x), np.array(y - delta))) / (2 * delta)
    expected = np.array([-float(dh_dx), -float(dh_dy), 1.0])
    expected /= np.linalg.norm(expected)

    assert abs(expected[0]) > 0.1  # actually on the slope
    np.testing.assert_allclose(normals[i, j], expected, atol=1e-3)


@pytest.mark.parametrize("seed, size", [(0, 32), (7, 64), (11, 128)])
def test_normals_unit_length(seed, size):
    """Test that every normal has unit length and faces the camera"""
    _, normals = height_and_normals(sample_scene(seed, size, seed % 8))
    assert normals.shape == (size, size, 3)
    assert np.abs(np.linalg.norm(normals, axis=-1) - 1.0).max() <= 1e-6
    assert (normals[..., 2] > 0).all()


@pytest.mark.parametrize(
    "index, expected",
    [
        (0, (0.0, ROOT_HALF, ROOT_HALF)),
        (3, (-ROOT_HALF, 0.0, ROOT_HALF)),
        (6, (0.0, -ROOT_HALF, ROOT_HALF)),
        (9, (ROOT_HALF, 0.0, ROOT_HALF)),
    ],
)
def test_light_direction_examples(index, expected):
    """Test the 12-position light ring"""
    np.testing.assert_allclose(light_direction(index), expected, atol=1e-12)


def test_light_direction_rejects_index():
    """Test out-of-range direction indices"""
    with pytest.raises(InputValidationError):
        light_direction(12)


def test_render_flat_pixel():
    """Test Lambertian shading of an upward-facing background pixel"""
    image = render_relit(_single_blob_scene(), LightSpec(direction_index=0))
    expected = 0.5 * (0.2 + 0.8 * np.cos(np.deg2rad(45.0)))
    assert expected == pytest.approx(0.3828, abs=1e-4)
    np.testing.assert_allclose(image[0, 0], expected, atol=1e-6)


def test_render_full_ambient_is_albedo():
    """Test that ambient 1 removes all shading"""
    scene = _single_blob_scene()
    image = render_relit(scene, LightSpec(direction_index=4, ambient=1.0))
    np.testing.assert_array_equal(image, render_uniform(scene, level=1.0))


def test_render_facing_away():
    """Test that a slope turned away from the light keeps only the ambient term"""
    scene = _single_blob_scene(height=40.0)
    _, normals = height_and_normals(scene)
    i, j = 35, 32  # below the apex, facing down
    assert normals[i, j] @ light_direction(0) < 0.0

    image = render_relit(scene, LightSpec(direction_index=0))
    np.testing.assert_allclose(image[i, j], np.array([0.6, 0.4, 0.3]) * 0.2, atol=1e-12)


def test_render_uniform_level():
    """Test the panel light render"""
    scene = _single_blob_scene()
    image = render_uniform(scene, level=0.9)
    np.testing.assert_allclose(image[0, 0], 0.45, atol=1e-12)
    np.testing.assert_array_equal(image, render_uniform(scene, level=0.9))


def test_dataset_counts_and_split(tiny_dataset_dir):
    """Test file counts and a disjoint train/test split"""
    manifest = Manifest.read(tiny_dataset_dir)
    train, test = manifest.split("train"), manifest.split("test")

    assert len(manifest.rows) == 13
    assert len(test) == 3 and len(train) == 10
    assert not {r.scene_id for r in train} & {r.scene_id for r in test}
    assert len(list(Path(tiny_dataset_dir).glob("scene_*/*.png"))) == 13 * 13


def test_dataset_regeneration_is_byte_identical(tiny_dataset_dir, tmp_path):
    """Test that the same seed writes the same manifest"""
    out = tmp_path / "again"
    generate_dataset(13, 32, 0.2, out, seed=0)
    assert (out / MANIFEST_NAME).read_bytes() == (Path(tiny_dataset_dir) / MANIFEST_NAME).read_bytes()

    with pytest.raises(OutputExistsError):
        generate_dataset(13, 32, 0.2, out, seed=0)
    generate_dataset(13, 32, 0.2, out, seed=0, force=True)
    assert (out / MANIFEST_NAME).read_bytes() == (Path(tiny_dataset_dir) / MANIFEST_NAME).read_bytes()


def test_dataset_rejects_small_counts(tmp_path):
    """Test the minimum scene count"""
    with pytest.raises(InputValidationError):
        generate_dataset(12, 32, 0.1, tmp_path / "small", seed=0)


def test_dataset_pngs_match_renders(tiny_dataset_dir):
    """Test that stored images are the 8-bit encoding of the analytic renders"""
    manifest = Manifest.read(tiny_dataset_dir)
    row = manifest.rows[0]
    scene = load_scene(tiny_dataset_dir, row)
    for index in (0, 5, 11):
        with Image.open(Path(tiny_dataset_dir) / row.paths["relit"][index]) as im:
            stored = np.asarray(im.convert("RGB")).astype(int)
        expected = encode_srgb8(render_relit(scene, LightSpec(direction_index=index))).astype(int)
        assert np.abs(stored - expected).max() <= 1


def test_dataset_directions_are_distinct(tiny_dataset_dir):
    """Test that the twelve renders of a scene differ pairwise"""
    row = Manifest.read(tiny_dataset_dir).rows[0]
    images = [read_png(Path(tiny_dataset_dir) / p) for p in row.paths["relit"]]
    for a in range(12):
        for b in range(a + 1, 12):
            assert not np.array_equal(images[a], images[b])


def test_manifest_header(tiny_dataset_dir):
    """Test the header row of manifest.jsonl"""
    first = json.loads((Path(tiny_dataset_dir) / MANIFEST_NAME).read_text().splitlines()[0])
    assert first["kind"] == "header"
    assert first["num_scenes"] == 13 and first["size"] == 32 and first["seed"] == 0


def test_torch_dataset_items(tiny_dataset_dir):
    """Test (scene, direction) pairs of the training split"""
    dataset = MiniRelitDataset(tiny_dataset_dir, split="train")
    assert len(dataset) == 10 * 12
    item = dataset[13]
    assert item["relit"].shape == (3, 32, 32)
    assert item["uniform"].shape == (3, 32, 32)
    assert int(item["direction"]) == 1


@slow
def test_generate_reference_dataset(tmp_path):
    """Test the 200-scene dataset used by the quick reproduction"""
    manifest = generate_dataset(200, 32, 0.08, tmp_path / "data", seed=0, workers=2)
    assert len(manifest.split("test")) == 16
    assert len(list((tmp_path / "data").glob("scene_*/*.png"))) == 200 * 13
