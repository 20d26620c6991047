"""
Dataset generation, manifest I/O and the torch dataset over generated scenes

Layout under out_dir:
    manifest.jsonl                 header line, then one line per scene
    scene_{id:05d}/uniform.png     panel-light render
    scene_{id:05d}/relit_{i:02d}.png   render under direction i, i in 0..11
    scene_{id:05d}/scene.json      SceneSpec
"""
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import torch
from pydantic import BaseModel
from torch.utils.data import Dataset
from tqdm import tqdm

from src.compose.io import read_png, write_png
from src.errors import EmptySplitError, InputValidationError
from src.utils.outputs import prepare_output_dir
from .renderer import (
    DEFAULT_AMBIENT,
    DEFAULT_INTENSITY,
    DEFAULT_UNIFORM_LEVEL,
    NUM_DIRECTIONS,
    LightSpec,
    render_relit,
    render_uniform,
)
from .scene import NUM_CATEGORIES, SceneSpec, sample_scene

logger = logging.getLogger(__name__)

GENERATOR_VERSION = "minirelit-1"
MANIFEST_NAME = "manifest.jsonl"
MIN_SCENES = 13


class ManifestRow(BaseModel):
    """One scene entry of manifest.jsonl; paths are relative to the dataset root"""

    scene_id: int
    category_id: int
    split: str
    seed: int
    paths: Dict[str, Any]


class Manifest:
    """Header plus per-scene rows of a generated dataset"""

    def __init__(self, header: Dict[str, Any], rows: List[ManifestRow]):
        self.header = header
        self.rows = rows

    def split(self, name: str) -> List[ManifestRow]:
        return [row for row in self.rows if row.split == name]

    @classmethod
    def read(cls, data_dir: Union[str, Path]) -> "Manifest":
        """
        Load manifest.jsonl from a dataset directory

        Raises:
            InputValidationError: missing manifest or header row
        """
        path = Path(data_dir) / MANIFEST_NAME
        if not path.exists():
            raise InputValidationError(f"no {MANIFEST_NAME} in {data_dir}")
        lines = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
        if not lines or lines[0].get("kind") != "header":
            raise InputValidationError(f"{path} does not start with a header row")
        header = {k: v for k, v in lines[0].items() if k != "kind"}
        rows = [ManifestRow(**{k: v for k, v in line.items() if k != "kind"}) for line in lines[1:]]
        return cls(header, rows)


def _dumps(record: Dict[str, Any]) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def scene_dir_name(scene_id: int) -> str:
    return f"scene_{scene_id:05d}"


def _render_scene_files(job: Dict[str, Any]) -> Dict[str, Any]:
    """Render and write all images of one scene (module level so process pools can pickle it)"""
    scene = sample_scene(job["seed"], job["size"], job["category_id"])
    scene_dir = Path(job["root"]) / scene_dir_name(job["scene_id"])
    scene_dir.mkdir(parents=True, exist_ok=True)

    write_png(scene_dir / "uniform.png", render_uniform(scene, job["uniform_level"]))
    relit = []
    for index in range(NUM_DIRECTIONS):
        light = LightSpec(direction_index=index, ambient=job["ambient"], intensity=job["intensity"])
        name = f"relit_{index:02d}.png"
        write_png(scene_dir / name, render_relit(scene, light))
        relit.append(f"{scene_dir_name(job['scene_id'])}/{name}")
    (scene_dir / "scene.json").write_text(scene.model_dump_json(indent=2))

    prefix = scene_dir_name(job["scene_id"])
    return {
        "uniform": f"{prefix}/uniform.png",
        "relit": relit,
        "scene": f"{prefix}/scene.json",
    }


def generate_dataset(
    num_scenes: int,
    size: int,
    split_fraction: float,
    out_dir: Union[str, Path],
    seed: int,
    ambient: float = DEFAULT_AMBIENT,
    intensity: float = DEFAULT_INTENSITY,
    uniform_level: float = DEFAULT_UNIFORM_LEVEL,
    force: bool = False,
    workers: int = 1,
) -> Manifest:
    """
    Render a procedural relighting dataset with a JSONL manifest

    Args:
        num_scenes: Number of scenes, at least 13
        size: Image size (32, 64 or 128)
        split_fraction: Fraction of scenes assigned to the test split
        out_dir: Destination directory
        seed: Global seed; fixes scene seeds, categories and the split
        ambient: Ambient term of the directional renders
        intensity: Directional light intensity
        uniform_level: Panel light level
        force: Replace an existing out_dir
        workers: Rendering processes; manifest order is scene order regardless

    Returns:
        The written Manifest
    """
    if num_scenes < MIN_SCENES:
        raise InputValidationError(f"num_scenes must be at least {MIN_SCENES}, got {num_scenes}")
    if not 0.0 <= split_fraction < 1.0:
        raise InputValidationError(f"split fraction must be in [0, 1), got {split_fraction}")
    root = prepare_output_dir(out_dir, force=force)

    rng = np.random.default_rng(seed)
    scene_seeds = rng.integers(0, 2**31 - 1, size=num_scenes)
    categories = rng.integers(0, NUM_CATEGORIES, size=num_scenes)
    num_test = int(round(num_scenes * split_fraction))
    test_ids = set(int(i) for i in rng.choice(num_scenes, size=num_test, replace=False))

    header = {
        "generator_version": GENERATOR_VERSION,
        "seed": seed,
        "num_scenes": num_scenes,
        "size": size,
        "test_fraction": split_fraction,
        "ambient": ambient,
        "intensity": intensity,
        "uniform_level": uniform_level,
    }
    jobs = [
        {
            "root": str(root),
            "scene_id": scene_id,
            "seed": int(scene_seeds[scene_id]),
            "size": size,
            "category_id": int(categories[scene_id]),
            "ambient": ambient,
            "intensity": intensity,
            "uniform_level": uniform_level,
        }
        for scene_id in range(num_scenes)
    ]
    logger.info(
        "Generating %d scenes at %dx%d into %s (%d test)", num_scenes, size, size, root, num_test
    )

    manifest_path = root / MANIFEST_NAME
    rows = []
    with open(manifest_path, "w") as manifest_file:
        manifest_file.write(_dumps({"kind": "header", **header}) + "\n")
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = pool.map(_render_scene_files, jobs)
                rows = _append_rows(manifest_file, jobs, results, test_ids)
        else:
            results = map(_render_scene_files, jobs)
            rows = _append_rows(manifest_file, jobs, results, test_ids)

    return Manifest(header, rows)


def _append_rows(manifest_file, jobs, results, test_ids) -> List[ManifestRow]:
    rows = []
    for job, paths in tqdm(zip(jobs, results), total=len(jobs), desc="scenes"):
        row = ManifestRow(
            scene_id=job["scene_id"],
            category_id=job["category_id"],
            split="test" if job["scene_id"] in test_ids else "train",
            seed=job["seed"],
            paths=paths,
        )
        manifest_file.write(_dumps({"kind": "scene", **row.model_dump()}) + "\n")
        rows.append(row)
    return rows


def load_scene(data_dir: Union[str, Path], row: ManifestRow) -> SceneSpec:
    """Read the SceneSpec stored for a manifest row"""
    return SceneSpec.model_validate_json((Path(data_dir) / row.paths["scene"]).read_text())


class MiniRelitDataset(Dataset):
    """
    (scene, direction) pairs of one split, held in memory as linear float32 tensors

    Each item is a dict with `relit` (3 x H x W, target x_i), `uniform` (3 x H x W,
    condition image x_u), `direction` and `category`.
    """

    def __init__(self, data_dir: Union[str, Path], split: str = "train", max_scenes: Optional[int] = None):
        self.data_dir = Path(data_dir)
        self.manifest = Manifest.read(self.data_dir)
        self.rows = self.manifest.split(split)
        if max_scenes is not None:
            self.rows = self.rows[:max_scenes]
        if not self.rows:
            raise EmptySplitError(f"split '{split}' of {data_dir} has no scenes")

        uniform, relit = [], []
        for row in self.rows:
            uniform.append(self._load(row.paths["uniform"]))
            relit.append(torch.stack([self._load(p) for p in row.paths["relit"]]))
        self.uniform = torch.stack(uniform)
        self.relit = torch.stack(relit)
        self.categories = torch.tensor([row.category_id for row in self.rows], dtype=torch.long)
        logger.info("Loaded %d %s scenes from %s", len(self.rows), split, data_dir)

    def _load(self, relative: str) -> torch.Tensor:
        img = read_png(self.data_dir / relative)
        return torch.from_numpy(img.transpose(2, 0, 1).copy()).float()

    @property
    def image_size(self) -> int:
        return int(self.uniform.shape[-1])

    def __len__(self) -> int:
        return len(self.rows) * NUM_DIRECTIONS

    def __getitem__(self, idx: int) -> Dict[str, torch.Tensor]:
        scene_idx, direction = divmod(idx, NUM_DIRECTIONS)
        return {
            "relit": self.relit[scene_idx, direction],
            "uniform": self.uniform[scene_idx],
            "direction": torch.tensor(direction, dtype=torch.long),
            "category": self.categories[scene_idx],
        }
