"""
Benchmark over the test split: relight every (scene, direction) case with each method and score it

Methods:
    layered      layered score distillation with the conditioning adapter
    no_adapter   the same distillation against the scorer alone (prior ablation)
    direct       ancestral sampling from the adapter, conditioned on the uniform image
"""
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd
import torch
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.compose.io import image_to_tensor, read_png, tensor_to_image, write_png
from src.distill.relight import DistillConfig, DistillResult, distill_relight
from src.errors import EmptySplitError, InputValidationError
from src.minirelit.dataset import Manifest, load_scene, scene_dir_name
from src.minirelit.renderer import DEFAULT_AMBIENT, DEFAULT_INTENSITY, NUM_DIRECTIONS, LightSpec, render_relit
from src.scorer.adapter import ConditioningAdapter
from src.scorer.conditioning import ConditionSpec
from src.scorer.denoiser import Denoiser
from src.scorer.sampling import sample
from src.scorer.schedule import DiffusionSchedule
from src.utils.outputs import write_json
from .audit import preservation_audit
from .metrics import feature_distance, mse
from .oracle import direction_oracle

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 2

METHODS = ("layered", "no_adapter", "direct")

METRIC_COLUMNS = ["mse", "feature_distance", "direction_top1", "direction_rank", "preservation_violation"]


class EvalConfig(BaseModel):
    """Which cases the benchmark runs and how each one is relit"""

    model_config = ConfigDict(extra="forbid")

    directions: List[int] = Field(default_factory=lambda: list(range(NUM_DIRECTIONS)))
    max_scenes: Optional[int] = Field(default=None, ge=1)
    save_layers: bool = True
    # The first method is the headline: aggregate and per_direction summarize it
    methods: List[str] = Field(default_factory=lambda: ["layered"])
    direct_steps: int = Field(default=100, ge=1)
    distill: DistillConfig = Field(default_factory=lambda: DistillConfig.preset("minirelit"))

    @field_validator("directions")
    @classmethod
    def _check_directions(cls, value: List[int]) -> List[int]:
        if not value:
            raise ValueError("directions must not be empty")
        bad = [d for d in value if not 0 <= d < NUM_DIRECTIONS]
        if bad:
            raise ValueError(f"directions out of range [0, {NUM_DIRECTIONS}): {bad}")
        return value

    @field_validator("methods")
    @classmethod
    def _check_methods(cls, value: List[str]) -> List[str]:
        if not value:
            raise ValueError("methods must not be empty")
        unknown = [m for m in value if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {list(METHODS)}")
        if len(set(value)) != len(value):
            raise ValueError(f"methods must not repeat: {value}")
        return value


class EvalRow(BaseModel):
    """Scores of one relit (scene, direction, method) case"""

    scene_id: int
    category_id: int
    direction: int
    method: str = "layered"
    mse: float
    feature_distance: float
    best_index: int
    direction_rank: int = Field(ge=1, le=NUM_DIRECTIONS)
    direction_top1: bool
    preservation_violation: float


class EvalReport(BaseModel):
    """Per-case rows with aggregate means, standard errors and per-direction and per-method breakdowns"""

    schema_version: int = REPORT_SCHEMA_VERSION
    data_dir: str
    config: Dict[str, Any]
    rows: List[EvalRow]
    aggregate: Dict[str, Dict[str, float]] = Field(default_factory=dict)
    per_direction: Dict[str, Dict[str, float]] = Field(default_factory=dict)
    per_method: Dict[str, Dict[str, Dict[str, float]]] = Field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([row.model_dump() for row in self.rows])

    @property
    def top1_accuracy(self) -> float:
        return self.aggregate["direction_top1"]["mean"]

    @property
    def mean_rank(self) -> float:
        return self.aggregate["direction_rank"]["mean"]

    def write(self, path: Union[str, Path]) -> None:
        """Write the JSON report and its CSV mirror (same stem, .csv)"""
        path = Path(path)
        write_json(path, self.model_dump(mode="json"))
        self.to_frame().to_csv(path.with_suffix(".csv"), index=False)


@dataclass
class CaseResult:
    """Edited image of one case, plus the distillation behind it when there is one"""

    edited: torch.Tensor  # (3, H, W) float64
    distilled: Optional[DistillResult] = None

    def save(self, out_dir: Path) -> None:
        if self.distilled is not None:
            self.distilled.save(out_dir)
        else:
            write_png(out_dir / "edited.png", tensor_to_image(self.edited))


def summarize(values: pd.Series) -> Dict[str, float]:
    """Mean and standard error of the mean (0 for a single value)"""
    values = values.astype(float)
    n = len(values)
    stderr = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return {"mean": float(values.mean()), "stderr": stderr, "n": n}


def aggregate_rows(rows: List[EvalRow]) -> Dict[str, Dict[str, float]]:
    frame = pd.DataFrame([row.model_dump() for row in rows])
    return {column: summarize(frame[column]) for column in METRIC_COLUMNS}


def per_direction_summary(rows: List[EvalRow]) -> Dict[str, Dict[str, float]]:
    frame = pd.DataFrame([row.model_dump() for row in rows])
    summary = {}
    for direction, group in frame.groupby("direction", sort=True):
        summary[str(direction)] = {
            "n": len(group),
            "top1_accuracy": float(group["direction_top1"].astype(float).mean()),
            "mean_rank": float(group["direction_rank"].mean()),
            "mse": float(group["mse"].mean()),
        }
    return summary


def per_method_summary(rows: List[EvalRow], methods: List[str]) -> Dict[str, Dict[str, Dict[str, float]]]:
    return {method: aggregate_rows([row for row in rows if row.method == method]) for method in methods}


def relight_case(
    method: str,
    base: torch.Tensor,
    direction: int,
    category_id: int,
    scorer: Denoiser,
    adapter: Optional[ConditioningAdapter],
    schedule: DiffusionSchedule,
    config: EvalConfig,
) -> CaseResult:
    """
    Relight one base image toward `direction` with one benchmark method

    Args:
        method: One of METHODS
        base: Linear RGB uniform-lit image (3, H, W)
        direction: Requested light direction
        category_id: Category of the scene
        scorer: Trained denoiser
        adapter: Trained conditioning adapter (unused by no_adapter)
        schedule: Schedule of the scorer
        config: Benchmark settings; distill.cfg_scale is the guidance scale of every method

    Returns:
        CaseResult with a float64 (3, H, W) edit
    """
    if method == "direct":
        cond = ConditionSpec(direction_index=direction, category_id=category_id)
        drawn = sample(
            scorer, schedule, cond, steps=config.direct_steps, seed=config.distill.seed,
            adapter=adapter, cond_image=base, guidance_scale=config.distill.cfg_scale,
        )
        return CaseResult(edited=drawn[0].cpu().double())
    result = distill_relight(
        base, direction, scorer, adapter if method == "layered" else None, schedule, config.distill,
        category=category_id,
    )
    return CaseResult(edited=result.edited, distilled=result)


def run_benchmark(
    data_dir: Union[str, Path],
    scorer: Denoiser,
    adapter: Optional[ConditioningAdapter],
    schedule: DiffusionSchedule,
    config: EvalConfig,
    cases_dir: Optional[Union[str, Path]] = None,
) -> EvalReport:
    """
    Relight each test-split uniform image toward each requested direction and score it

    Per case and method: MSE and scorer-feature distance against the analytic ground-truth
    render, the direction oracle's verdict and rank, and the preservation audit.

    Args:
        data_dir: Generated dataset directory
        scorer: Trained denoiser
        adapter: Trained conditioning adapter
        schedule: Schedule of the scorer
        config: Directions, scene cap, methods and distillation settings
        cases_dir: If given (and config.save_layers), each case's outputs are written under it

    Returns:
        EvalReport with scenes x directions x methods rows

    Raises:
        EmptySplitError: the test split has no scenes
        InputValidationError: the direct method was requested without an adapter
    """
    if "direct" in config.methods and adapter is None:
        raise InputValidationError("method 'direct' samples from the adapter; pass an adapter checkpoint")
    manifest = Manifest.read(data_dir)
    test_rows = manifest.split("test")
    if config.max_scenes is not None:
        test_rows = test_rows[: config.max_scenes]
    if not test_rows:
        raise EmptySplitError(f"test split of {data_dir} is empty; nothing to benchmark")

    ambient = manifest.header.get("ambient", DEFAULT_AMBIENT)
    intensity = manifest.header.get("intensity", DEFAULT_INTENSITY)
    logger.info(
        "Benchmarking %d scenes x %d directions x methods %s from %s",
        len(test_rows), len(config.directions), config.methods, data_dir,
    )

    rows = []
    for row in test_rows:
        scene = load_scene(data_dir, row)
        base = image_to_tensor(read_png(Path(data_dir) / row.paths["uniform"]))
        for direction in config.directions:
            gt = image_to_tensor(
                render_relit(scene, LightSpec(direction_index=direction, ambient=ambient, intensity=intensity)),
                dtype=torch.float64,
            )
            for method in config.methods:
                case = relight_case(method, base, direction, row.category_id, scorer, adapter, schedule, config)
                verdict = direction_oracle(case.edited, scene, direction, ambient=ambient, intensity=intensity)
                rows.append(
                    EvalRow(
                        scene_id=row.scene_id,
                        category_id=row.category_id,
                        direction=direction,
                        method=method,
                        mse=mse(case.edited, gt),
                        feature_distance=feature_distance(case.edited, gt, scorer),
                        best_index=verdict.best_index,
                        direction_rank=verdict.rank,
                        direction_top1=verdict.best_index == direction,
                        preservation_violation=preservation_audit(base.double(), case.edited),
                    )
                )
                logger.info(
                    "Scene %d direction %d %s: oracle %d (rank %d), mse %.5f",
                    row.scene_id, direction, method, verdict.best_index, verdict.rank, rows[-1].mse,
                )
                if cases_dir is not None and config.save_layers:
                    name = f"{scene_dir_name(row.scene_id)}_dir_{direction:02d}"
                    if method != "layered":
                        name = f"{name}_{method}"
                    case_dir = Path(cases_dir) / name
                    case_dir.mkdir(parents=True, exist_ok=True)
                    case.save(case_dir)

    headline = [r for r in rows if r.method == config.methods[0]]
    report = EvalReport(
        data_dir=str(data_dir),
        config=config.model_dump(mode="json"),
        rows=rows,
        aggregate=aggregate_rows(headline),
        per_direction=per_direction_summary(headline),
        per_method=per_method_summary(rows, config.methods),
    )
    for method, summary in report.per_method.items():
        logger.info(
            "%s: top-1 direction accuracy %.3f, mean rank %.2f, mse %.5f, preservation %.2e",
            method, summary["direction_top1"]["mean"], summary["direction_rank"]["mean"],
            summary["mse"]["mean"], summary["preservation_violation"]["mean"],
        )
    return report
