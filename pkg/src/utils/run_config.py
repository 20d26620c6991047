"""
Run configuration: one JSON-serializable tree of every hyperparameter a command uses

Precedence, lowest first: built-in defaults (or the quick preset), the JSON config
file, the environment (LAYERLIGHT_SEED, LAYERLIGHT_LOG), explicit CLI flags.
"""
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from config import Settings
from src.distill.colorize import ColorizeConfig
from src.distill.relight import DistillConfig
from src.errors import InputValidationError
from src.evaluation.benchmark import EvalConfig
from src.minirelit.renderer import DEFAULT_AMBIENT, DEFAULT_INTENSITY, DEFAULT_UNIFORM_LEVEL
from src.scorer.training import AdapterTrainingConfig, ScorerTrainingConfig
from .outputs import write_json

logger = logging.getLogger(__name__)

CONFIG_NAME = "config.json"


class DataConfig(BaseModel):
    """Dataset generation parameters"""

    model_config = ConfigDict(extra="forbid")

    num_scenes: int = Field(default=1000, ge=13)
    size: int = 64
    split_fraction: float = Field(default=0.1, ge=0, lt=1)
    seed: int = 0
    ambient: float = DEFAULT_AMBIENT
    intensity: float = DEFAULT_INTENSITY
    uniform_level: float = DEFAULT_UNIFORM_LEVEL
    workers: int = Field(default=1, ge=1)


class SampleConfig(BaseModel):
    """Ancestral sampling parameters"""

    model_config = ConfigDict(extra="forbid")

    steps: int = Field(default=100, ge=0)
    guidance_scale: float = Field(default=7.0, ge=0)
    seed: int = 0
    size: int = 64
    batch: int = Field(default=1, ge=1)


class RunConfig(BaseModel):
    """Resolved configuration of one CLI invocation"""

    model_config = ConfigDict(extra="forbid")

    seed: Optional[int] = None
    log_level: str = "INFO"
    device: str = "cpu"
    data: DataConfig = Field(default_factory=DataConfig)
    scorer: ScorerTrainingConfig = Field(default_factory=ScorerTrainingConfig)
    adapter: AdapterTrainingConfig = Field(default_factory=AdapterTrainingConfig)
    sample: SampleConfig = Field(default_factory=SampleConfig)
    distill: DistillConfig = Field(default_factory=DistillConfig)
    colorize: ColorizeConfig = Field(default_factory=ColorizeConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)

    @classmethod
    def quick(cls) -> "RunConfig":
        """Desk-scale preset: 200 scenes at 32x32, 12 held-out scenes x directions 0, 3, 6, 9"""
        return cls(
            data=DataConfig(num_scenes=200, size=32, split_fraction=0.06),
            scorer=ScorerTrainingConfig(epochs=30),
            adapter=AdapterTrainingConfig(iters=5000),
            sample=SampleConfig(size=32),
            distill=DistillConfig.preset("minirelit"),
            eval=EvalConfig(directions=[0, 3, 6, 9], max_scenes=12, distill=DistillConfig.preset("minirelit")),
        )

    def with_seed(self, seed: int) -> "RunConfig":
        """Copy with one seed pushed into every section that draws random numbers"""
        payload = self.model_dump()
        payload["seed"] = seed
        for section in ("data", "scorer", "adapter", "sample", "distill", "colorize"):
            payload[section]["seed"] = seed
        payload["eval"]["distill"]["seed"] = seed
        return RunConfig.model_validate(payload)


def _format_validation_error(error: ValidationError, source: str) -> str:
    problems = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"])
        problems.append(f"{location}: {item['msg']}")
    return f"invalid configuration in {source}: " + "; ".join(problems)


def _validate(payload: Dict[str, Any], source: str) -> RunConfig:
    try:
        return RunConfig.model_validate(payload)
    except ValidationError as e:
        raise InputValidationError(_format_validation_error(e, source)) from e


def _deep_merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def _set_dotted(payload: Dict[str, Any], dotted: str, value: Any) -> None:
    *parents, leaf = dotted.split(".")
    node = payload
    for part in parents:
        node = node.setdefault(part, {})
    node[leaf] = value


def load_config(path: Optional[Union[str, Path]] = None, quick: bool = False) -> RunConfig:
    """
    Read a JSON config file over the built-in defaults

    An empty file (or no path) yields the defaults.

    Raises:
        InputValidationError: malformed JSON or unknown / invalid keys, naming each key
    """
    base = RunConfig.quick() if quick else RunConfig()
    if path is None:
        return base
    text = Path(path).read_text().strip()
    if not text:
        return base
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as e:
        raise InputValidationError(f"{path} is not valid JSON: {e}") from e
    if not isinstance(payload, dict):
        raise InputValidationError(f"{path} must hold a JSON object")
    return _validate(_deep_merge(base.model_dump(), payload), str(path))


def resolve_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Dict[str, Any]] = None,
    quick: bool = False,
    env: Optional[Settings] = None,
) -> RunConfig:
    """
    Combine defaults, config file, environment and flags into one RunConfig

    Args:
        path: Optional JSON config file
        overrides: Dotted keys set by CLI flags, e.g. {"distill.cfg_scale": 7.0}; None values are skipped
        quick: Start from the quick preset instead of the defaults
        env: Environment settings; read from LAYERLIGHT_* variables when omitted

    Returns:
        Validated RunConfig; a global seed, if any, is pushed into every section
    """
    env = env or Settings()
    payload = load_config(path, quick=quick).model_dump()
    explicit = env.model_fields_set
    if env.seed is not None:
        payload["seed"] = env.seed
    if "log" in explicit:
        payload["log_level"] = env.log
    if "device" in explicit:
        payload["device"] = env.device
    for dotted, value in (overrides or {}).items():
        if value is not None:
            _set_dotted(payload, dotted, value)

    config = _validate(payload, "command line")
    if config.seed is not None:
        config = config.with_seed(config.seed)
    return config


def write_resolved_config(config: RunConfig, path: Union[str, Path]) -> None:
    """Echo the resolved configuration next to a command's outputs"""
    write_json(path, config.model_dump(mode="json"))
    logger.debug("Resolved config written to %s", path)


def config_path_for(output: Union[str, Path]) -> Path:
    """Where the resolved config of an output lives: DIR/config.json, or X.config.json for a file X.ckpt"""
    output = Path(output)
    if output.suffix:
        return output.with_suffix(".config.json")
    return output / CONFIG_NAME


def parse_int_list(text: str) -> List[int]:
    """'0,3,6,9' -> [0, 3, 6, 9]"""
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise InputValidationError(f"expected comma-separated integers, got '{text}'") from e


def parse_str_list(text: str) -> List[str]:
    """'layered, direct' -> ['layered', 'direct']"""
    return [part.strip() for part in text.split(",") if part.strip()]
