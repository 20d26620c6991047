"""
Overwrite guards for artifact-producing commands
"""
import json
import logging
import shutil
from pathlib import Path
from typing import Any, Dict, Union

from src.errors import OutputExistsError

logger = logging.getLogger(__name__)


def prepare_output_dir(path: Union[str, Path], force: bool = False) -> Path:
    """
    Create an empty output directory

    Args:
        path: Directory to create
        force: Remove an existing non-empty directory first

    Returns:
        The directory as a Path

    Raises:
        OutputExistsError: directory exists, is non-empty and force is False
    """
    out = Path(path)
    if out.exists() and any(out.iterdir()):
        if not force:
            raise OutputExistsError(f"{out} already exists; pass --force to overwrite")
        logger.info("Removing existing output directory %s", out)
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def prepare_output_file(path: Union[str, Path], force: bool = False) -> Path:
    """
    Check that a single output file may be written and create its parent directory

    Raises:
        OutputExistsError: file exists and force is False
    """
    out = Path(path)
    if out.exists() and not force:
        raise OutputExistsError(f"{out} already exists; pass --force to overwrite")
    out.parent.mkdir(parents=True, exist_ok=True)
    return out


def write_json(path: Union[str, Path], payload: Dict[str, Any]) -> None:
    """Write JSON with sorted keys so reruns produce identical bytes"""
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
