"""
CSV and JSON emission for run outputs.

CSV goes through pandas with full float precision; JSON is written with
sorted keys so identical runs produce identical bytes.
"""

import json
import sys
from pathlib import Path
from typing import Any, Optional

import numpy as np
import pandas as pd
import structlog
from pydantic import BaseModel

logger = structlog.get_logger(__name__)

FLOAT_FORMAT = "%.17g"


def _default(value: Any):
    if isinstance(value, BaseModel):
        return value.model_dump(mode="json")
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def to_json(payload: Any) -> str:
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json")
    return json.dumps(payload, sort_keys=True, indent=2, default=_default)


def _open_target(path: Optional[str]):
    if path is None or path == "-":
        return None
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    return target


def write_frame(frame: pd.DataFrame, path: Optional[str] = None) -> None:
    """Write a frame as CSV to path, or stdout when path is None or '-'."""
    target = _open_target(path)
    if target is None:
        frame.to_csv(sys.stdout, index=False, float_format=FLOAT_FORMAT)
        return
    frame.to_csv(target, index=False, float_format=FLOAT_FORMAT)
    logger.info("wrote csv", path=str(target), rows=len(frame))


def write_json(payload: Any, path: Optional[str] = None) -> None:
    text = to_json(payload)
    target = _open_target(path)
    if target is None:
        sys.stdout.write(text + "\n")
        return
    target.write_text(text + "\n")
    logger.info("wrote json", path=str(target))


def config_path(output: Optional[str], output_dir: str, command: str, seed: Optional[int]) -> Path:
    """<output>.config.json next to the output, or a file under output_dir for stdout runs."""
    if output and output != "-":
        return Path(f"{output}.config.json")
    suffix = f"-seed{seed}" if seed is not None else ""
    return Path(output_dir) / f"{command}{suffix}.config.json"


def write_config(config: BaseModel, output_dir: str) -> Path:
    path = config_path(config.output, output_dir, config.command, getattr(config, "seed", None))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_json(config) + "\n")
    logger.debug("wrote config", path=str(path))
    return path
