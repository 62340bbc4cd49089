"""
Helper utilities for the POI recommender.

This module provides small functions shared across the package: filesystem
helpers, JSON sidecars and seeded random sources.
"""

import hashlib
import json
import time
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np

from .logging import logger


def get_timestamp() -> str:
    """
    Get a formatted timestamp.

    Returns:
        str: Formatted timestamp
    """
    return time.strftime("%Y-%m-%d_%H-%M-%S")


def generate_hash(data: Union[str, bytes]) -> str:
    """
    Generate a hash from input data.

    Args:
        data: Input data to hash

    Returns:
        str: Hexadecimal hash
    """
    if isinstance(data, str):
        data = data.encode("utf-8")

    return hashlib.md5(data).hexdigest()


def ensure_directory(path: Union[str, Path]) -> Path:
    """
    Ensure a directory exists, creating it if necessary.

    Args:
        path: Directory path

    Returns:
        Path: Path object for the directory
    """
    path_obj = Path(path)
    path_obj.mkdir(exist_ok=True, parents=True)
    return path_obj


def load_json(file_path: Union[str, Path]) -> Dict[str, Any]:
    """
    Load JSON file.

    Args:
        file_path: Path to JSON file

    Returns:
        Dict: Loaded JSON data, empty when the file is missing or invalid
    """
    try:
        with open(file_path, "r", encoding="utf-8") as f:
            return json.load(f)
    except (json.JSONDecodeError, FileNotFoundError) as e:
        logger.error(f"Error loading JSON file {file_path}: {str(e)}")
        return {}


def save_json(data: Dict[str, Any], file_path: Union[str, Path]) -> bool:
    """
    Save data to JSON file.

    Args:
        data: Data to save
        file_path: Path to save JSON file

    Returns:
        bool: Success status
    """
    try:
        path_obj = Path(file_path)
        path_obj.parent.mkdir(exist_ok=True, parents=True)

        with open(file_path, "w", encoding="utf-8") as f:
            json.dump(data, f, indent=2, ensure_ascii=False, sort_keys=True)
        return True
    except Exception as e:
        logger.error(f"Error saving JSON file {file_path}: {str(e)}")
        return False


def spawn_rngs(seed: Union[int, np.random.SeedSequence], count: int) -> List[np.random.Generator]:
    """
    Derive independent generators, one per simulated client.

    Args:
        seed: Master seed or seed sequence
        count: Number of generators

    Returns:
        List[np.random.Generator]: Independent generators
    """
    sequence = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(child) for child in sequence.spawn(count)]


def derive_seed(seed: int, *labels: Union[int, str]) -> np.random.SeedSequence:
    """
    Derive a named child seed so unrelated stages never share a stream.

    Args:
        seed: Master seed
        labels: Stage labels; strings are hashed to stable integers

    Returns:
        np.random.SeedSequence: Child seed sequence
    """
    entropy: List[int] = [int(seed)]
    for label in labels:
        if isinstance(label, str):
            entropy.append(int(generate_hash(label)[:16], 16))
        else:
            entropy.append(int(label))
    return np.random.SeedSequence(entropy)


def format_float(value: float) -> str:
    """Render floats identically across runs for CSV bodies."""
    return f"{value:.6f}"


def mean_of(values: Sequence[float]) -> float:
    return float(np.mean(values)) if len(values) else 0.0
