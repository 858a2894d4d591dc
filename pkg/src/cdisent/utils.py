import hashlib
import json
import os
import tempfile
from pathlib import Path
from typing import Any, List, Union

import numpy as np


def atomic_write_bytes(path: Union[str, Path], payload: bytes):
    """Write bytes to path through a temporary file and an atomic rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise


def atomic_write_text(path: Union[str, Path], text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def canonical_json(value: Any) -> str:
    """Serialize to JSON with sorted keys and no whitespace, so equal values hash equally."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), default=_json_default)


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def config_hash(value: Any, length: int = 12) -> str:
    """Short sha256 digest of the canonical JSON form of value."""
    return hashlib.sha256(canonical_json(value).encode("utf-8")).hexdigest()[:length]


def derive_seeds(seed: int, count: int) -> List[int]:
    """Derive count independent 32-bit seeds from a parent seed."""
    if count <= 0:
        return []
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(count)]


def derive_seed(seed: int, *keys: int) -> int:
    """Derive one child seed from a parent seed and an integer key path."""
    return int(np.random.SeedSequence([seed, *keys]).generate_state(1)[0])
