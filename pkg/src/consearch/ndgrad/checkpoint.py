"""Parameter checkpoints: versioned npz archives of named float64 arrays."""
from __future__ import annotations

from pathlib import Path

import numpy as np

FORMAT_TAG = "ndgrad-checkpoint/1"


def save_arrays(path: str | Path, arrays: dict[str, np.ndarray]) -> None:
    if "__format__" in arrays:
        raise ValueError("'__format__' is a reserved checkpoint key")
    np.savez(path, __format__=np.str_(FORMAT_TAG), **arrays)


def load_arrays(path: str | Path) -> dict[str, np.ndarray]:
    with np.load(path, allow_pickle=False) as archive:
        tag = str(archive["__format__"])
        if tag != FORMAT_TAG:
            raise ValueError(f"unsupported checkpoint format {tag!r}")
        return {k: archive[k] for k in archive.files if k != "__format__"}
