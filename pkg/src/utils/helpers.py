"""Helper utility functions."""

from pathlib import Path
from typing import Iterable, Union

import numpy as np
import pandas as pd


def as_float_array(values, ndim: int = 1, name: str = "values") -> np.ndarray:
    """
    Coerce ``values`` to a float64 array with exactly ``ndim`` dimensions.

    Scalars are promoted; a 1-D input asked for as 2-D becomes a column.
    """
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape((1,) * ndim)
    if ndim == 2 and arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    return arr


def frozen(arr: np.ndarray) -> np.ndarray:
    """Return a read-only copy of ``arr``."""
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


def ensure_writable_dir(path: Union[str, Path]) -> Path:
    """
    Create ``path`` if needed and check that files can be written into it.

    Raises:
        OSError: if the directory cannot be created or written
    """
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)
    probe = directory / '.write_probe'
    probe.write_text('')
    probe.unlink()
    return directory


def write_csv(frame: pd.DataFrame, path: Union[str, Path], float_format: str = '%.12g',
              header_lines: Iterable[str] = ()) -> Path:
    """
    Write a DataFrame as CSV with a fixed float format so reruns are byte-identical.

    Args:
        frame (pd.DataFrame): table to write
        path: destination file
        float_format (str): printf-style float format
        header_lines: optional comment lines written before the table, each prefixed by '# '

    Returns:
        Path: the written file
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, 'w', newline='') as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        frame.to_csv(fh, index=False, float_format=float_format, lineterminator='\n')
    return target
