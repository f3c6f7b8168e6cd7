import json
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from itertools import batched
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np
import pandas as pd

from fhtw_lite.errors import RejectedInputError

CHUNK_SIZE = 1024


class PairwiseSum:
    """
    Streaming balanced-tree summation.

    Parts are merged like a binary counter: two partial sums covering the same number of parts are
    added as soon as both exist. The reduction order therefore depends only on how many parts were
    added, and at most ``log2(count) + 1`` partial sums are alive at any time.
    """
    def __init__(self):
        self._stack: list[tuple[int, np.ndarray]] = []

    def add(self, part: np.ndarray):
        count = 1
        while self._stack and self._stack[-1][0] == count:
            c, prev = self._stack.pop()
            part = prev + part
            count += c
        self._stack.append((count, part))

    def total(self) -> np.ndarray:
        assert self._stack, "Nothing to sum"
        out = self._stack[-1][1]
        for _, part in reversed(self._stack[:-1]):
            out = part + out
        return out


def pairwise_sum(parts: Iterable[np.ndarray]) -> np.ndarray:
    """Sum equally shaped arrays with :class:`PairwiseSum` (bitwise reproducible for a fixed part count)."""
    acc = PairwiseSum()
    for p in parts:
        acc.add(p)
    return acc.total()


def chunked_mean(fn: Callable[[np.ndarray], np.ndarray], samples: np.ndarray,
                 chunk_size: int = CHUNK_SIZE, threads: int | None = None) -> np.ndarray:
    """Empirical mean of a per-chunk sum over the rows of ``samples``.

    :param fn: maps a chunk of rows (n x d) to the SUM of its per-row contributions
    :param samples: N x d sample matrix
    :param chunk_size: number of rows per chunk (fixes the reduction tree)
    :param threads: worker threads; ``None`` or 1 runs inline

    :return: the mean array
    """
    n = samples.shape[0]
    if n == 0:
        raise RejectedInputError("Empty sample set")

    starts = range(0, n, chunk_size)
    run = lambda s: fn(samples[s:s + chunk_size])
    acc = PairwiseSum()
    if threads is not None and threads > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            # bounded batches keep the number of pending partial sums small
            for batch in batched(starts, 4 * threads):
                for part in pool.map(run, batch):
                    acc.add(part)
    else:
        for s in starts:
            acc.add(run(s))

    return acc.total() / n


def atomic_write(path: Path | str, writer: Callable[[Path], None]) -> Path:
    """Write through a temporary sibling file and rename it over ``path``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        writer(Path(tmp))
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return path


def write_json(path: Path | str, payload: dict) -> Path:
    return atomic_write(path, lambda p: p.write_text(json.dumps(payload, indent=2, default=_json_default)))


def write_frame(path: Path | str, frame: pd.DataFrame) -> Path:
    """Write a data frame as CSV with a header row and full float precision."""
    return atomic_write(path, lambda p: frame.to_csv(p, index=False, float_format="%.17g"))


def write_matrix(path: Path | str, matrix: np.ndarray, columns: list[str]) -> Path:
    matrix = np.atleast_2d(matrix)
    assert matrix.shape[1] == len(columns), f"{len(columns)} column names for {matrix.shape[1]} columns"
    return write_frame(path, pd.DataFrame(matrix, columns=columns))


def read_matrix(path: Path | str) -> tuple[np.ndarray, list[str]]:
    """Read a headered numeric CSV.

    :return: (values as float array, column names)
    """
    try:
        df = pd.read_csv(path)
        values = df.to_numpy(dtype=float)
    except ValueError as e:
        raise RejectedInputError(f"{path} is not a numeric CSV: {e}") from e
    if not np.all(np.isfinite(values)):
        raise RejectedInputError(f"{path} contains non-finite entries")
    return values, list(df.columns)


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, (set, tuple)):
        return list(obj)
    raise TypeError(f"Cannot serialise {type(obj).__name__}")


def parallel_map(fn: Callable, items: Sequence, threads: int | None = None) -> list:
    """``[fn(x) for x in items]``, on a thread pool when ``threads > 1``; output order follows ``items``."""
    items = list(items)
    if threads is None or threads <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
