"""Memoisation of sub-game values, in memory and optionally on disk.

Sub-game solves depend only on the key (x_a, x_b, np_a, np_b) once the model
parameters and auction grid are fixed, so results are shared within a process
through a plain dict and across processes through an append-only CSV file.
The file carries a fingerprint of everything the values depend on; a reader
that finds a different fingerprint or version ignores the file rather than
serving stale numbers.  Appends take an exclusive flock and duplicate rows
are harmless (identical values), so concurrent writers need no coordination
beyond the lock.
"""

from __future__ import annotations

import fcntl
import hashlib
import os
import warnings

import numpy as np

from .params import GridSpec, ModelParams
from .subgame import dequantize, quantize, solve_subgame_batch

_FORMAT = "ahead-subgame-cache"
_VERSION = "v1"
_COLUMNS = "qx_a,qx_b,np_a,np_b,g_a,g_b"

# Keys per solver call; bounds peak memory at ~50 MB of lattice tensors.
CHUNK = 1024


def cache_fingerprint(params: ModelParams, grid: GridSpec) -> str:
    """Hash of every input a cached g value depends on."""
    tag = "|".join([
        params.fingerprint(),
        f"m_max={grid.m_max}",
        f"steps={grid.auction_steps(params)}",
    ])
    return hashlib.sha256(tag.encode()).hexdigest()[:16]


class SubgameCache:
    """values(x_a, x_b, np_a, np_b) -> (g_a, g_b), solving whatever is missing.

    ``directory=None`` keeps the cache purely in memory.  With a directory the
    cache loads any compatible file on construction and appends newly solved
    keys on flush() (also called by close() and the CLI at exit).
    """

    def __init__(self, params: ModelParams, grid: GridSpec, directory: str | None = None):
        self.params = params
        self.grid = grid
        self.fingerprint = cache_fingerprint(params, grid)
        self._memo: dict[tuple, tuple] = {}
        self._dirty: list[tuple] = []
        self.solved = 0          # keys solved in this process
        self.directory = directory
        if directory is not None:
            os.makedirs(directory, exist_ok=True)
            self.path = os.path.join(directory, f"subgame-{self.fingerprint}.csv")
            self._load()
        else:
            self.path = None

    # -- file backing ---------------------------------------------------

    def _header(self) -> str:
        return f"# {_FORMAT} {_VERSION} fingerprint={self.fingerprint}\n"

    def _load(self) -> None:
        if not os.path.exists(self.path):
            return
        with open(self.path, "r") as fh:
            fcntl.flock(fh.fileno(), fcntl.LOCK_SH)
            try:
                first = fh.readline()
                if first != self._header():
                    warnings.warn(
                        f"ignoring cache file {self.path}: header mismatch",
                        stacklevel=2,
                    )
                    return
                second = fh.readline()
                if second.strip() != _COLUMNS:
                    warnings.warn(
                        f"ignoring cache file {self.path}: column mismatch",
                        stacklevel=2,
                    )
                    return
                for line in fh:
                    parts = line.split(",")
                    if len(parts) != 6:
                        continue
                    key = (int(parts[0]), int(parts[1]), int(parts[2]), int(parts[3]))
                    self._memo[key] = (float(parts[4]), float(parts[5]))
            finally:
                fcntl.flock(fh.fileno(), fcntl.LOCK_UN)

    def flush(self) -> None:
        """Append keys solved since the last flush to the backing file."""
        if self.path is None or not self._dirty:
            self._dirty.clear()
            return
        fresh = not os.path.exists(self.path) or os.path.getsize(self.path) == 0
        with open(self.path, "a") as fh:
            fcntl.flock(fh.fileno(), fcntl.LOCK_EX)
            try:
                # Re-check emptiness under the lock; a concurrent writer may
                # have created the header meanwhile.
                if fresh and fh.tell() == 0:
                    fh.write(self._header())
                    fh.write(_COLUMNS + "\n")
                for key in self._dirty:
                    g_a, g_b = self._memo[key]
                    fh.write(f"{key[0]},{key[1]},{key[2]},{key[3]},{g_a:.17g},{g_b:.17g}\n")
                fh.flush()
                os.fsync(fh.fileno())
            finally:
                fcntl.flock(fh.fileno(), fcntl.LOCK_UN)
        self._dirty.clear()

    def close(self) -> None:
        self.flush()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False

    def __len__(self) -> int:
        return len(self._memo)

    # -- lookup / solve -------------------------------------------------

    def values(self, x_a, x_b, np_a, np_b):
        """Vectorised lookup; any missing keys are solved in chunks."""
        x_a = np.atleast_1d(np.asarray(x_a, dtype=float))
        x_b = np.atleast_1d(np.asarray(x_b, dtype=float))
        np_a = np.atleast_1d(np.asarray(np_a, dtype=int))
        np_b = np.atleast_1d(np.asarray(np_b, dtype=int))
        if not (x_a.shape == x_b.shape == np_a.shape == np_b.shape):
            raise ValueError("key components must share a shape")

        keys = [
            (quantize(float(xa)), quantize(float(xb)), int(na), int(nb))
            for xa, xb, na, nb in zip(x_a, x_b, np_a, np_b)
        ]
        missing = sorted({k for k in keys if k not in self._memo})
        if missing:
            self._solve_missing(missing)

        g_a = np.empty(len(keys))
        g_b = np.empty(len(keys))
        for i, k in enumerate(keys):
            g_a[i], g_b[i] = self._memo[k]
        return g_a, g_b

    def _solve_missing(self, missing: list) -> None:
        # Solving from the dequantized key (not the caller's float) keeps the
        # stored value a pure function of the key, so hits and misses agree
        # to the last bit no matter which caller populated the entry.
        for start in range(0, len(missing), CHUNK):
            chunk = missing[start:start + CHUNK]
            xa = np.array([dequantize(k[0]) for k in chunk])
            xb = np.array([dequantize(k[1]) for k in chunk])
            na = np.array([k[2] for k in chunk], dtype=int)
            nb = np.array([k[3] for k in chunk], dtype=int)
            g_a, g_b = solve_subgame_batch(xa, xb, na, nb, self.params, self.grid)
            for k, ga, gb in zip(chunk, g_a, g_b):
                self._memo[k] = (float(ga), float(gb))
                self._dirty.append(k)
            self.solved += len(chunk)
