"""Exact joint Gaussian sampling of d-dimensional paths by dense Cholesky.

Random numbers come from a Philox counter-based generator. The key is
derived from ``(seed, pair_index)`` and stream ``(path, component)`` owns a
fixed block of counters, so any subset of paths can be regenerated on its
own and the output never depends on generation order.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import ndtri

from .kernels import CovarianceKernel, DomainError, parse_kernel

MAX_GRID = 2048
JITTER_LADDER = (0.0, 1e-12, 1e-10, 1e-8)
MAGIC = b"GCLT1"


class SingularGram(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_max * i / n_steps`` for ``i = 1..n_steps`` (0 excluded)."""

    t_max: float
    n_steps: int

    def __post_init__(self):
        if self.n_steps < 1 or self.n_steps > MAX_GRID:
            raise DomainError(f"n_steps must be in [1, {MAX_GRID}]")
        if not self.t_max > 0:
            raise DomainError("t_max must be positive")

    @property
    def times(self) -> np.ndarray:
        return self.t_max * np.arange(1, self.n_steps + 1) / self.n_steps

    @property
    def dt(self) -> float:
        return self.t_max / self.n_steps

    def scaled(self, c: float) -> "TimeGrid":
        return TimeGrid(self.t_max * c, self.n_steps)


@dataclass
class GramFactor:
    lower: np.ndarray
    jitter: float
    grid: TimeGrid


@dataclass
class PathEnsemble:
    """Sampled paths; ``data`` has shape ``(n_paths, dim, n_steps)``."""

    kernel: CovarianceKernel
    grid: TimeGrid
    dim: int
    n_paths: int
    data: np.ndarray
    seed: int
    pair_index: int = 0
    jitter: float = 0.0
    meta: dict = field(default_factory=dict)

    def with_origin(self) -> np.ndarray:
        """Paths with the X_0 = 0 column prepended, shape (n_paths, dim, n_steps+1)."""
        z = np.zeros(self.data.shape[:2] + (1,))
        return np.concatenate([z, self.data], axis=2)


def gram_factor(kernel: CovarianceKernel, grid: TimeGrid) -> GramFactor:
    """Cholesky factor of the Gram matrix, escalating jitter only when needed."""
    g = kernel.gram(grid.times)
    n = g.shape[0]
    base = np.trace(g) / n
    for level in JITTER_LADDER:
        jitter = level * base
        try:
            lower = np.linalg.cholesky(g + jitter * np.eye(n))
        except np.linalg.LinAlgError:
            continue
        return GramFactor(lower, jitter, grid)
    raise SingularGram(f"Gram matrix of {kernel} not factorizable on grid "
                       f"t_max={grid.t_max}, n_steps={grid.n_steps}")


def _philox_key(seed: int, pair_index: int) -> np.ndarray:
    if not 0 <= int(seed) < 2**64 or int(pair_index) < 0:
        raise DomainError("seed must be an unsigned 64-bit integer, pair_index >= 0")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(pair_index),))
    return ss.generate_state(2, dtype=np.uint64)


def _counters_per_stream(n_steps: int) -> int:
    # Philox4x64 emits 4 words per counter value
    return -(-n_steps // 4)


def standard_normals(seed: int, pair_index: int, n_steps: int, dim: int,
                     paths) -> np.ndarray:
    """Normals for the given path indices, shape ``(len(paths), dim, n_steps)``.

    Stream ``(p, c)`` starts at counter ``(p * dim + c) * ceil(n_steps / 4)``.
    """
    key = _philox_key(seed, pair_index)
    block = _counters_per_stream(n_steps)
    paths = np.asarray(paths, dtype=np.int64)
    out = np.empty((len(paths), dim, n_steps))
    if len(paths) == 0:
        return out
    contiguous = np.all(np.diff(paths) == 1)
    if contiguous:
        bg = np.random.Philox(key=key)
        bg.advance(int(paths[0]) * dim * block)
        raw = bg.random_raw(len(paths) * dim * block * 4)
        raw = raw.reshape(len(paths), dim, block * 4)[:, :, :n_steps]
    else:
        raw = np.empty((len(paths), dim, n_steps), dtype=np.uint64)
        for i, p in enumerate(paths):
            bg = np.random.Philox(key=key)
            bg.advance(int(p) * dim * block)
            raw[i] = bg.random_raw(dim * block * 4).reshape(dim, block * 4)[:, :n_steps]
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    out[:] = ndtri(u)
    return out


def sample_ensemble(kernel: CovarianceKernel, grid: TimeGrid, dim: int, n_paths: int,
                    seed: int, pair_index: int = 0, factor: GramFactor | None = None,
                    chunk: int = 4096) -> PathEnsemble:
    """Sample ``n_paths`` d-dimensional paths with i.i.d. components."""
    if dim < 1 or n_paths < 1:
        raise DomainError("dim and n_paths must be positive")
    if factor is None:
        factor = gram_factor(kernel, grid)
    lower = factor.lower
    data = np.empty((n_paths, dim, grid.n_steps))
    for start in range(0, n_paths, chunk):
        idx = np.arange(start, min(start + chunk, n_paths))
        z = standard_normals(seed, pair_index, grid.n_steps, dim, idx)
        data[idx] = z @ lower.T
    return PathEnsemble(kernel, grid, dim, n_paths, data, int(seed), pair_index,
                        factor.jitter)


def sample_pair(kernel: CovarianceKernel, grid1: TimeGrid, grid2: TimeGrid, dim: int,
                n_paths: int, seed: int, pair_index: int = 0):
    """Two independent ensembles (X1, X2) on their own grids.

    The copies use stream keys ``2*pair_index`` and ``2*pair_index + 1``.
    """
    f1 = gram_factor(kernel, grid1)
    f2 = f1 if grid2 == grid1 else gram_factor(kernel, grid2)
    e1 = sample_ensemble(kernel, grid1, dim, n_paths, seed, 2 * pair_index, f1)
    e2 = sample_ensemble(kernel, grid2, dim, n_paths, seed, 2 * pair_index + 1, f2)
    return e1, e2


def save_ensemble(ens: PathEnsemble, path) -> None:
    """Binary dump: magic, kernel string, t_max, n_steps, dim, n_paths, seed, data.

    All header fields and the float64 payload are little-endian.
    """
    spec = ens.kernel.spec().encode()
    header = (MAGIC + struct.pack("<H", len(spec)) + spec
              + struct.pack("<dIIQQ", ens.grid.t_max, ens.grid.n_steps, ens.dim,
                            ens.n_paths, ens.seed))
    payload = np.ascontiguousarray(ens.data, dtype="<f8").tobytes()
    try:
        Path(path).write_bytes(header + payload)
    except OSError as exc:
        raise OSError(f"cannot write ensemble to {path}: {exc}") from exc


def load_ensemble(path) -> PathEnsemble:
    raw = Path(path).read_bytes()
    if raw[:5] != MAGIC:
        raise ValueError(f"{path}: not a GCLT1 ensemble file")
    (n,) = struct.unpack_from("<H", raw, 5)
    kernel = parse_kernel(raw[7:7 + n].decode())
    off = 7 + n
    t_max, n_steps, dim, n_paths, seed = struct.unpack_from("<dIIQQ", raw, off)
    off += struct.calcsize("<dIIQQ")
    data = np.frombuffer(raw, dtype="<f8", offset=off).reshape(n_paths, dim, n_steps)
    return PathEnsemble(kernel, TimeGrid(t_max, n_steps), dim, n_paths,
                        data.astype(np.float64), seed)
