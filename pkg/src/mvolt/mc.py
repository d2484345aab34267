"""Reproducible parallel Monte Carlo with counter-based per-path streams.

Every path index owns an independent Philox stream derived from
(master seed, path index), so a draw sequence is bit-identical no matter
how paths are scheduled across workers.  Reductions are accumulated per
fixed-size block and the block results are combined in block order on the
driver, which makes the final numbers byte-identical for 1 or many workers.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

BLOCK_SIZE = 8192


def path_rng(seed: int, path_index: int) -> np.random.Generator:
    """Independent, scheduling-invariant stream for one path."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(path_index),))
    return np.random.Generator(np.random.Philox(ss))


def path_rngs(seed: int, indices) -> list[np.random.Generator]:
    return [path_rng(seed, i) for i in indices]


@dataclass(frozen=True)
class StreamedRng:
    """Master seed with a counter-based path-index -> stream map.

    ``stream(p)`` is bit-identical for a fixed (seed, p) no matter how many
    workers run or in which order paths are scheduled.
    """

    seed: int

    def stream(self, path_index: int) -> np.random.Generator:
        return path_rng(self.seed, path_index)


class GaussianOnlyRng:
    """Generator facade exposing only ``standard_normal``.

    Restricting the surface is what lets the antithetic wrapper reject
    simulators that consume any other kind of randomness (thinning
    uniforms, Poisson counts, ...).
    """

    _sign = 1.0

    def __init__(self, rng: np.random.Generator):
        self._rng = rng

    def standard_normal(self, size=None):
        return self._sign * self._rng.standard_normal(size)

    def __getattr__(self, name):
        raise AttributeError(
            f"antithetic streams only provide standard_normal draws, not {name!r}; "
            "wrap only simulators that consume Gaussian noise exclusively"
        )


class FlippedGaussianRng(GaussianOnlyRng):
    """Sign-flipped counterpart of :class:`GaussianOnlyRng`."""

    _sign = -1.0


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo mean with its standard error and batch-mean diagnostics."""

    mean: np.ndarray
    stderr: np.ndarray
    n_paths: int
    batch_means: np.ndarray = field(repr=False)

    def z_score(self, reference) -> np.ndarray:
        se = np.where(self.stderr > 0.0, self.stderr, np.nan)
        return (self.mean - np.asarray(reference)) / se


def _block_ranges(n_paths: int, block_size: int):
    return [
        (start, min(start + block_size, n_paths))
        for start in range(0, n_paths, block_size)
    ]


class _PathBlockTask:
    """Picklable per-block evaluation of a path-level simulator.

    In antithetic mode the block ranges over pair indices: pair m consumes
    stream m twice, once plainly and once sign-flipped, and contributes the
    pair average as one value (the correct sample for the standard error of
    an antithetic estimator).
    """

    def __init__(self, fn, seed, antithetic):
        self.fn = fn
        self.seed = seed
        self.antithetic = antithetic

    def __call__(self, block):
        start, stop = block
        out = []
        for p in range(start, stop):
            try:
                if self.antithetic:
                    plus = self.fn(GaussianOnlyRng(path_rng(self.seed, p)))
                    minus = self.fn(FlippedGaussianRng(path_rng(self.seed, p)))
                    out.append(
                        0.5 * (np.asarray(plus, dtype=float)
                               + np.asarray(minus, dtype=float))
                    )
                else:
                    out.append(np.asarray(self.fn(path_rng(self.seed, p)),
                                          dtype=float))
            except Exception as exc:
                raise RuntimeError(
                    f"simulator failed on path {p} (seed {self.seed}); "
                    f"replay with path_rng({self.seed}, {p})"
                ) from exc
        return np.stack(out)


def _map_blocks(task, blocks, workers: int):
    if workers <= 1 or len(blocks) <= 1:
        return [task(b) for b in blocks]
    workers = min(workers, len(blocks), os.cpu_count() or 1)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, blocks))


def _estimate_from_values(values: np.ndarray, block_size: int) -> Estimate:
    n = values.shape[0]
    mean = values.mean(axis=0)
    if n > 1:
        var = values.var(axis=0, ddof=1)
        stderr = np.sqrt(var / n)
    else:
        stderr = np.zeros_like(mean)
    n_batches = max(min(n // max(block_size, 1), 64), 1)
    edges = np.linspace(0, n, n_batches + 1, dtype=int)
    batch_means = np.stack(
        [values[a:b].mean(axis=0) for a, b in zip(edges[:-1], edges[1:])]
    )
    return Estimate(mean=mean, stderr=stderr, n_paths=n, batch_means=batch_means)


def run_paths(
    fn,
    n_paths: int,
    seed: int,
    *,
    workers: int = 1,
    block_size: int = BLOCK_SIZE,
    antithetic: bool = False,
) -> Estimate:
    """Estimate E[fn(stream)] over ``n_paths`` independent path streams.

    ``fn`` receives one Generator per path and returns a float or ndarray.
    With ``antithetic=True`` the n_paths budget is spent on n_paths / 2
    stream pairs, each evaluated plainly and with sign-flipped Gaussian
    draws; the simulator must declare that it consumes Gaussian noise only
    by exposing a true ``gaussian_only`` attribute.
    """
    if n_paths < 1:
        raise ValueError("need at least one path")
    antithetic = antithetic or bool(getattr(fn, "antithetic", False))
    if antithetic:
        if not getattr(fn, "gaussian_only", False):
            raise ValueError(
                "antithetic wrapping requires a simulator that declares "
                "gaussian_only=True (jump/thinning simulators are rejected)"
            )
        if n_paths % 2 != 0:
            raise ValueError("antithetic estimation needs an even path count")
        n_units = n_paths // 2
    else:
        n_units = n_paths
    blocks = _block_ranges(n_units, block_size)
    task = _PathBlockTask(fn, seed, antithetic)
    chunks = _map_blocks(task, blocks, workers)
    values = np.concatenate(chunks, axis=0)
    return _estimate_from_values(values, block_size)


def collect_paths(
    fn,
    n_paths: int,
    seed: int,
    *,
    workers: int = 1,
    block_size: int = BLOCK_SIZE,
) -> np.ndarray:
    """Stack per-path outputs of ``fn`` in path order (no reduction)."""
    if n_paths < 1:
        raise ValueError("need at least one path")
    blocks = _block_ranges(n_paths, block_size)
    task = _PathBlockTask(fn, seed, antithetic=False)
    chunks = _map_blocks(task, blocks, workers)
    return np.concatenate(chunks, axis=0)


def antithetic_wrap(fn):
    """Mark a Gaussian-only simulator for antithetic pairing in run_paths."""
    if not getattr(fn, "gaussian_only", False):
        raise ValueError(
            "antithetic wrapping requires a simulator that declares "
            "gaussian_only=True (jump/thinning simulators are rejected)"
        )

    class _Antithetic:
        gaussian_only = True
        antithetic = True

        def __init__(self, inner):
            self.inner = inner

        def __call__(self, rng):
            return self.inner(rng)

    return _Antithetic(fn)


class _VectorBlockTask:
    """Picklable wrapper for block simulators (vectorized across paths)."""

    def __init__(self, block_fn, seed):
        self.block_fn = block_fn
        self.seed = seed

    def __call__(self, block):
        start, stop = block
        try:
            return np.asarray(self.block_fn(self.seed, start, stop))
        except Exception as exc:
            raise RuntimeError(
                f"block simulator failed on paths [{start}, {stop}) "
                f"(seed {self.seed})"
            ) from exc


def run_path_blocks(
    block_fn,
    n_paths: int,
    seed: int,
    *,
    workers: int = 1,
    block_size: int = BLOCK_SIZE,
) -> np.ndarray:
    """Evaluate a vectorized simulator over fixed path blocks.

    ``block_fn(seed, start, stop)`` must return per-path values of shape
    (stop - start, ...), drawing the noise of path p from
    ``path_rng(seed, p)`` only.  Results are concatenated in path order, so
    the output is independent of the worker count.
    """
    if n_paths < 1:
        raise ValueError("need at least one path")
    blocks = _block_ranges(n_paths, block_size)
    task = _VectorBlockTask(block_fn, seed)
    chunks = _map_blocks(task, blocks, workers)
    return np.concatenate(chunks, axis=0)


def estimate_mean(values: np.ndarray, block_size: int = BLOCK_SIZE) -> Estimate:
    """Estimate from per-path values produced by :func:`run_path_blocks`."""
    values = np.asarray(values)
    if np.iscomplexobj(values):
        re = _estimate_from_values(values.real, block_size)
        im = _estimate_from_values(values.imag, block_size)
        return Estimate(
            mean=re.mean + 1j * im.mean,
            stderr=np.sqrt(re.stderr**2 + im.stderr**2),
            n_paths=re.n_paths,
            batch_means=re.batch_means + 1j * im.batch_means,
        )
    return _estimate_from_values(values.astype(float), block_size)
