"""Atomic matrix measures and the exponential-decay semigroup acting on them.

A convolution kernel K is represented as the Laplace transform of a finite
atomic measure with matrix weights,

    K(t) = sum_i w_i * exp(-x_i * t),

where the nodes x_i >= 0 are mean-reversion rates and the w_i are d x d
symmetric matrices (or n x d matrices for the Gaussian-lift initial data).
The decay semigroup acts on such a measure by damping each weight,
w_i -> exp(-x_i * t) * w_i, which keeps everything inside the same
finite-rank family.  These two operations, together with the pairwise
integrals

    E_ij(t) = int_0^t exp(-(x_i + x_j) s) ds,

are the building blocks of every simulator and transform in this package.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SHAPE_SYMMETRIC = "symmetric"
SHAPE_GENERAL = "general"

# Tolerance for the optional PSD check on symmetric weights: smallest
# eigenvalue may dip below zero by at most EPS_PSD * (1 + trace).
EPS_PSD = 1e-10


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class AtomicMatrixMeasure:
    """Finite atomic measure with matrix weights.

    Parameters
    ----------
    nodes : array_like, shape (k,)
        Strictly increasing mean-reversion rates, all finite and >= 0.
    weights : array_like, shape (k, d, d) or (k, n, d)
        One matrix weight per node.  Symmetric d x d for ``shape='symmetric'``,
        arbitrary n x d for ``shape='general'``.
    shape : str
        Either ``'symmetric'`` or ``'general'``.
    psd_required : bool
        If True (jump-lift usage), every symmetric weight must be positive
        semidefinite up to the EPS_PSD slack.
    """

    nodes: np.ndarray
    weights: np.ndarray
    shape: str = SHAPE_SYMMETRIC
    psd_required: bool = False

    def __post_init__(self):
        nodes = _readonly(self.nodes).reshape(-1)
        weights = _readonly(self.weights)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        if nodes.size == 0:
            raise ValueError("measure needs at least one node")
        if not np.all(np.isfinite(nodes)):
            raise ValueError("nodes must be finite")
        if np.any(nodes < 0.0):
            raise ValueError("nodes must be >= 0")
        if nodes.size > 1 and np.any(np.diff(nodes) <= 0.0):
            raise ValueError("nodes must be strictly increasing")
        if weights.ndim != 3 or weights.shape[0] != nodes.size:
            raise ValueError(
                f"weights must have shape (k, ., .) with k={nodes.size}, "
                f"got {weights.shape}"
            )
        if not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite")
        if self.shape == SHAPE_SYMMETRIC:
            if weights.shape[1] != weights.shape[2]:
                raise ValueError("symmetric-shape weights must be square")
            if not np.allclose(weights, np.swapaxes(weights, 1, 2), atol=1e-12):
                raise ValueError("symmetric-shape weights must be symmetric")
            if self.psd_required:
                for i, w in enumerate(weights):
                    lo = float(np.linalg.eigvalsh(w)[0])
                    if lo < -EPS_PSD * (1.0 + abs(np.trace(w))):
                        raise ValueError(
                            f"weight {i} is not PSD (min eigenvalue {lo:.3e})"
                        )
        elif self.shape == SHAPE_GENERAL:
            if self.psd_required:
                raise ValueError("psd_required only applies to symmetric shape")
        else:
            raise ValueError(f"unknown shape tag {self.shape!r}")

    @property
    def k(self) -> int:
        return self.nodes.size

    @property
    def d(self) -> int:
        return self.weights.shape[2]

    @property
    def nrows(self) -> int:
        return self.weights.shape[1]

    def total_mass(self) -> np.ndarray:
        """Sum of all weights (the kernel value at t = 0)."""
        return self.weights.sum(axis=0)


def zero_measure(nodes, d: int, shape: str = SHAPE_SYMMETRIC, n: int | None = None) -> AtomicMatrixMeasure:
    nodes = np.atleast_1d(np.asarray(nodes, dtype=float))
    rows = d if shape == SHAPE_SYMMETRIC else int(n if n is not None else d)
    w = np.zeros((nodes.size, rows, d))
    return AtomicMatrixMeasure(nodes, w, shape=shape)


def eval_kernel(measure: AtomicMatrixMeasure, t) -> np.ndarray:
    """Evaluate K(t) = sum_i w_i exp(-x_i t).

    ``t`` may be a scalar (returns one d x d matrix) or a 1-d array
    (returns a stacked (len(t), d, d) array).  Negative times are rejected.
    """
    if measure.shape != SHAPE_SYMMETRIC:
        raise ValueError("eval_kernel requires a symmetric-shape measure")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0.0):
        raise ValueError("kernel evaluation requires t >= 0")
    damp = np.exp(-np.multiply.outer(t_arr, measure.nodes))  # (..., k)
    out = np.tensordot(damp, measure.weights, axes=([-1], [0]))
    return out


def semigroup_apply(measure: AtomicMatrixMeasure, t: float) -> AtomicMatrixMeasure:
    """Apply the decay semigroup: weights w_i -> exp(-x_i t) w_i, nodes kept."""
    t = float(t)
    if t < 0.0:
        raise ValueError("semigroup time must be >= 0")
    damp = np.exp(-measure.nodes * t)
    return AtomicMatrixMeasure(
        measure.nodes,
        damp[:, None, None] * measure.weights,
        shape=measure.shape,
        psd_required=measure.psd_required,
    )


def decay_integral(rate, t):
    """int_0^t exp(-rate * s) ds = (1 - exp(-rate t)) / rate, with limit t at rate 0.

    Vectorized in both arguments (broadcasting rules apply).
    """
    rate = np.asarray(rate, dtype=float)
    t = np.asarray(t, dtype=float)
    small = np.abs(rate) < 1e-14
    safe = np.where(small, 1.0, rate)
    out = np.where(small, t * np.ones_like(safe), -np.expm1(-safe * t) / safe)
    if out.ndim == 0:
        return float(out)
    return out


def pair_decay_integrals(nodes: np.ndarray, t) -> np.ndarray:
    """Matrix E_ij(t) = int_0^t exp(-(x_i + x_j) s) ds for all node pairs."""
    nodes = np.asarray(nodes, dtype=float)
    s = nodes[:, None] + nodes[None, :]
    return decay_integral(s, t)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform time grid t_0 = 0 < t_1 < ... < t_N with step dt."""

    times: np.ndarray = field(repr=False)

    def __post_init__(self):
        times = _readonly(self.times).reshape(-1)
        object.__setattr__(self, "times", times)
        if times.size < 2:
            raise ValueError("grid needs at least two points")
        if times[0] != 0.0:
            raise ValueError("grid must start at 0")
        steps = np.diff(times)
        if np.any(steps <= 0.0):
            raise ValueError("grid times must be strictly increasing")
        dt = steps[0]
        if np.max(np.abs(steps - dt)) > 1e-12 * max(dt, 1.0):
            raise ValueError("grid spacing must be uniform to 1e-12 relative")

    @classmethod
    def regular(cls, horizon: float, n_steps: int) -> "TimeGrid":
        if horizon <= 0.0 or n_steps < 1:
            raise ValueError("need horizon > 0 and n_steps >= 1")
        return cls(np.linspace(0.0, float(horizon), int(n_steps) + 1))

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def __len__(self) -> int:
        return self.times.size
