"""Exact simulation of the matrix Ornstein-Uhlenbeck lift.

The lift consists of k node matrices gamma(x_i) in R^(n x d) driven by one
shared n x d Brownian sheet W:

    gamma_t(x_i) = e^(-x_i t) gamma_0(x_i)
                   + int_0^t dW_s e^(-x_i (t-s)) nu_i .

Over a step of size dt the update is Gaussian with a covariance that is
known in closed form: stacking the innovation of row a over (node i,
column b) gives

    C[(i,b), (j,b')] = (nu_i nu_j)_{b b'} * E_ij(dt),
    E_ij(dt) = int_0^dt e^(-(x_i + x_j) s) ds,

independent across the n rows.  Sampling from the factorized C makes each
step exact in law for any dt, so downstream transform validations carry no
time-discretization bias.  The projections

    X_t = sum_i gamma_t(x_i)            (nonlocal state -> matrix process)
    f_t(x) = sum_i e^(-x_i x) gamma_t(x_i)   (conditional forward curve)

recover the Volterra process and its forward curve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .measures import (
    SHAPE_GENERAL,
    SHAPE_SYMMETRIC,
    AtomicMatrixMeasure,
    pair_decay_integrals,
)


@dataclass(frozen=True)
class OULiftState:
    """Node matrices gamma(x_i) plus the driving measure at time t."""

    t: float
    gamma: np.ndarray  # (k, n, d)
    measure: AtomicMatrixMeasure

    def __post_init__(self):
        g = np.array(self.gamma, dtype=float)
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)
        if self.measure.shape != SHAPE_SYMMETRIC:
            raise ValueError("driving measure must be symmetric-shape")
        k, d = self.measure.k, self.measure.d
        if g.ndim != 3 or g.shape[0] != k or g.shape[2] != d:
            raise ValueError(
                f"gamma must have shape (k={k}, n, d={d}), got {g.shape}"
            )
        if not np.all(np.isfinite(g)):
            raise ValueError("gamma entries must be finite")

    @property
    def n(self) -> int:
        return self.gamma.shape[1]

    @property
    def d(self) -> int:
        return self.gamma.shape[2]

    @property
    def k(self) -> int:
        return self.gamma.shape[0]


def lift_state_from_measure(
    gamma0: AtomicMatrixMeasure, measure: AtomicMatrixMeasure
) -> OULiftState:
    """Build the initial state from a general-shape measure for gamma_0."""
    if gamma0.shape != SHAPE_GENERAL and gamma0.shape != SHAPE_SYMMETRIC:
        raise ValueError("gamma0 must be an atomic matrix measure")
    if not np.array_equal(gamma0.nodes, measure.nodes):
        raise ValueError("gamma0 and the driving measure must share nodes")
    return OULiftState(t=0.0, gamma=gamma0.weights, measure=measure)


def node_covariance(measure: AtomicMatrixMeasure, dt: float) -> np.ndarray:
    """Cross-node innovation covariance C, a (k d) x (k d) PSD matrix."""
    k, d = measure.k, measure.d
    E = pair_decay_integrals(measure.nodes, dt)  # (k, k)
    prods = np.einsum("iab,jbc->ijac", measure.weights, measure.weights)
    C = prods * E[:, :, None, None]
    return C.transpose(0, 2, 1, 3).reshape(k * d, k * d)


def _psd_factor(C: np.ndarray, clamp_rel: float = 1e-14) -> np.ndarray:
    """Symmetric factor L with L L^T = C, eigenvalues below the clamp zeroed."""
    evals, Q = np.linalg.eigh(0.5 * (C + C.T))
    floor = clamp_rel * max(float(np.trace(C)), 0.0)
    evals = np.where(evals > floor, evals, 0.0)
    return Q * np.sqrt(evals)[None, :]


@dataclass(frozen=True)
class StepOperator:
    """Precomputed exact one-step sampler for a fixed (measure, dt) pair."""

    dt: float
    decay: np.ndarray          # (k,) e^(-x_i dt)
    noise_factor: np.ndarray   # (k d, k d) with L L^T = C
    measure: AtomicMatrixMeasure
    cross_w: np.ndarray = field(repr=False)      # (d, k d) Cov(dW row, innovations)
    cond_w_factor: np.ndarray = field(repr=False)  # (d, d) factor of the cond. covariance
    cond_w_gain: np.ndarray = field(repr=False)    # (d, k d) conditional-mean gain

    @classmethod
    def build(cls, measure: AtomicMatrixMeasure, dt: float) -> "StepOperator":
        if dt <= 0.0:
            raise ValueError("step size must be positive")
        k, d = measure.k, measure.d
        C = node_covariance(measure, dt)
        L = _psd_factor(C)
        resid = np.linalg.norm(L @ L.T - C)
        scale = max(np.linalg.norm(C), 1e-300)
        if resid > 1e-10 * scale:
            raise np.linalg.LinAlgError(
                f"covariance factorization residual {resid:.3e} exceeds "
                f"1e-10 * ||C|| = {1e-10 * scale:.3e}"
            )
        # Cov(dW_{a c}, innovation_{(j, b)}) = F_j(dt) (nu_j)_{c b}; the gain
        # and conditional covariance let the price module reuse the same W
        # realization that drove the node update.
        from .measures import decay_integral

        F = decay_integral(measure.nodes, dt)  # (k,)
        cross = np.einsum("j,jcb->cjb", F, measure.weights).reshape(d, k * d)
        Cpinv = np.linalg.pinv(C, rcond=1e-12, hermitian=True)
        gain = cross @ Cpinv
        cond_cov = dt * np.eye(d) - gain @ cross.T
        cond_factor = _psd_factor(cond_cov)
        return cls(
            dt=float(dt),
            decay=np.exp(-measure.nodes * dt),
            noise_factor=L,
            measure=measure,
            cross_w=cross,
            cond_w_factor=cond_factor,
            cond_w_gain=gain,
        )


def exact_step(state: OULiftState, op: StepOperator, noise: np.ndarray) -> OULiftState:
    """Advance the lift by one exact step using n x (k d) standard normals."""
    if op.measure is not state.measure and not (
        np.array_equal(op.measure.nodes, state.measure.nodes)
        and np.array_equal(op.measure.weights, state.measure.weights)
    ):
        raise ValueError("step operator was built for a different measure")
    k, n, d = state.k, state.n, state.d
    noise = np.asarray(noise, dtype=float)
    if noise.shape != (n, k * d):
        raise ValueError(f"noise must have shape ({n}, {k * d}), got {noise.shape}")
    if not np.all(np.isfinite(noise)):
        raise ValueError("noise entries must be finite")
    innov = (noise @ op.noise_factor.T).reshape(n, k, d)
    gamma = op.decay[:, None, None] * state.gamma + innov.transpose(1, 0, 2)
    return OULiftState(t=state.t + op.dt, gamma=gamma, measure=state.measure)


def project_volterra_ou(state: OULiftState) -> np.ndarray:
    """Total-mass projection X_t = sum_i gamma_t(x_i)."""
    return state.gamma.sum(axis=0)


def forward_curve(state: OULiftState, x: float) -> np.ndarray:
    """Conditional forward value f_t(x) = sum_i e^(-x_i x) gamma_t(x_i)."""
    if x < 0.0:
        raise ValueError("forward horizon must be >= 0")
    damp = np.exp(-state.measure.nodes * float(x))
    return np.einsum("i,iab->ab", damp, state.gamma)


def decay_gamma(gamma0: np.ndarray, nodes: np.ndarray, t: float) -> np.ndarray:
    """Deterministic part e^(-x_i t) gamma_0(x_i) of the node matrices."""
    return np.exp(-np.asarray(nodes) * t)[:, None, None] * np.asarray(gamma0)


def mean_volterra_ou(gamma0: np.ndarray, nodes: np.ndarray, t: float) -> np.ndarray:
    """E[X_t] = sum_i e^(-x_i t) gamma_0(x_i)."""
    return decay_gamma(gamma0, nodes, t).sum(axis=0)


def simulate_lift_blocks(
    measure: AtomicMatrixMeasure,
    gamma0: np.ndarray,
    times: np.ndarray,
    seed: int,
    start: int,
    stop: int,
    rng_factory=None,
) -> np.ndarray:
    """Exact lift states for paths [start, stop) at the requested times.

    Returns gamma samples of shape (stop-start, len(times), k, n, d).  Path
    p draws its noise from ``path_rng(seed, p)`` exclusively, one
    (len(times), n, k d) Gaussian tensor per path, so results are
    scheduling-independent.  Steps are taken between consecutive distinct
    times; exactness of the one-step law makes the grid choice immaterial.
    """
    from .mc import path_rng

    if rng_factory is None:
        rng_factory = path_rng
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(times < 0.0):
        raise ValueError("times must be a nonempty 1-d array of t >= 0")
    if np.any(np.diff(times) <= 0.0):
        raise ValueError("times must be strictly increasing")
    k, d = measure.k, measure.d
    gamma0 = np.asarray(gamma0, dtype=float)
    n = gamma0.shape[1]
    steps = np.diff(np.concatenate([[0.0], times]))
    ops = []
    cache: dict[float, StepOperator] = {}
    for dt in steps:
        key = round(float(dt), 15)
        if dt > 0 and key not in cache:
            cache[key] = StepOperator.build(measure, float(dt))
        ops.append(cache.get(key))

    n_paths = stop - start
    noise = np.empty((n_paths, times.size, n, k * d))
    for row, p in enumerate(range(start, stop)):
        noise[row] = rng_factory(seed, p).standard_normal((times.size, n, k * d))

    out = np.empty((n_paths, times.size, k, n, d))
    gamma = np.broadcast_to(gamma0, (n_paths, k, n, d)).copy()
    for m, op in enumerate(ops):
        if op is not None:
            innov = (noise[:, m] @ op.noise_factor.T).reshape(n_paths, n, k, d)
            gamma = op.decay[None, :, None, None] * gamma + innov.transpose(0, 2, 1, 3)
        out[:, m] = gamma
    return out
