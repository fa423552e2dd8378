"""Noisy simulation at a sampling scheme and grid-search NLS estimation.

The least-squares cost ``0.5 * ||y - g(theta)||^2`` is linear in the
complex amplitudes ``alpha_k * exp(i phi_k)``.  The search therefore runs
over the non-linear parameters (frequencies, chirp slopes, dampings) only;
at every grid point the amplitudes follow in closed form, which minimises
the same cost as a search over the full parameter vector.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, EmptyGridError, TooLargeError
from .models import CandidateGrid, NoiseSpec, SignalModel

__all__ = [
    "Observation",
    "EstimationGrid",
    "simulate",
    "simulate_trials",
    "nls_cost",
    "nls_estimate",
    "rmse",
    "trial_rng",
]

log = logging.getLogger(__name__)

GRID_CAP = 10**6
_CHUNK_ELEMS = 4_000_000


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Independent stream for one Monte Carlo trial, keyed by ``(seed, trial)``."""
    return np.random.default_rng([int(seed), int(trial)])


@dataclass(frozen=True)
class Observation:
    """Complex samples at the selected candidates.

    ``values`` is ``(M,)`` for a single record or ``(T, M)`` for a batch of
    independent trials sharing the same sampling scheme.
    """

    indices: np.ndarray
    values: np.ndarray
    noise: NoiseSpec
    seed: Optional[int]
    points: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int)
        vals = np.asarray(self.values, dtype=complex)
        if vals.shape[-1] != idx.size:
            raise ConfigError(f"{vals.shape[-1]} values for {idx.size} indices")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "points", np.asarray(self.points, dtype=float))

    @property
    def n_trials(self) -> Optional[int]:
        return self.values.shape[0] if self.values.ndim == 2 else None


def _selection(grid: CandidateGrid, omega) -> np.ndarray:
    idx = np.asarray(omega, dtype=int).ravel()
    if idx.size == 0:
        raise ConfigError("the sampling scheme is empty")
    if np.any(idx < 0) or np.any(idx >= grid.size):
        raise ConfigError(f"sample indices must lie in 0..{grid.size - 1}")
    return idx


def _noise(rng, variance, shape):
    # real and imaginary parts each carry half the variance
    return math.sqrt(variance / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def simulate(model: SignalModel, theta, grid: CandidateGrid, omega, noise: NoiseSpec,
             seed: Optional[int] = None) -> Observation:
    """One noisy record ``y_n = s(t_n; theta) + e_n`` for ``n`` in ``omega``."""
    theta = model.check_theta(theta)
    idx = _selection(grid, omega)
    pts = grid.points[idx]
    clean = model.mean(theta, pts)
    rng = np.random.default_rng(seed)
    values = clean + _noise(rng, noise.variance, clean.shape) if noise.variance > 0 else clean.copy()
    return Observation(idx, values, noise, seed, pts)


def simulate_trials(model: SignalModel, theta, grid: CandidateGrid, omega, noise: NoiseSpec,
                    trials: int, seed: int, thetas=None) -> Observation:
    """``trials`` independent records; trial ``i`` draws from ``trial_rng(seed, i)``.

    ``thetas`` optionally gives one true parameter vector per trial.
    """
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    idx = _selection(grid, omega)
    pts = grid.points[idx]
    if thetas is None:
        clean = np.broadcast_to(model.mean(model.check_theta(theta), pts), (trials, idx.size))
    else:
        thetas = np.asarray(thetas, dtype=float)
        if thetas.shape != (trials, model.n_params):
            raise ConfigError(f"thetas must have shape ({trials}, {model.n_params})")
        clean = np.stack([model.mean(model.check_theta(th), pts) for th in thetas])
    values = np.array(clean, dtype=complex)
    if noise.variance > 0:
        for i in range(trials):
            values[i] += _noise(trial_rng(seed, i), noise.variance, idx.size)
    return Observation(idx, values, noise, seed, pts)


@dataclass(frozen=True)
class EstimationGrid:
    """Cartesian search grid over the non-linear parameters.

    ``values`` holds one 1-D array per entry of ``model.nonlinear_indices``
    (in that order).  ``refine`` turns on a coordinate-wise parabolic polish
    of the best grid point using at most ``max_evals`` cost evaluations.
    Estimated phases are wrapped to within ``pi`` of ``phase_ref`` when given,
    otherwise to ``(-pi, pi]``.
    """

    values: tuple
    refine: bool = False
    max_evals: int = 200
    phase_ref: Optional[np.ndarray] = None

    def __post_init__(self):
        axes = tuple(np.atleast_1d(np.asarray(v, dtype=float)) for v in self.values)
        for j, ax in enumerate(axes):
            if ax.size == 0:
                raise EmptyGridError(f"estimation grid dimension {j} is empty")
            if ax.ndim != 1 or not np.all(np.isfinite(ax)):
                raise ConfigError(f"estimation grid dimension {j} must be a finite 1-D list")
        object.__setattr__(self, "values", axes)
        if self.max_evals < 0:
            raise ConfigError("max_evals must be >= 0")
        if self.phase_ref is not None:
            object.__setattr__(self, "phase_ref", np.atleast_1d(np.asarray(self.phase_ref, dtype=float)))

    @property
    def shape(self) -> tuple:
        return tuple(ax.size for ax in self.values)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64))

    @classmethod
    def around(cls, model: SignalModel, theta, crlb, width: float = 3.0, points: int = 15,
               refine: bool = True, max_evals: int = 200, cap: int = GRID_CAP) -> "EstimationGrid":
        """Grid centred on ``theta`` spanning ``+-width`` root-CRLB per parameter."""
        theta = model.check_theta(theta)
        crlb = np.asarray(crlb, dtype=float)
        if points < 1:
            raise ConfigError("points per dimension must be >= 1")
        nl = model.nonlinear_indices
        total = points ** len(nl)
        if total > cap:
            raise TooLargeError(f"estimation grid of {points}^{len(nl)} = {total} points exceeds {cap}")
        offsets = np.linspace(-width, width, points) if points > 1 else np.zeros(1)
        axes = tuple(theta[p] + offsets * math.sqrt(max(crlb[p], 0.0)) for p in nl)
        phases = theta[model.indices("phase")]
        return cls(axes, refine=refine, max_evals=max_evals, phase_ref=phases)


def _nonlinear_shape(model: SignalModel):
    return model.n_components, model.params_per_component - 2


def _concentrated(model: SignalModel, nl, pts, y):
    """Residual energy ``||y - P_B y||^2`` and amplitudes for batches of grid points.

    ``nl`` has shape ``(C, K, q)``; ``y`` is ``(T, M)``; returns ``(C, T)``
    costs (``inf`` where the waveforms are linearly dependent).
    """
    B = model.unit_waveforms(nl, pts)  # (C, M, K)
    Q, R = np.linalg.qr(B)
    rdiag = np.abs(np.diagonal(R, axis1=-2, axis2=-1))
    ok = rdiag.min(axis=-1) > 1e-10 * np.maximum(rdiag.max(axis=-1), 1e-300)
    C, M, K = Q.shape
    proj = (Q.conj().transpose(0, 2, 1).reshape(C * K, M) @ y.T).reshape(C, K, -1)
    energy = np.einsum("tm,tm->t", y.conj(), y).real
    cost = energy[None, :] - np.einsum("ckt,ckt->ct", proj.conj(), proj).real
    cost[~ok] = np.inf
    return np.maximum(cost, 0.0)


def _paired_cost(model: SignalModel, nl, pts, y):
    """Cost of trial ``t`` at its own point ``nl[t]``; returns ``(T,)``."""
    B = model.unit_waveforms(nl, pts)  # (T, M, K)
    Q, R = np.linalg.qr(B)
    rdiag = np.abs(np.diagonal(R, axis1=-2, axis2=-1))
    ok = rdiag.min(axis=-1) > 1e-10 * np.maximum(rdiag.max(axis=-1), 1e-300)
    proj = np.einsum("tmk,tm->tk", Q.conj(), y)
    cost = np.einsum("tm,tm->t", y.conj(), y).real - np.einsum("tk,tk->t", proj.conj(), proj).real
    cost = np.maximum(cost, 0.0)
    cost[~ok] = np.inf
    return cost


def _amplitudes(model: SignalModel, nl, pts, y):
    B = model.unit_waveforms(nl, pts)  # (T, M, K)
    coef = np.stack([np.linalg.lstsq(B[t], y[t], rcond=None)[0] for t in range(y.shape[0])])
    return np.abs(coef), np.angle(coef)


def _grid_search(model, search: EstimationGrid, pts, y):
    K, q = _nonlinear_shape(model)
    shape = search.shape
    total = search.size
    T, M = y.shape
    best = np.full(T, np.inf)
    arg = np.zeros(T, dtype=np.int64)
    chunk = max(1, _CHUNK_ELEMS // (K * (M + T)))
    for start in range(0, total, chunk):
        flat = np.arange(start, min(total, start + chunk))
        sub = np.unravel_index(flat, shape)
        nl = np.stack([search.values[j][sub[j]] for j in range(len(shape))], axis=-1)
        cost = _concentrated(model, _to_components(nl, K, q), pts, y)
        i = np.argmin(cost, axis=0)
        c = cost[i, np.arange(T)]
        better = c < best  # strict: the earliest grid point keeps ties
        best[better] = c[better]
        arg[better] = flat[i[better]]
    if not np.all(np.isfinite(best)):
        raise ConfigError("every estimation grid point gives linearly dependent components")
    sub = np.unravel_index(arg, shape)
    nl = np.stack([search.values[j][sub[j]] for j in range(len(shape))], axis=-1)
    return nl, best


def _to_components(nl_flat, K, q):
    """Flat non-linear vectors ``(..., K*q)`` in parameter order to ``(..., K, q)``."""
    return nl_flat.reshape(nl_flat.shape[:-1] + (K, q))


def _polish(model, search: EstimationGrid, pts, y, nl, cost):
    """Coordinate-wise three-point parabolic refinement, batched over trials."""
    K, q = _nonlinear_shape(model)
    steps = np.array([np.min(np.diff(ax)) if ax.size > 1 else 0.0 for ax in search.values])
    dims = [j for j in range(nl.shape[1]) if steps[j] > 0]
    if not dims:
        return nl, cost
    x = nl.copy()
    f0 = cost.copy()
    h = np.tile(steps, (x.shape[0], 1))
    evals = 0
    while evals + 3 <= search.max_evals:
        for j in dims:
            if evals + 3 > search.max_evals:
                break
            xm, xp = x.copy(), x.copy()
            xm[:, j] -= h[:, j]
            xp[:, j] += h[:, j]
            fm = _paired_cost(model, _to_components(xm, K, q), pts, y)
            fp = _paired_cost(model, _to_components(xp, K, q), pts, y)
            curv = fm - 2 * f0 + fp
            with np.errstate(divide="ignore", invalid="ignore"):
                delta = np.where(curv > 0, 0.5 * h[:, j] * (fm - fp) / curv, 0.0)
            delta = np.clip(np.nan_to_num(delta), -h[:, j], h[:, j])
            xc = x.copy()
            xc[:, j] += delta
            fc = _paired_cost(model, _to_components(xc, K, q), pts, y)
            evals += 3
            cand = np.stack([f0, fm, fp, fc])
            pick = np.argmin(cand, axis=0)
            x = np.where((pick == 1)[:, None], xm, x)
            x = np.where((pick == 2)[:, None], xp, x)
            x = np.where((pick == 3)[:, None], xc, x)
            f0 = cand[pick, np.arange(x.shape[0])]
            # shrink towards the parabola scale once bracketed
            h[:, j] = np.where(pick == 0, 0.5 * h[:, j], np.maximum(np.abs(delta), 0.25 * h[:, j]))
    return x, f0


def _assemble(model: SignalModel, nl, amps, phases, phase_ref):
    K, q = _nonlinear_shape(model)
    T = nl.shape[0]
    out = np.empty((T, model.n_params))
    nl3 = _to_components(nl, K, q)
    for k in range(K):
        base = k * model.params_per_component
        out[:, base] = amps[:, k]
        out[:, base + 1 : base + 1 + q] = nl3[:, k]
        ref = 0.0 if phase_ref is None else phase_ref[k]
        out[:, base + q + 1] = ref + np.angle(np.exp(1j * (phases[:, k] - ref)))
    return out


def nls_estimate(obs: Observation, model: SignalModel, search: EstimationGrid) -> np.ndarray:
    """Grid-search NLS estimate of the full parameter vector.

    Returns shape ``(P,)`` for a single record and ``(T, P)`` for a batch.
    Ties on the grid go to the lexicographically first grid point.
    """
    K, q = _nonlinear_shape(model)
    if len(search.values) != K * q:
        raise ConfigError(f"estimation grid needs {K * q} dimensions (one per non-linear parameter), "
                          f"got {len(search.values)}")
    if search.phase_ref is not None and search.phase_ref.size != K:
        raise ConfigError(f"phase reference needs {K} entries")
    y = np.atleast_2d(obs.values)
    if y.shape[1] == 0:
        raise ConfigError("empty observation")
    nl, cost = _grid_search(model, search, obs.points, y)
    if search.refine and search.max_evals > 0:
        nl, cost = _polish(model, search, obs.points, y, nl, cost)
    amps, phases = _amplitudes(model, _to_components(nl, K, q), obs.points, y)
    est = _assemble(model, nl, amps, phases, search.phase_ref)
    return est[0] if obs.values.ndim == 1 else est


def nls_cost(obs: Observation, model: SignalModel, theta) -> np.ndarray:
    """``0.5 * ||y - g(theta)||^2`` for every record in ``obs``."""
    theta = np.asarray(theta, dtype=float)
    resid = np.atleast_2d(obs.values) - model.mean(theta, obs.points)[None, :]
    cost = 0.5 * np.einsum("tm,tm->t", resid.conj(), resid).real
    return cost[0] if obs.values.ndim == 1 else cost


def rmse(estimates, truth, subset: Optional[Sequence[int]] = None) -> float:
    """``sqrt(sum_{p in subset} mean_trials (est_p - truth_p)^2)``.

    ``truth`` may be a single vector or one vector per trial.
    """
    est = np.atleast_2d(np.asarray(estimates, dtype=float))
    if est.shape[0] == 0:
        raise ConfigError("rmse needs at least one estimate")
    truth = np.asarray(truth, dtype=float)
    err = est - (truth if truth.ndim == 2 else truth[None, :])
    cols = np.arange(est.shape[1]) if subset is None else np.asarray(subset, dtype=int)
    return float(math.sqrt(np.mean(err[:, cols] ** 2, axis=0).sum()))
