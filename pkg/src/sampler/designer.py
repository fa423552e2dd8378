"""Sampling-scheme design by convex relaxation of sample selection.

Two solvers are provided.  :func:`solve_relaxed` minimises the (weighted)
trace of the inverse FIM directly over ``w``.  :func:`solve_sdp` solves the
epigraph form

    minimise    sum_p psi_p mu_p
    subject to  [F(w; theta)  e_p; e_p^T  mu_p] >= 0   for every p, theta
                F(w; theta) >= delta I,  s^T w <= gamma,  0 <= w <= 1,
                mu_p <= lambda_p,  ||W^T||_{2,1} <= gamma_1,  ||W||_{2,1} <= gamma_2

with ``F(w; theta) = sum_n w_n F(t_n; theta)``.  Each LMI is equivalent to
``mu_p >= e_p^T F^{-1} e_p``, so both are handled by a primal log-barrier
Newton method in ``(w, mu)`` space: the PSD blocks are tiny while ``N`` can
be in the thousands.
"""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy import linalg

from .errors import (
    AllSingularError,
    ConfigError,
    InfeasibleError,
    InfeasibleStartError,
    MaxIterationsError,
    SingularFimError,
    TooLargeError,
)
from .fisher import FimBank, PD_RTOL, crlb_table, is_positive_definite

__all__ = [
    "DesignProblem",
    "DesignResult",
    "TopM",
    "Cutoff",
    "threshold",
    "solve_relaxed",
    "solve_sdp",
    "reweight_iterate",
    "exhaustive_design",
    "selection_objective",
]

log = logging.getLogger(__name__)

GAP_RTOL = 1e-8
_NEWTON_TOL = 1e-10
_GROWTH = 20.0
_MAX_NEWTON = 2000


@dataclass(frozen=True)
class TopM:
    """Keep the ``M`` largest weights (ties go to the lowest index)."""

    M: int


@dataclass(frozen=True)
class Cutoff:
    """Keep every weight strictly above ``xi``."""

    xi: float


RoundingRule = Union[TopM, Cutoff]


def threshold(w, rule: RoundingRule) -> np.ndarray:
    """Round relaxed weights to a sorted array of selected indices."""
    w = np.asarray(w, dtype=float)
    if isinstance(rule, TopM):
        if rule.M > w.size or rule.M < 0:
            raise ConfigError(f"cannot select M={rule.M} of {w.size} candidates")
        order = np.argsort(-w, kind="stable")
        return np.sort(order[: rule.M])
    if isinstance(rule, Cutoff):
        return np.flatnonzero(w > rule.xi)
    raise ConfigError(f"unknown rounding rule {rule!r}")


def _stack(banks) -> np.ndarray:
    if isinstance(banks, (FimBank, np.ndarray)) and np.ndim(getattr(banks, "fims", banks)) == 3:
        banks = [banks]
    arrs = [np.asarray(b.fims if isinstance(b, FimBank) else b, dtype=float) for b in banks]
    if not arrs:
        raise ConfigError("at least one FIM bank is required")
    shape = arrs[0].shape
    if any(a.shape != shape for a in arrs) or len(shape) != 3:
        raise ConfigError("all FIM banks must share the same (N, P, P) shape")
    return np.stack(arrs)


@dataclass
class DesignProblem:
    """Inputs of a sampling design.

    ``banks`` holds one FIM bank per member of the parameter grid.  ``caps``
    uses ``inf`` (or ``None``) for uncapped parameters.  ``group_budgets``
    bounds the sum of column norms (``gamma_1``) and of row norms
    (``gamma_2``) of the weights reshaped to ``layout``.  ``budget_scale``
    multiplies ``w`` inside the budget constraint and is what reweighting
    adjusts.
    """

    banks: Sequence
    budget: float
    psi: Optional[np.ndarray] = None
    caps: Optional[np.ndarray] = None
    group_budgets: Optional[tuple] = None
    layout: Optional[tuple] = None
    budget_scale: Optional[np.ndarray] = None
    fims: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.fims = _stack(self.banks)
        L, N, P, _ = self.fims.shape
        if not self.budget > 0:
            raise ConfigError(f"budget must be positive, got {self.budget!r}")
        self.psi = np.ones(P) if self.psi is None else np.asarray(self.psi, dtype=float)
        if self.psi.shape != (P,) or np.any(self.psi < 0) or not np.any(self.psi > 0):
            raise ConfigError("psi must be a non-negative length-P vector with at least one positive entry")
        if self.caps is not None:
            caps = np.array([np.inf if c is None else c for c in self.caps], dtype=float)
            if caps.shape != (P,) or np.any(caps <= 0):
                raise ConfigError("caps must be a length-P vector of positive values (inf = no cap)")
            self.caps = caps if np.any(np.isfinite(caps)) else None
        if self.group_budgets is not None:
            g1, g2 = (np.inf if g is None else float(g) for g in self.group_budgets)
            if g1 <= 0 or g2 <= 0:
                raise ConfigError("group budgets must be positive")
            if np.isinf(g1) and np.isinf(g2):
                self.group_budgets = None
            else:
                if self.layout is None or len(self.layout) != 2 or self.layout[0] * self.layout[1] != N:
                    raise ConfigError("group budgets need a 2-D Cartesian grid layout")
                self.group_budgets = (g1, g2)
                self.layout = (int(self.layout[0]), int(self.layout[1]))
        if self.budget_scale is not None:
            self.budget_scale = np.asarray(self.budget_scale, dtype=float)
            if self.budget_scale.shape != (N,) or np.any(self.budget_scale <= 0):
                raise ConfigError("budget_scale must be a positive length-N vector")
        if self.budget > N:
            log.warning("budget %.4g exceeds the %d candidates; the budget constraint is vacuous", self.budget, N)

    @property
    def vacuous_budget(self) -> bool:
        return self.budget >= self.n_candidates

    @property
    def n_candidates(self) -> int:
        return self.fims.shape[1]

    @property
    def n_params(self) -> int:
        return self.fims.shape[2]

    @property
    def n_thetas(self) -> int:
        return self.fims.shape[0]


@dataclass
class DesignResult:
    w: np.ndarray
    mu: np.ndarray
    selected: np.ndarray
    objective: float
    solver_info: dict = field(default_factory=dict)


# --------------------------------------------------------------------------
# shared numerics


def _scaling(fims: np.ndarray) -> np.ndarray:
    """Diagonal similarity ``d`` making the median per-sample diagonal ~1."""
    diag = np.diagonal(fims, axis1=-2, axis2=-1).reshape(-1, fims.shape[-1])
    med = np.median(diag, axis=0)
    tiny = 1e-300 + 1e-14 * max(float(np.max(diag)), 0.0)
    med = np.where(med > tiny, med, np.maximum(diag.mean(axis=0), tiny))
    return 1.0 / np.sqrt(med)


def _chol(mat):
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        return None


def _tri_inv(lower):
    return linalg.solve_triangular(lower, np.eye(lower.shape[0]), lower=True)


def _dense(diag, U):
    hess = U @ U.T
    hess[np.diag_indices(hess.shape[0])] += diag
    return hess


def _newton_direction(diag, U, grad):
    """Solve ``(diag(diag) + U U^T) dx = -grad``.

    Uses the Woodbury identity when the diagonal is positive and the factor
    is thin, refining the result against the exact operator; otherwise a
    dense Cholesky with a growing ridge.
    """
    n, k = U.shape
    rhs = -grad
    if np.all(diag > 0) and 2 * k < n:
        dinv = 1 / diag
        DU = U * dinv[:, None]
        cap = np.eye(k) + U.T @ DU
        try:
            factor = linalg.cho_factor(cap, lower=True, check_finite=False)
        except linalg.LinAlgError:
            factor = None
        if factor is not None:
            def solve(b):
                return dinv * b - DU @ linalg.cho_solve(factor, DU.T @ b, check_finite=False)

            dx = solve(rhs)
            for _ in range(2):
                resid = rhs - (diag * dx + U @ (U.T @ dx))
                dx = dx + solve(resid)
            return dx
    hess = _dense(diag, U)
    scale = max(float(np.max(np.abs(np.diag(hess)))), 1e-300)
    ridge = 0.0
    for _ in range(12):
        try:
            factor = linalg.cho_factor(hess + ridge * np.eye(n), lower=True, check_finite=False)
            return linalg.cho_solve(factor, rhs, check_finite=False)
        except linalg.LinAlgError:
            ridge = scale * 1e-14 if ridge == 0 else 100 * ridge
    raise np.linalg.LinAlgError("barrier Hessian is not positive definite")


def _barrier_minimize(oracle, x0, nu, t0, objective, *, gap_rtol=GAP_RTOL, growth=_GROWTH,
                      max_newton=_MAX_NEWTON, stop=None):
    """Sequential unconstrained minimisation with damped Newton centering.

    ``oracle(x, t)`` returns the barrier value (``inf`` outside the domain)
    and ``oracle(x, t, derivs=True)`` returns ``(value, grad, (diag, U))``
    with the Hessian equal to ``diag(diag) + U U^T``.
    ``stop(x, t, centered)`` may end the run early by returning a truthy
    value, which is passed back as the status.
    """
    x = np.array(x0, dtype=float)
    t = float(t0)
    newton = outer = 0
    lam2 = np.inf
    status = "optimal"
    while True:
        outer += 1
        for _ in range(100):
            val, g, (diag, U) = oracle(x, t, derivs=True)
            dx = _newton_direction(diag, U, g)
            lam2 = float(-g @ dx)
            if lam2 / 2 <= _NEWTON_TOL:
                break
            slope = float(g @ dx)
            step = 1.0
            accepted = False
            while step > 1e-12:
                trial = x + step * dx
                vt = oracle(trial, t)
                if np.isfinite(vt) and vt <= val + 0.25 * step * slope + 1e-13 * abs(val):
                    accepted = True
                    break
                step *= 0.5
            newton += 1
            if newton > max_newton:
                raise MaxIterationsError(f"barrier method exceeded {max_newton} Newton steps")
            if not accepted:
                # no descent at working precision; only trust a small decrement
                if lam2 / 2 > 1e-6:
                    status = "inaccurate"
                break
            x = trial
            if stop is not None:
                flag = stop(x, t, False)
                if flag:
                    return x, dict(newton_steps=newton, outer_iterations=outer, t=t,
                                   gap=nu / t, newton_decrement=lam2, status=flag)
        if stop is not None:
            flag = stop(x, t, True)
            if flag:
                status = flag
                break
        obj = objective(x)
        if nu / t <= gap_rtol * max(abs(obj), 1e-300):
            break
        t *= growth
    return x, dict(newton_steps=newton, outer_iterations=outer, t=t, gap=nu / t,
                   newton_decrement=lam2, status=status)


def _initial_weights(problem: DesignProblem, frac: float = 0.9) -> np.ndarray:
    N = problem.n_candidates
    s = np.ones(N) if problem.budget_scale is None else problem.budget_scale
    level = min(0.5, frac * problem.budget / s.sum())
    if problem.group_budgets is not None:
        n1, n2 = problem.layout
        g1, g2 = problem.group_budgets
        level = min(level, frac * g1 / (n2 * math.sqrt(n1)), frac * g2 / (n1 * math.sqrt(n2)))
    return np.full(N, level)


def _frank_wolfe_gap(grad, w, budget, scale=None) -> float:
    """Linearised suboptimality bound over ``{0 <= w <= 1, s^T w <= budget}``."""
    s = np.ones_like(w) if scale is None else scale
    ratio = grad / s
    order = np.argsort(ratio)
    remaining = budget
    best = 0.0
    for n in order:
        if ratio[n] >= 0 or remaining <= 0:
            break
        take = min(1.0, remaining / s[n])
        best += grad[n] * take
        remaining -= take * s[n]
    return float(grad @ w - best)


# --------------------------------------------------------------------------
# direct solve of the trace objective


class _TraceBarrier:
    def __init__(self, fims, psi, budget, scale):
        self.F = fims  # (N, P, P), already scaled
        self.psi = psi
        self.budget = budget
        self.s = scale
        self.N, self.P = fims.shape[0], fims.shape[1]

    def objective(self, w):
        chol = _chol(np.tensordot(w, self.F, axes=1))
        if chol is None:
            return np.inf
        inv = _tri_inv(chol)
        return float(self.psi @ np.einsum("ij,ij->j", inv, inv))

    def __call__(self, w, t, derivs=False):
        slack = self.budget - self.s @ w
        if np.any(w <= 0) or np.any(w >= 1) or slack <= 0:
            return np.inf
        fw = np.tensordot(w, self.F, axes=1)
        chol = _chol(fw)
        if chol is None:
            return np.inf
        linv = _tri_inv(chol)
        cinv = linv.T @ linv
        f = float(self.psi @ np.diag(cinv))
        val = t * f - np.log(w).sum() - np.log1p(-w).sum() - np.log(slack)
        if not derivs:
            return val
        act = np.flatnonzero(self.psi > 0)
        V = cinv[:, act]  # (P, A)
        U = np.einsum("nij,ja->nai", self.F, V)  # F_n v_a
        q = np.einsum("nai,ia->na", U, V)
        Y = np.einsum("nai,ki->nak", U, linv) * np.sqrt(2 * t * self.psi[act])[None, :, None]
        Y = Y.reshape(self.N, -1)
        grad = -t * (q @ self.psi[act]) - 1 / w + 1 / (1 - w) + self.s / slack
        diag = 1 / w**2 + 1 / (1 - w) ** 2
        U = np.column_stack([Y, self.s / slack])
        return val, grad, (diag, U)

    def gradient(self, w):
        fw = np.tensordot(w, self.F, axes=1)
        cinv = np.linalg.inv(fw)
        V = cinv * np.sqrt(self.psi)[None, :]
        return -np.einsum("nij,ia,ja->n", self.F, V, V)


def solve_relaxed(problem: DesignProblem, rule: Optional[RoundingRule] = None,
                  gap_rtol: float = GAP_RTOL) -> DesignResult:
    """Minimise ``sum_p psi_p [F(w)^{-1}]_pp`` over the box and budget.

    Only single-theta problems without caps or group budgets are accepted;
    use :func:`solve_sdp` for the general problem.
    """
    if problem.n_thetas != 1:
        raise ConfigError("solve_relaxed handles a single parameter vector; use solve_sdp for a grid")
    if problem.caps is not None or problem.group_budgets is not None:
        raise ConfigError("solve_relaxed does not support caps or group budgets")
    if np.any(problem.psi <= 0):
        raise ConfigError("solve_relaxed needs strictly positive psi; use solve_sdp to drop parameters")
    start = time.perf_counter()
    fims = problem.fims[0]
    d = _scaling(problem.fims)
    Fs = fims * d[None, :, None] * d[None, None, :]
    psi_s = problem.psi * d**2
    scale = np.ones(problem.n_candidates) if problem.budget_scale is None else problem.budget_scale
    barrier = _TraceBarrier(Fs, psi_s, problem.budget, scale)
    w0 = _initial_weights(problem)
    f0 = barrier.objective(w0)
    if not np.isfinite(f0) or not is_positive_definite(np.tensordot(w0, Fs, axes=1)):
        raise InfeasibleStartError("aggregate FIM at the uniform start is singular; too few informative candidates")
    nu = 2 * problem.n_candidates + 1
    w, info = _barrier_minimize(barrier, w0, nu, nu / f0, barrier.objective, gap_rtol=gap_rtol)
    f = barrier.objective(w)
    fw_gap = _frank_wolfe_gap(barrier.gradient(w), w, problem.budget, scale)
    table = crlb_table(w, [fims])
    mu = table.max(axis=0)
    rule = rule or TopM(min(int(math.floor(problem.budget)), problem.n_candidates))
    info.update(iterations=info["newton_steps"], kkt_residual=fw_gap / f, relative_gap=info["gap"] / f,
                method="trace-barrier", seconds=time.perf_counter() - start)
    return DesignResult(w=w, mu=mu, selected=threshold(w, rule), objective=float(problem.psi @ mu),
                        solver_info=info)


# --------------------------------------------------------------------------
# epigraph (LMI) form


class _EpigraphBarrier:
    """Barrier for the epigraph problem in ``x = [w, mu, (tau), r]``."""

    def __init__(self, Fs, active, psi_s, caps_s, budget, scale, delta, groups, group_budgets, phase1):
        self.F = Fs  # (L, N, P, P)
        self.L, self.N, self.P = Fs.shape[0], Fs.shape[1], Fs.shape[2]
        self.active = active
        self.A = len(active)
        self.psi = psi_s
        self.caps = caps_s  # (A,), inf when uncapped
        self.capped = np.flatnonzero(np.isfinite(caps_s))
        self.budget = budget
        self.s = scale
        self.delta = delta
        self.groups = groups  # list of (index arrays, budget slot)
        self.group_budgets = group_budgets
        self.phase1 = phase1
        self.i_mu = self.N
        self.i_tau = self.N + self.A
        self.i_r = self.i_tau + (1 if phase1 else 0)
        self.G = len(groups)
        self.n = self.i_r + self.G
        rest = (1 + self.L * (self.P + self.A * (self.P + 1)) + len(self.capped)
                + 2 * self.G + sum(1 for g in group_budgets if np.isfinite(g)))
        # box terms weighted so they do not swamp the LMI barriers for large N
        self.kappa = min(1.0, rest / (2 * self.N))
        self.nu = rest + 2 * self.kappa * self.N

    def split(self, x):
        w = x[: self.N]
        mu = x[self.i_mu : self.i_mu + self.A]
        tau = x[self.i_tau] if self.phase1 else None
        r = x[self.i_r :]
        return w, mu, tau, r

    def objective(self, x):
        w, mu, tau, _ = self.split(x)
        return float(tau) if self.phase1 else float(self.psi @ mu)

    def _affine(self, x):
        """Rows ``(a, b)`` of the affine constraints ``a^T x < b`` beyond the box."""
        rows = []
        a = np.zeros(self.n)
        a[: self.N] = self.s
        rows.append((a, self.budget))
        for j in self.capped:
            a = np.zeros(self.n)
            a[self.i_mu + j] = 1.0
            if self.phase1:
                a[self.i_tau] = -self.caps[j]
                rows.append((a, 0.0))
            else:
                rows.append((a, self.caps[j]))
        for slot, gb in enumerate(self.group_budgets):
            if np.isfinite(gb):
                a = np.zeros(self.n)
                for j, (_, gslot) in enumerate(self.groups):
                    if gslot == slot:
                        a[self.i_r + j] = 1.0
                rows.append((a, gb))
        return rows

    def crlbs(self, w):
        """Scaled CRLB diagonal for every theta, ``inf`` rows if singular."""
        out = np.full((self.L, self.P), np.inf)
        for l in range(self.L):
            chol = _chol(np.tensordot(w, self.F[l], axes=1))
            if chol is not None:
                inv = _tri_inv(chol)
                out[l] = np.einsum("ij,ij->j", inv, inv)
        return out

    def __call__(self, x, t, derivs=False):
        w, mu, tau, r = self.split(x)
        if np.any(w <= 0) or np.any(w >= 1):
            return np.inf
        rows = self._affine(x)
        slacks = np.array([b - a @ x for a, b in rows])
        if np.any(slacks <= 0):
            return np.inf
        val = t * self.objective(x) - self.kappa * (np.log(w).sum() + np.log1p(-w).sum()) - np.log(slacks).sum()
        soc = []
        for j, (idx, _) in enumerate(self.groups):
            xs = w[idx]
            dj = r[j] ** 2 - xs @ xs
            if dj <= 0 or r[j] <= 0:
                return np.inf
            soc.append(dj)
            val -= np.log(dj)
        per_theta = []
        eye = np.eye(self.P)
        for l in range(self.L):
            fw = np.tensordot(w, self.F[l], axes=1)
            ls = _chol(fw - self.delta * eye)
            lf = _chol(fw)
            if ls is None or lf is None:
                return np.inf
            linv_f = _tri_inv(lf)
            cinv = linv_f.T @ linv_f
            h = mu - np.diag(cinv)[self.active]
            if np.any(h <= 0):
                return np.inf
            # exact LMI barriers: -log det F - log(mu_p - c_p) for every active p
            val -= 2 * np.log(np.diag(ls)).sum() + 2 * self.A * np.log(np.diag(lf)).sum() + np.log(h).sum()
            per_theta.append((ls, linv_f, cinv, h))
        if not derivs:
            return val

        n, N = self.n, self.N
        grad = np.zeros(n)
        diag = np.zeros(n)
        lowrank = []  # columns u with H += u u^T
        blocks = []  # (N, k) factors of the w-w block
        if self.phase1:
            grad[self.i_tau] += t
        else:
            grad[self.i_mu : self.i_mu + self.A] += t * self.psi
        grad[:N] += self.kappa * (-1 / w + 1 / (1 - w))
        diag[:N] += self.kappa * (1 / w**2 + 1 / (1 - w) ** 2)
        for (a, _), sl in zip(rows, slacks):
            grad += a / sl
            lowrank.append(a / sl)
        for j, (idx, _) in enumerate(self.groups):
            dj = soc[j]
            xs = w[idx]
            grad[idx] += 2 * xs / dj
            grad[self.i_r + j] -= 2 * r[j] / dj
            diag[idx] += 2 / dj
            diag[self.i_r + j] -= 2 / dj
            u = np.zeros(n)
            u[idx] = 2 * xs / dj
            u[self.i_r + j] = -2 * r[j] / dj
            lowrank.append(u)
        for l, (ls, linv_f, cinv, h) in enumerate(per_theta):
            Fl = self.F[l]
            linv_s = _tri_inv(ls)
            M = np.einsum("ij,njk,lk->nil", linv_s, Fl, linv_s)
            grad[:N] -= np.einsum("nii->n", M)
            blocks.append(M.reshape(N, -1))
            Mf = np.einsum("ij,njk,lk->nil", linv_f, Fl, linv_f)
            grad[:N] -= self.A * np.einsum("nii->n", Mf)
            blocks.append(np.sqrt(self.A) * Mf.reshape(N, -1))
            V = cinv[:, self.active]
            U = np.einsum("nij,ja->nai", Fl, V)
            q = np.einsum("nai,ia->na", U, V)
            Y = np.einsum("nai,ki->nak", U, linv_f) * np.sqrt(2 / h)[None, :, None]
            blocks.append(Y.reshape(N, -1))
            grad[:N] -= q @ (1 / h)
            grad[self.i_mu : self.i_mu + self.A] -= 1 / h
            R = np.zeros((n, self.A))
            R[:N] = q / h
            R[self.i_mu + np.arange(self.A), np.arange(self.A)] = 1 / h
            lowrank.append(R)
        Z = np.concatenate(blocks, axis=1)
        U = np.zeros((n, Z.shape[1]))
        U[:N] = Z
        U = np.column_stack([U] + lowrank)
        return val, grad, (diag, U)


def _build_groups(problem: DesignProblem):
    if problem.group_budgets is None:
        return [], (np.inf, np.inf)
    n1, n2 = problem.layout
    idx = np.arange(problem.n_candidates).reshape(n1, n2)
    groups = [(idx[:, j], 0) for j in range(n2)]  # columns of W -> gamma_1
    groups += [(idx[i, :], 1) for i in range(n1)]  # rows of W -> gamma_2
    return groups, problem.group_budgets


def _initial_r(w, groups, group_budgets):
    norms = np.array([np.linalg.norm(w[idx]) for idx, _ in groups])
    r = norms.copy()
    for slot, gb in enumerate(group_budgets):
        members = [j for j, (_, s) in enumerate(groups) if s == slot]
        if not members:
            continue
        room = (gb - norms[members].sum()) if np.isfinite(gb) else norms[members].sum() + len(members)
        if room <= 0:
            raise InfeasibleError("group budgets leave no strictly feasible start")
        r[members] += 0.5 * room / len(members)
    return r


def solve_sdp(problem: DesignProblem, rule: Optional[RoundingRule] = None, w0=None,
              gap_rtol: float = GAP_RTOL) -> DesignResult:
    """Solve the weighted, worst-case design problem with all constraint options."""
    start = time.perf_counter()
    L, N, P, _ = problem.fims.shape
    d = _scaling(problem.fims)
    Fs = problem.fims * d[None, None, :, None] * d[None, None, None, :]
    caps = np.full(P, np.inf) if problem.caps is None else problem.caps
    active = np.flatnonzero((problem.psi > 0) | np.isfinite(caps))
    psi_s = (problem.psi * d**2)[active]
    caps_s = (caps / d**2)[active]
    delta = 1e-9 * float(np.mean(np.trace(Fs, axis1=-2, axis2=-1)))
    scale = np.ones(N) if problem.budget_scale is None else problem.budget_scale
    groups, gbud = _build_groups(problem)

    w_init = _initial_weights(problem) if w0 is None else np.asarray(w0, dtype=float)
    probe = _EpigraphBarrier(Fs, active, psi_s, caps_s, problem.budget, scale, delta, groups, gbud, False)
    c0 = probe.crlbs(w_init)
    if not np.all(np.isfinite(c0)):
        bad = int(np.flatnonzero(~np.all(np.isfinite(c0), axis=1))[0])
        raise SingularFimError("aggregate FIM is singular at the starting point", theta_index=bad)
    for l in range(L):
        agg = np.tensordot(w_init, Fs[l], axes=1)
        if not is_positive_definite(agg) or np.linalg.eigvalsh(agg)[0] <= delta:
            raise SingularFimError("aggregate FIM is singular at the starting point", theta_index=l)
    r_init = _initial_r(w_init, groups, gbud)
    cmax = c0[:, active].max(axis=0)
    info_phase1 = None

    mu_init = 2 * cmax
    if np.any(np.isfinite(caps_s)) and np.any(mu_init >= caps_s):
        mu_init = np.where(np.isfinite(caps_s), np.minimum(mu_init, 0.5 * (cmax + caps_s)), mu_init)
        if np.any(cmax >= caps_s):
            # phase I: minimise tau subject to mu_p <= tau * lambda_p
            ph1 = _EpigraphBarrier(Fs, active, psi_s, caps_s, problem.budget, scale, delta, groups, gbud, True)
            mu1 = 2 * cmax
            tau1 = 2 * float(np.max(mu1[np.isfinite(caps_s)] / caps_s[np.isfinite(caps_s)]))
            x1 = np.concatenate([w_init, mu1, [tau1], r_init])

            def stop(x, t, centered):
                tau = x[ph1.i_tau]
                if tau < 1 - 1e-9:
                    return "feasible"
                if centered and tau - ph1.nu / t > 1:
                    return "infeasible"
                return None

            x1, info_phase1 = _barrier_minimize(ph1, x1, ph1.nu, ph1.nu / tau1, ph1.objective,
                                                gap_rtol=1e-9, stop=stop)
            if info_phase1["status"] != "feasible":
                tau = float(x1[ph1.i_tau])
                lower = tau - ph1.nu / info_phase1["t"]
                cert = dict(min_cap_ratio=tau, min_cap_ratio_lower_bound=lower,
                            capped_params=[int(active[j]) for j in ph1.capped])
                raise InfeasibleError(
                    f"caps unattainable within budget {problem.budget:g}: the smallest achievable "
                    f"max_p mu_p/lambda_p is {tau:.6g} (certified >= {lower:.6g})", certificate=cert)
            w_init = x1[:N]
            mu_init = x1[ph1.i_mu : ph1.i_mu + len(active)]
            r_init = x1[ph1.i_r :]

    barrier = _EpigraphBarrier(Fs, active, psi_s, caps_s, problem.budget, scale, delta, groups, gbud, False)
    x0 = np.concatenate([w_init, mu_init, r_init])
    if not np.isfinite(barrier(x0, 1.0)):
        raise InfeasibleError("no strictly feasible starting point")
    obj0 = barrier.objective(x0)
    x, info = _barrier_minimize(barrier, x0, barrier.nu, barrier.nu / obj0, barrier.objective,
                                gap_rtol=gap_rtol)
    w, mu_s, _, _ = barrier.split(x)
    table = crlb_table(w, problem.fims)
    mu = table.max(axis=0)
    mu[active] = mu_s * d[active] ** 2
    objective = float(problem.psi @ mu)
    info.update(iterations=info["newton_steps"], relative_gap=info["gap"] / max(barrier.objective(x), 1e-300),
                kkt_residual=info["newton_decrement"], method="epigraph-barrier",
                seconds=time.perf_counter() - start, vacuous_budget=problem.vacuous_budget)
    if info_phase1 is not None:
        info["phase1_newton_steps"] = info_phase1["newton_steps"]
    rule = rule or TopM(min(int(math.floor(problem.budget)), N))
    return DesignResult(w=w, mu=mu, selected=threshold(w, rule), objective=objective, solver_info=info)


def reweight_iterate(problem: DesignProblem, max_iter: int = 10, epsilon: float = 1e-6, tol: float = 1e-3,
                     rule: Optional[RoundingRule] = None) -> DesignResult:
    """Repeat :func:`solve_sdp`, rescaling the budget by ``1 / (w_prev + epsilon)``."""
    if max_iter < 1:
        raise ConfigError("max_iter must be >= 1")
    result = None
    w_prev = None
    change = np.inf
    it = 0
    for it in range(1, max_iter + 1):
        kwargs = {}
        if w_prev is not None:
            s = 1 / (w_prev + epsilon)
            sub = DesignProblem(problem.fims, problem.budget, problem.psi, problem.caps,
                                problem.group_budgets, problem.layout, s)
            load = s @ w_prev
            kwargs["w0"] = np.clip(w_prev * min(0.9, 0.9 * problem.budget / load), 1e-12, 1 - 1e-9)
        else:
            sub = problem
        try:
            result = solve_sdp(sub, rule=rule, **kwargs)
        except Exception as exc:
            exc.args = (f"reweighting iteration {it}: {exc.args[0] if exc.args else exc}",) + exc.args[1:]
            raise
        if w_prev is not None:
            change = float(np.max(np.abs(result.w - w_prev)))
            if change < tol:
                w_prev = result.w
                break
        w_prev = result.w
    result.solver_info.update(reweight_iterations=it, reweight_change=change)
    return result


def selection_objective(fims, selected, psi) -> float:
    """Worst-case ``sum_p psi_p CRLB_p`` of a binary selection over the grid."""
    stack = _stack(fims)
    w = np.zeros(stack.shape[1])
    w[np.asarray(selected, dtype=int)] = 1.0
    return float(np.asarray(psi) @ crlb_table(w, stack).max(axis=0))


def _batched_objective(stack, subsets, psi):
    """Worst-case objective per subset, ``inf`` where any theta is singular."""
    worst = np.full((len(subsets), stack.shape[2]), -np.inf)
    for l in range(stack.shape[0]):
        agg = stack[l][subsets].sum(axis=1)  # (C, P, P)
        agg = 0.5 * (agg + np.swapaxes(agg, 1, 2))
        diag = np.diagonal(agg, axis1=1, axis2=2)
        ok = np.all(diag > 0, axis=1)
        s = 1 / np.sqrt(np.where(ok[:, None], diag, 1.0))
        ev = np.linalg.eigvalsh(agg * s[:, :, None] * s[:, None, :])
        ok &= ev[:, 0] > PD_RTOL * agg.shape[1]
        worst[~ok] = np.inf
        if np.any(ok):
            crl = np.diagonal(np.linalg.inv(agg[ok]), axis1=1, axis2=2)
            worst[ok] = np.maximum(worst[ok], crl)
    out = worst @ psi
    out[~np.isfinite(out)] = np.inf
    return out


def exhaustive_design(banks, M: int, psi=None, limit: int = 10**6, chunk: int = 20000):
    """Enumerate every ``M``-subset; return the best ``(indices, objective)``.

    Subsets with a singular FIM for any grid member are skipped; the first
    enumerated subset wins ties.
    """
    stack = _stack(banks)
    N, P = stack.shape[1], stack.shape[2]
    psi = np.ones(P) if psi is None else np.asarray(psi, dtype=float)
    if not 0 < M <= N:
        raise ConfigError(f"M must lie in 1..{N}, got {M}")
    total = math.comb(N, M)
    if total > limit:
        raise TooLargeError(f"C({N}, {M}) = {total} subsets exceeds the guard of {limit}")
    best_val = np.inf
    best = None
    combos = itertools.combinations(range(N), M)
    while True:
        block = np.array(list(itertools.islice(combos, chunk)), dtype=int)
        if block.size == 0:
            break
        vals = _batched_objective(stack, block, psi)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val, best = float(vals[i]), block[i]
    if best is None:
        raise AllSingularError(f"every {M}-subset of {N} candidates gives a singular FIM")
    return best, best_val
