"""Scenario presets, sweeps, baselines and tabular reports.

A :class:`Scenario` is built from a JSON-compatible config dict (the same
document the command line reads).  :func:`run_scenario` designs a scheme for
every sweep point, evaluates exact bounds at the selected samples and
optionally runs Monte Carlo NLS estimation and the random and uniform
baselines.
"""

from __future__ import annotations

import copy
import csv
import io
import logging
import math
import time
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .designer import (
    Cutoff,
    DesignProblem,
    DesignResult,
    TopM,
    _batched_objective,
    _stack,
    reweight_iterate,
    solve_sdp,
)
from .errors import AllSingularError, ConfigError, SamplerError, SingularFimError, TooLargeError
from .estimation import GRID_CAP, EstimationGrid, nls_estimate, rmse, simulate_trials
from .fisher import ParamGrid, build_banks, crlb_table
from .models import CandidateGrid, NoiseSpec, SignalModel

__all__ = [
    "Scenario",
    "Report",
    "BaselineResult",
    "PRESETS",
    "preset_config",
    "random_baseline",
    "uniform_decimation",
    "run_scenario",
    "crlb_rmse_curve",
    "compare_methods",
    "clusters",
]

log = logging.getLogger(__name__)

PI = math.pi

# Built-in scenarios.  Assumed values are marked "placeholder" in the notes
# of each preset.
PRESETS = {
    "fig1": {
        "name": "fig1",
        "notes": "single damped sinusoid, N=50, gamma=13, beta in {1/10, 1/20}; "
                 "alpha=1, f=0.2, phi=0.5 and sigma2=0.1 are placeholders",
        "model": {"kind": "damped_1d", "K": 1},
        "theta": [1.0, 0.2, 0.1, 0.5],
        "grid": {"dims": 1, "sizes": [50], "start": 1},
        "noise": {"variance": 0.1},
        "design": {"gamma": 13},
        "eval": {"seed": 1},
    },
    "fig2": {
        "name": "fig2",
        "notes": "two linear chirps, gamma in {15, 20, 25}; N=100 and sigma2=1 are placeholders",
        "model": {"kind": "chirp_1d", "K": 2},
        "theta": [5.0, 0.1, 0.01, PI / 2, 5.0, 0.5, -0.003, PI / 3],
        "grid": {"dims": 1, "sizes": [100], "start": 1},
        "noise": {"variance": 1.0},
        "design": {"gamma_sweep": [15, 20, 25]},
        "eval": {"seed": 2},
    },
    "fig3": {
        "name": "fig3",
        "notes": "design vs best of 1e4 random schemes (reduced from 1e6 for runtime), M=5..25; "
                 "alpha=1, f=0.2, beta=0.05, phi=0.5, sigma2=0.1 are placeholders",
        "model": {"kind": "damped_1d", "K": 1},
        "theta": [1.0, 0.2, 0.05, 0.5],
        "grid": {"dims": 1, "sizes": [50], "start": 1},
        "noise": {"variance": 0.1},
        "design": {"gamma_sweep": [5, 8, 10, 12, 15, 18, 20, 22, 25]},
        "eval": {"seed": 3, "baseline_trials": 10000, "uniform": True},
    },
    "fig4": {
        "name": "fig4",
        "notes": "2-D damped sinusoid on 50x50, design vs best of 1e4 random schemes (reduced from 1e7 for runtime)",
        "model": {"kind": "damped_2d", "K": 1},
        "theta": [1.0, 0.2, 0.5, 1 / 20, 1 / 10, 0.5],
        "grid": {"dims": 2, "sizes": [50, 50], "start": 1},
        "noise": {"variance": 0.1},
        "design": {"gamma_sweep": [20, 35, 50]},
        "eval": {"seed": 4, "baseline_trials": 10000, "uniform": True},
    },
    "fig5_6": {
        "name": "fig5_6",
        "notes": "two damped sinusoids, weighted (frequency and damping only) vs unweighted, "
                 "500 Monte Carlo trials",
        "model": {"kind": "damped_1d", "K": 2},
        "theta": [1.0, 0.2, 1 / 12, 0.5, 1.0, 0.65, 1 / 20, PI / 5],
        "grid": {"dims": 1, "sizes": [50], "start": 1},
        "noise": {"variance": 0.01},
        "design": {
            "gamma_sweep": [20, 30, 40],
            "weightings": {
                "unweighted": [1, 1, 1, 1, 1, 1, 1, 1],
                "weighted": [0, 1, 1, 0, 0, 1, 1, 0],
            },
        },
        "eval": {"seed": 5, "trials": 500,
                 "estimation_grid": {"width": 3.0, "points": 15, "refine": True, "max_evals": 200}},
    },
    "fig7_8": {
        "name": "fig7_8",
        "notes": "worst case over a 10-point damping grid on [0.1, 0.1198]; off-grid dampings for "
                 "evaluation; 500 trials (reduced from 5000 for runtime); f=0.25 is a placeholder",
        "model": {"kind": "damped_1d", "K": 1},
        "theta": [1.0, 0.25, 0.1, 0.5],
        "theta_grid": {"param": 2, "lower": 0.1, "delta": 0.022, "count": 10},
        "grid": {"dims": 1, "sizes": [50], "start": 1},
        "noise": {"variance": 0.1},
        "design": {"gamma_sweep": [30, 35, 40]},
        "eval": {"seed": 7, "trials": 500,
                 "estimation_grid": {"width": 4.0, "points": 31, "refine": True, "max_evals": 200}},
    },
    "fig9_12": {
        "name": "fig9_12",
        "notes": "two 2-D damped sinusoids, weighted vs unweighted; both dimensions share "
                 "the same (f, beta) pairs; "
                 "25x25 candidates, 100 trials and a 3-point search grid are desk-scale choices",
        "model": {"kind": "damped_2d", "K": 2},
        "theta": [1.0, 0.1, 0.1, 0.1, 0.1, PI / 3, 1.3, 0.2, 0.2, 0.1, 0.1, PI / 3],
        "grid": {"dims": 2, "sizes": [25, 25], "start": 1},
        "noise": {"variance": 0.01},
        "design": {
            "gamma_sweep": [30, 45, 60],
            "weightings": {
                "unweighted": [1] * 12,
                "weighted": [0, 1, 1, 1, 1, 0, 0, 1, 1, 1, 1, 0],
            },
        },
        "eval": {"seed": 9, "trials": 100,
                 "estimation_grid": {"width": 3.0, "points": 3, "refine": True, "max_evals": 200}},
    },
    "weighting2d": {
        "name": "weighting2d",
        "notes": "2-D damped sinusoid on 50x50, gamma=50, all parameters vs frequency and damping only",
        "model": {"kind": "damped_2d", "K": 1},
        "theta": [1.0, 0.2, 0.5, 1 / 20, 1 / 10, 0.5],
        "grid": {"dims": 2, "sizes": [50, 50], "start": 1},
        "noise": {"variance": 0.1},
        "design": {
            "gamma": 50,
            "weightings": {"unweighted": [1, 1, 1, 1, 1, 1], "weighted": [0, 1, 1, 1, 1, 0]},
        },
        "eval": {"seed": 10},
    },
}


def preset_config(name: str, beta: Optional[float] = None) -> dict:
    """Deep copy of a preset config; ``beta`` overrides every damping parameter."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}")
    cfg = copy.deepcopy(PRESETS[name])
    if beta is not None:
        model = SignalModel(cfg["model"]["kind"], cfg["model"].get("K", 1))
        damp = model.indices("damping")
        if not damp:
            raise ConfigError(f"preset {name!r} has no damping parameter to override")
        for p in damp:
            cfg["theta"][p] = float(beta)
        cfg["name"] = f"{name}_beta{beta:g}"
    return cfg


def _default_subsets(model: SignalModel) -> dict:
    out = {}
    for role, short in (("amplitude", "amp"), ("frequency", "freq"), ("damping", "damp"), ("phase", "phase")):
        idx = model.indices(role)
        if idx:
            out[short] = idx
    if model.dim == 2:
        for role, short in (("frequency", "freq"), ("damping", "damp")):
            for axis in (1, 2):
                out[f"{short}_t{axis}"] = model.indices(role, axis)
    out["freqdamp"] = sorted(model.indices("frequency") + model.indices("damping"))
    return out


@dataclass
class Scenario:
    """Everything needed to reproduce one experiment."""

    name: str
    model: SignalModel
    theta: np.ndarray
    grid: CandidateGrid
    noise: NoiseSpec
    budgets: tuple
    weightings: dict
    theta_grid: Optional[dict] = None
    caps: Optional[np.ndarray] = None
    group_budgets: Optional[tuple] = None
    reweight: Optional[dict] = None
    rounding: dict = field(default_factory=lambda: {"rule": "topm"})
    trials: int = 0
    seed: int = 0
    baseline_trials: int = 0
    uniform: bool = False
    estimation: Optional[dict] = None
    subsets: Optional[dict] = None
    notes: str = ""

    def __post_init__(self):
        self.theta = self.model.check_theta(self.theta)
        if self.grid.dim != self.model.dim:
            raise ConfigError(f"{self.model.kind.value} needs a {self.model.dim}-D candidate grid")
        if not self.budgets:
            raise ConfigError("the budget sweep is empty")
        if not self.weightings:
            raise ConfigError("at least one weighting is required")
        P = self.model.n_params
        for label, psi in self.weightings.items():
            if np.asarray(psi).shape != (P,):
                raise ConfigError(f"weighting {label!r} needs {P} entries")
        if self.trials < 0 or self.baseline_trials < 0:
            raise ConfigError("trial counts must be non-negative")
        self.subsets = _default_subsets(self.model) if self.subsets is None else dict(self.subsets)
        for label, idx in self.subsets.items():
            if not idx or min(idx) < 0 or max(idx) >= P:
                raise ConfigError(f"subset {label!r} has indices outside 0..{P - 1}")

    # ------------------------------------------------------------------
    @classmethod
    def from_config(cls, cfg: dict) -> "Scenario":
        model = SignalModel(cfg["model"]["kind"], cfg["model"].get("K", 1))
        g = cfg["grid"]
        sizes = g["sizes"]
        if len(sizes) != g.get("dims", len(sizes)):
            raise ConfigError("grid.dims must equal the number of grid sizes")
        grid = CandidateGrid.uniform(sizes, start=g.get("start", 0.0))
        d = cfg.get("design", {})
        if ("gamma" in d) == ("gamma_sweep" in d):
            raise ConfigError("design needs exactly one of gamma or gamma_sweep")
        budgets = tuple(float(x) for x in (d["gamma_sweep"] if "gamma_sweep" in d else [d["gamma"]]))
        if "weightings" in d and "psi" in d:
            raise ConfigError("give either design.psi or design.weightings, not both")
        if "weightings" in d:
            weightings = {k: np.asarray(v, dtype=float) for k, v in d["weightings"].items()}
        else:
            psi = d.get("psi")
            weightings = {"design": np.ones(model.n_params) if psi is None else np.asarray(psi, dtype=float)}
        caps = d.get("caps")
        if caps is not None:
            caps = np.array([np.inf if c is None else c for c in caps], dtype=float)
        gb = d.get("group_budgets")
        if gb is not None:
            gb = tuple(np.inf if v is None else float(v) for v in gb)
        rw = d.get("reweight")
        if rw is not None and not rw.get("enabled", True):
            rw = None
        ev = cfg.get("eval", {})
        return cls(
            name=cfg.get("name", "scenario"),
            model=model,
            theta=np.asarray(cfg["theta"], dtype=float),
            grid=grid,
            noise=NoiseSpec(cfg["noise"]["variance"]),
            budgets=budgets,
            weightings=weightings,
            theta_grid=cfg.get("theta_grid"),
            caps=caps,
            group_budgets=gb,
            reweight=rw,
            rounding=d.get("rounding", {"rule": "topm"}),
            trials=int(ev.get("trials", 0)),
            seed=int(ev.get("seed", 0)),
            baseline_trials=int(ev.get("baseline_trials", 0)),
            uniform=bool(ev.get("uniform", False)),
            estimation=ev.get("estimation_grid"),
            subsets=ev.get("subsets"),
            notes=cfg.get("notes", ""),
        )

    # ------------------------------------------------------------------
    def param_grid(self) -> ParamGrid:
        if self.theta_grid is None:
            return ParamGrid(self.theta[None, :])
        tg = self.theta_grid
        return ParamGrid.along(self.theta, self._grid_param(), tg["lower"], tg["delta"], int(tg["count"]))

    def _grid_param(self) -> int:
        p = self.theta_grid["param"]
        if isinstance(p, str):
            names = self.model.param_names
            if p not in names:
                raise ConfigError(f"unknown parameter {p!r}; expected one of {names}")
            return names.index(p)
        if not 0 <= int(p) < self.model.n_params:
            raise ConfigError(f"theta_grid.param must lie in 0..{self.model.n_params - 1}")
        return int(p)

    def banks(self):
        """FIM banks; noiseless scenarios use unit variance (designs do not depend on it)."""
        noise = self.noise if self.noise.variance > 0 else NoiseSpec(1.0)
        return build_banks(self.model, self.param_grid(), self.grid, noise)

    @property
    def crlb_scale(self) -> float:
        """Factor turning bounds computed from :meth:`banks` into bounds at the true noise level."""
        return 1.0 if self.noise.variance > 0 else 0.0

    def rule_for(self, gamma: float):
        r = self.rounding or {"rule": "topm"}
        if r.get("rule", "topm") == "cutoff":
            if "xi" not in r:
                raise ConfigError("cutoff rounding needs xi")
            return Cutoff(float(r["xi"]))
        M = int(r["M"]) if r.get("M") is not None else int(math.floor(gamma + 1e-9))
        return TopM(min(M, self.grid.size))

    def problem(self, banks, gamma: float, psi) -> DesignProblem:
        layout = self.grid.shape if self.grid.dim == 2 else None
        return DesignProblem(banks, gamma, psi, self.caps, self.group_budgets, layout)


# ----------------------------------------------------------------------
# reports


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(_fmt(x) for x in v)
    return "" if v is None else str(v)


@dataclass
class Report:
    """Rows of results, one per sweep point.

    Wall-clock timings live in ``timings`` (one dict per row) and are left
    out of :meth:`to_csv` unless asked for, so that identical inputs give
    byte-identical files.
    """

    scenario: str
    columns: list
    rows: list
    timings: list = field(default_factory=list)
    notes: str = ""
    designs: list = field(default_factory=list, repr=False)

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> list:
        return [row.get(name) for row in self.rows]

    def to_csv(self, include_timings: bool = False) -> str:
        cols = list(self.columns)
        tcols = sorted({k for t in self.timings for k in t}) if include_timings else []
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(cols + tcols)
        for i, row in enumerate(self.rows):
            extra = [_fmt(self.timings[i].get(k)) for k in tcols] if tcols else []
            writer.writerow([_fmt(row.get(c)) for c in cols] + extra)
        return buf.getvalue()

    def write_csv(self, path, include_timings: bool = False) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(self.to_csv(include_timings))

    def summary(self, columns: Optional[Sequence[str]] = None) -> str:
        cols = list(columns) if columns is not None else [
            c for c in self.columns if c != "selected" and not c.startswith("crlb_")]
        lines = [f"scenario {self.scenario}: {len(self.rows)} rows"]
        if self.notes:
            lines.append(f"  notes: {self.notes}")
        width = [max(len(c), 10) for c in cols]
        lines.append("  " + "  ".join(c.rjust(w) for c, w in zip(cols, width)))
        for row in self.rows:
            cells = []
            for c, w in zip(cols, width):
                v = row.get(c)
                s = f"{v:.4g}" if isinstance(v, (float, np.floating)) else _fmt(v)
                cells.append(s.rjust(w))
            lines.append("  " + "  ".join(cells))
        if self.timings:
            total = sum(sum(t.values()) for t in self.timings)
            lines.append(f"  wall clock: {total:.2f} s")
        return "\n".join(lines)


# ----------------------------------------------------------------------
# baselines


class BaselineResult(NamedTuple):
    indices: np.ndarray
    objective: float
    n_singular: int


def _seed(*keys) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def random_baseline(banks, M: int, trials: int, psi=None, seed: int = 0,
                    chunk: Optional[int] = None) -> BaselineResult:
    """Best of ``trials`` uniformly drawn ``M``-subsets under the worst-case objective.

    Subsets that give a singular FIM for some grid member are skipped and
    counted; the earliest draw wins ties.
    """
    stack = _stack(banks)
    L, N, P, _ = stack.shape
    if not 1 <= M <= N:
        raise ConfigError(f"M must lie in 1..{N}, got {M}")
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    psi = np.ones(P) if psi is None else np.asarray(psi, dtype=float)
    rng = np.random.default_rng(seed)
    chunk = chunk or max(1, min(trials, 2_000_000 // max(N, M * P * P * L)))
    best_val, best, singular = np.inf, None, 0
    done = 0
    while done < trials:
        c = min(chunk, trials - done)
        keys = rng.random((c, N))
        subsets = np.sort(np.argpartition(keys, M - 1, axis=1)[:, :M], axis=1) if M < N else \
            np.tile(np.arange(N), (c, 1))
        vals = _batched_objective(stack, subsets, psi)
        singular += int(np.sum(~np.isfinite(vals)))
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val, best = float(vals[i]), subsets[i]
        done += c
    if best is None:
        raise AllSingularError(f"all {trials} random {M}-subsets gave a singular FIM")
    return BaselineResult(best, best_val, singular)


def uniform_decimation(grid: CandidateGrid, M: int) -> np.ndarray:
    """``M`` candidates spread evenly over the grid (an evenly spaced sub-lattice in 2-D)."""
    N = grid.size
    if not 1 <= M <= N:
        raise ConfigError(f"M must lie in 1..{N}, got {M}")
    if grid.dim == 1 or grid.shape is None:
        return np.unique(np.round(np.linspace(0, N - 1, M)).astype(int))
    n1, n2 = grid.shape
    m1 = min(n1, max(1, math.ceil(math.sqrt(M * n1 / n2))))
    m2 = min(n2, math.ceil(M / m1))
    while m1 * m2 < M:
        m1 = min(n1, m1 + 1)
        m2 = min(n2, math.ceil(M / m1))
    r = np.unique(np.round(np.linspace(0, n1 - 1, m1)).astype(int))
    c = np.unique(np.round(np.linspace(0, n2 - 1, m2)).astype(int))
    lattice = (r[:, None] * n2 + c[None, :]).ravel()
    return np.sort(lattice[:M])


def _objective(stack, selected, psi) -> float:
    return float(_batched_objective(stack, np.asarray(selected, dtype=int)[None, :], psi)[0])


def _scaled(value: float, scale: float) -> float:
    return value if not math.isfinite(value) else value * scale


def clusters(indices, gap: int = 5) -> list:
    """Split sorted indices wherever consecutive entries differ by more than ``gap``."""
    idx = np.sort(np.asarray(indices, dtype=int))
    if idx.size == 0:
        return []
    cuts = np.flatnonzero(np.diff(idx) > gap) + 1
    return [c.tolist() for c in np.split(idx, cuts)]


# ----------------------------------------------------------------------
# scenario runs


def _search_grid(s: Scenario, worst) -> EstimationGrid:
    spec = s.estimation or {}
    if "values" in spec:
        return EstimationGrid(tuple(spec["values"]), refine=spec.get("refine", True),
                              max_evals=spec.get("max_evals", 200),
                              phase_ref=s.theta[s.model.indices("phase")])
    width = float(spec.get("width", 3.0))
    points = int(spec.get("points", 15))
    nl = s.model.nonlinear_indices
    if points ** len(nl) > GRID_CAP:
        raise TooLargeError(f"estimation grid of {points}^{len(nl)} points exceeds {GRID_CAP}")
    centre = s.theta.copy()
    half = width * np.sqrt(np.maximum(worst, 0.0))
    if s.theta_grid is not None:
        p = s._grid_param()
        lo, hi = ParamGrid.interval(s.theta_grid["lower"], s.theta_grid["delta"], int(s.theta_grid["count"]))
        centre[p] = 0.5 * (lo + hi)
        half[p] += 0.5 * (hi - lo)
    offsets = np.linspace(-1.0, 1.0, points) if points > 1 else np.zeros(1)
    axes = tuple(centre[p] + offsets * half[p] if half[p] > 0 else centre[p:p + 1] for p in nl)
    return EstimationGrid(axes, refine=spec.get("refine", True), max_evals=int(spec.get("max_evals", 200)),
                          phase_ref=s.theta[s.model.indices("phase")])


def _offgrid_thetas(s: Scenario, trials: int, seed: int) -> np.ndarray:
    """Trial parameters with the gridded entry uniform on its interval, off the grid points."""
    p = s._grid_param()
    tg = s.theta_grid
    lo, hi = ParamGrid.interval(tg["lower"], tg["delta"], int(tg["count"]))
    nodes = s.param_grid().thetas[:, p]
    rng = np.random.default_rng(seed)
    out = np.tile(s.theta, (trials, 1))
    for i in range(trials):
        while True:
            v = rng.uniform(lo, hi)
            if np.min(np.abs(nodes - v)) > 1e-12:
                break
        out[i, p] = v
    return out


def _design(s: Scenario, banks, gamma, psi) -> DesignResult:
    problem = s.problem(banks, gamma, psi)
    rule = s.rule_for(gamma)
    if s.reweight is not None:
        rw = s.reweight
        return reweight_iterate(problem, max_iter=int(rw.get("max_iter", 10)),
                                epsilon=float(rw.get("epsilon", 1e-6)), tol=float(rw.get("tol", 1e-3)), rule=rule)
    return solve_sdp(problem, rule=rule)


def _context(exc: Exception, where: str) -> Exception:
    msg = exc.args[0] if exc.args else str(exc)
    exc.args = (f"{where}: {msg}",) + tuple(exc.args[1:])
    return exc


def run_scenario(s: Scenario, simulate: Optional[bool] = None, baseline: Optional[bool] = None,
                 uniform: Optional[bool] = None) -> Report:
    """Design, evaluate and optionally benchmark every sweep point.

    ``simulate``/``baseline``/``uniform`` default to what the scenario
    requests (non-zero trial counts, ``uniform`` flag).
    """
    simulate = s.trials > 0 if simulate is None else simulate
    baseline = s.baseline_trials > 0 if baseline is None else baseline
    uniform = s.uniform if uniform is None else uniform
    if simulate and s.trials < 1:
        raise ConfigError("simulation needs eval.trials >= 1")
    if baseline and s.baseline_trials < 1:
        raise ConfigError("the random baseline needs eval.baseline_trials >= 1")
    banks = s.banks()
    stack = _stack(banks)
    names = s.model.param_names
    cols = ["scenario", "weighting", "gamma", "M", "selected", "objective", "relaxed_objective",
            "solver_status", "newton_steps"]
    cols += [f"crlb_{kind}_{n}" for n in names for kind in ("best", "worst")]
    cols += [f"root_crlb_{kind}_{lab}" for lab in s.subsets for kind in ("best", "worst")]
    if simulate:
        cols += [f"rmse_{lab}" for lab in s.subsets]
    if baseline:
        cols += ["baseline_objective", "baseline_singular", "baseline_trials"]
    if uniform:
        cols += ["uniform_objective"]
    rows, timings, designs = [], [], []
    for label, psi in s.weightings.items():
        for b, gamma in enumerate(s.budgets):
            where = f"scenario {s.name}, weighting {label}, gamma {gamma:g}"
            row = {"scenario": s.name, "weighting": label, "gamma": float(gamma)}
            times = {}
            t0 = time.perf_counter()
            try:
                res = _design(s, banks, gamma, psi)
            except SamplerError as exc:
                raise _context(exc, where)
            times["seconds_design"] = time.perf_counter() - t0
            sel = res.selected
            row.update(M=int(sel.size), selected=sel.tolist(),
                       relaxed_objective=float(res.objective) * s.crlb_scale,
                       solver_status=res.solver_info.get("status"),
                       newton_steps=int(res.solver_info.get("newton_steps", 0)))
            w = np.zeros(s.grid.size)
            w[sel] = 1.0
            try:
                table = crlb_table(w, banks)
            except SingularFimError as exc:
                raise _context(exc, f"{where}, selected samples")
            table = table * s.crlb_scale
            row["objective"] = float(psi @ table.max(axis=0))
            for j, n in enumerate(names):
                row[f"crlb_best_{n}"] = float(table[:, j].min())
                row[f"crlb_worst_{n}"] = float(table[:, j].max())
            for lab, idx in s.subsets.items():
                tot = table[:, idx].sum(axis=1)
                row[f"root_crlb_best_{lab}"] = float(math.sqrt(tot.min()))
                row[f"root_crlb_worst_{lab}"] = float(math.sqrt(tot.max()))
            if simulate:
                t0 = time.perf_counter()
                search = _search_grid(s, table.max(axis=0))
                thetas = None
                if s.theta_grid is not None:
                    thetas = _offgrid_thetas(s, s.trials, _seed(s.seed, 2, b))
                obs = simulate_trials(s.model, s.theta, s.grid, sel, s.noise, s.trials, _seed(s.seed, 0, b),
                                      thetas=thetas)
                est = nls_estimate(obs, s.model, search)
                truth = s.theta if thetas is None else thetas
                for lab, idx in s.subsets.items():
                    row[f"rmse_{lab}"] = rmse(est, truth, idx)
                times["seconds_simulate"] = time.perf_counter() - t0
            if baseline:
                t0 = time.perf_counter()
                try:
                    base = random_baseline(stack, int(sel.size), s.baseline_trials, psi, _seed(s.seed, 1, b))
                    row.update(baseline_objective=_scaled(base.objective, s.crlb_scale), baseline_singular=base.n_singular)
                except AllSingularError:
                    row.update(baseline_objective=math.inf, baseline_singular=s.baseline_trials)
                row["baseline_trials"] = s.baseline_trials
                times["seconds_baseline"] = time.perf_counter() - t0
            if uniform:
                t0 = time.perf_counter()
                row["uniform_objective"] = _scaled(
                    _objective(stack, uniform_decimation(s.grid, int(sel.size)), psi), s.crlb_scale)
                times["seconds_uniform"] = time.perf_counter() - t0
            rows.append(row)
            timings.append(times)
            designs.append((label, float(gamma), psi, res))
            log.info("%s: M=%d objective=%.6g (%.2f s)", where, sel.size, row["objective"], sum(times.values()))
    return Report(s.name, cols, rows, timings, s.notes, designs)


def crlb_rmse_curve(s: Scenario) -> Report:
    """Root-CRLB and NLS RMSE per parameter subset along the budget sweep."""
    if s.trials < 100:
        raise ConfigError(f"an RMSE curve needs at least 100 Monte Carlo trials, got {s.trials}")
    full = run_scenario(s, simulate=True, baseline=False, uniform=False)
    cols = ["scenario", "weighting", "gamma", "M"]
    for lab in s.subsets:
        cols += [f"root_crlb_best_{lab}", f"root_crlb_worst_{lab}", f"rmse_{lab}"]
    rows = [{c: r[c] for c in cols} for r in full.rows]
    return Report(s.name, cols, rows, full.timings, s.notes)


def compare_methods(s: Scenario) -> Report:
    """Design vs best random subset vs uniform decimation, three rows per sweep point."""
    if s.baseline_trials < 1:
        raise ConfigError("comparison needs eval.baseline_trials >= 1")
    full = run_scenario(s, simulate=False, baseline=True, uniform=True)
    cols = ["scenario", "weighting", "gamma", "M", "method", "objective", "singular_draws"]
    rows, timings = [], []
    for r, t in zip(full.rows, full.timings):
        base = {c: r[c] for c in ("scenario", "weighting", "gamma", "M")}
        rows.append(dict(base, method="design", objective=r["objective"], singular_draws=0))
        rows.append(dict(base, method="random", objective=r["baseline_objective"],
                         singular_draws=r["baseline_singular"]))
        rows.append(dict(base, method="uniform", objective=r["uniform_objective"], singular_draws=0))
        timings += [{"seconds": t.get("seconds_design", 0.0)}, {"seconds": t.get("seconds_baseline", 0.0)},
                    {"seconds": t.get("seconds_uniform", 0.0)}]
    return Report(s.name, cols, rows, timings, s.notes)
