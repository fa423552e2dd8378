"""Fisher information banks, Cramér-Rao bounds and worst-case bounds."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError, SingularFimError
from .models import CandidateGrid, NoiseSpec, SignalModel, fim_from_gradients

__all__ = [
    "FimBank",
    "ParamGrid",
    "build_bank",
    "build_banks",
    "aggregate_fim",
    "is_positive_definite",
    "crlb_diag",
    "weighted_crlb_sum",
    "apply_param_transform",
    "worst_case_crlb",
    "crlb_table",
]

PD_RTOL = 1e-10


@dataclass(frozen=True)
class FimBank:
    """Per-candidate FIMs ``F(t_n; theta)`` stacked as an ``(N, P, P)`` array."""

    fims: np.ndarray
    theta: Optional[np.ndarray] = None

    def __post_init__(self):
        fims = np.asarray(self.fims, dtype=float)
        if fims.ndim != 3 or fims.shape[1] != fims.shape[2]:
            raise ConfigError(f"FIM bank must have shape (N, P, P), got {fims.shape}")
        fims.setflags(write=False)
        object.__setattr__(self, "fims", fims)
        if self.theta is not None:
            object.__setattr__(self, "theta", np.asarray(self.theta, dtype=float))

    @property
    def size(self) -> int:
        return self.fims.shape[0]

    @property
    def n_params(self) -> int:
        return self.fims.shape[1]


@dataclass(frozen=True)
class ParamGrid:
    """A finite set of parameter vectors expressing prior uncertainty."""

    thetas: np.ndarray

    def __post_init__(self):
        thetas = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        if thetas.shape[0] < 1:
            raise ConfigError("a parameter grid needs at least one member")
        object.__setattr__(self, "thetas", thetas)

    def __len__(self):
        return self.thetas.shape[0]

    @classmethod
    def along(cls, theta, index: int, lower: float, delta: float, count: int) -> "ParamGrid":
        """Vary one parameter as ``lower + (l / count) * delta``, ``l = 0..count-1``.

        The members cover the interval returned by :meth:`interval`.
        """
        if count < 1:
            raise ConfigError("grid count must be >= 1")
        theta = np.asarray(theta, dtype=float)
        thetas = np.repeat(theta[None, :], count, axis=0)
        thetas[:, index] = lower + np.arange(count) / count * delta
        return cls(thetas)

    @staticmethod
    def interval(lower: float, delta: float, count: int) -> tuple[float, float]:
        return lower, lower + (count - 1) / count * delta


def build_bank(model: SignalModel, theta, grid: CandidateGrid, noise: NoiseSpec) -> FimBank:
    theta = model.check_theta(theta)
    g = model.grad(theta, grid.points)
    return FimBank(fim_from_gradients(g, noise.variance), theta)


def build_banks(model: SignalModel, thetas, grid: CandidateGrid, noise: NoiseSpec) -> list[FimBank]:
    if isinstance(thetas, ParamGrid):
        thetas = thetas.thetas
    return [build_bank(model, th, grid, noise) for th in np.atleast_2d(thetas)]


def _fims(bank) -> np.ndarray:
    return bank.fims if isinstance(bank, FimBank) else np.asarray(bank, dtype=float)


def aggregate_fim(w, bank) -> np.ndarray:
    """``sum_n w_n F(t_n; theta)``."""
    fims = _fims(bank)
    w = np.asarray(w, dtype=float)
    if w.shape != (fims.shape[0],):
        raise ConfigError(f"weight vector has shape {w.shape}, bank holds {fims.shape[0]} candidates")
    return np.tensordot(w, fims, axes=1)


def is_positive_definite(fim, rtol: float = PD_RTOL) -> bool:
    """Numerical positive definiteness, invariant to rescaling the parameters.

    The test runs on ``D^-1/2 F D^-1/2`` with ``D = diag(F)``: its smallest
    eigenvalue must exceed ``rtol`` times its trace (the dimension).
    """
    fim = np.asarray(fim, dtype=float)
    d = np.diag(fim)
    if not np.all(np.isfinite(fim)) or np.any(d <= 0):
        return False
    s = 1 / np.sqrt(d)
    corr = fim * s[:, None] * s[None, :]
    return bool(np.linalg.eigvalsh(0.5 * (corr + corr.T))[0] > rtol * fim.shape[0])


def crlb_diag(fim, ridge: float = 0.0) -> np.ndarray:
    """Diagonal of ``(fim + ridge I)^{-1}``.

    With ``ridge == 0`` the FIM must pass :func:`is_positive_definite`,
    otherwise :class:`SingularFimError`.
    """
    fim = np.asarray(fim, dtype=float)
    if ridge < 0:
        raise ConfigError("ridge must be non-negative")
    if ridge == 0 and not is_positive_definite(fim):
        raise SingularFimError("FIM is not positive definite")
    mat = 0.5 * (fim + fim.T) + ridge * np.eye(fim.shape[0])
    try:
        chol = np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise SingularFimError("FIM is not positive definite") from exc
    inv_chol = np.linalg.inv(chol)
    return np.einsum("ij,ij->j", inv_chol, inv_chol)


def weighted_crlb_sum(fim, psi, ridge: float = 0.0) -> float:
    psi = np.asarray(psi, dtype=float)
    if np.any(psi < 0):
        raise ConfigError("psi must be non-negative")
    return float(psi @ crlb_diag(fim, ridge))


def apply_param_transform(bank, transform) -> FimBank:
    """Replace every ``F`` by ``A F A^T``."""
    fims = _fims(bank)
    a = np.asarray(transform, dtype=float)
    if a.shape != (fims.shape[1], fims.shape[1]):
        raise ConfigError(f"transform must be {fims.shape[1]}x{fims.shape[1]}, got {a.shape}")
    out = np.einsum("ij,njk,lk->nil", a, fims, a)
    return FimBank(out, getattr(bank, "theta", None))


def worst_case_crlb(w, banks: Sequence, p: int, ridge: float = 0.0) -> float:
    """``max_theta e_p^T (sum_n w_n F(t_n; theta))^{-1} e_p`` over the grid."""
    values = []
    for i, bank in enumerate(banks):
        try:
            values.append(crlb_diag(aggregate_fim(w, bank), ridge)[p])
        except SingularFimError as exc:
            raise SingularFimError(f"FIM singular for parameter grid member {i}", theta_index=i) from exc
    return float(max(values))


def crlb_table(w, banks: Sequence) -> np.ndarray:
    """CRLBs of every parameter for every grid member, shape ``(L, P)``."""
    out = []
    for i, bank in enumerate(banks):
        try:
            out.append(crlb_diag(aggregate_fim(w, bank)))
        except SingularFimError as exc:
            raise SingularFimError(f"FIM singular for parameter grid member {i}", theta_index=i) from exc
    return np.array(out)
