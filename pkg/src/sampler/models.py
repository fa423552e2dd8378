"""Parametric signal models, candidate grids and per-sample Fisher information.

Every model is a sum of ``K`` complex exponential components.  Within a
component the parameters are laid out as

    amplitude, frequency-like ..., damping-like ..., phase

and components are concatenated, so parameter ``p`` of component ``k`` sits
at index ``k * model.params_per_component + p``.

=================  ===============================================
kind               per-component layout
=================  ===============================================
damped_1d          alpha, f, beta, phi
chirp_1d           alpha, f0, f1, phi   (instantaneous phase f0*t + f1*t**2)
damped_2d          alpha, f_1, f_2, beta_1, beta_2, phi
=================  ===============================================

Frequencies are in cycles per sample, dampings in 1/sample, phases in
radians.  The noise is white circularly-symmetric complex Gaussian with
total variance ``sigma2``, for which the Fisher information of one sample
is ``(2 / sigma2) * Re(conj(g) g^T)`` with ``g`` the complex gradient of the
mean.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError

__all__ = [
    "ModelKind",
    "SignalModel",
    "CandidateGrid",
    "NoiseSpec",
    "mean",
    "grad_mean",
    "per_sample_fim",
    "fim_from_gradients",
]


class ModelKind(str, enum.Enum):
    DAMPED_1D = "damped_1d"
    DAMPED_2D = "damped_2d"
    CHIRP_1D = "chirp_1d"


_LAYOUT = {
    ModelKind.DAMPED_1D: (("amplitude", 0), ("frequency", 1), ("damping", 1), ("phase", 0)),
    ModelKind.CHIRP_1D: (("amplitude", 0), ("frequency", 1), ("frequency", 1), ("phase", 0)),
    ModelKind.DAMPED_2D: (
        ("amplitude", 0),
        ("frequency", 1),
        ("frequency", 2),
        ("damping", 1),
        ("damping", 2),
        ("phase", 0),
    ),
}

_SHORT = {"amplitude": "amp", "frequency": "freq", "damping": "damp", "phase": "phase"}


@dataclass(frozen=True)
class SignalModel:
    """A sum of ``n_components`` exponential components of one ``kind``."""

    kind: ModelKind
    n_components: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind(self.kind))
        if int(self.n_components) != self.n_components or self.n_components < 1:
            raise ConfigError(f"n_components must be a positive integer, got {self.n_components!r}")
        object.__setattr__(self, "n_components", int(self.n_components))

    @property
    def dim(self) -> int:
        return 2 if self.kind is ModelKind.DAMPED_2D else 1

    @property
    def params_per_component(self) -> int:
        return len(_LAYOUT[self.kind])

    @property
    def n_params(self) -> int:
        return self.n_components * self.params_per_component

    @property
    def roles(self) -> list[str]:
        """Role of every parameter: amplitude, frequency, damping or phase."""
        return [role for _ in range(self.n_components) for role, _ in _LAYOUT[self.kind]]

    @property
    def axes(self) -> list[int]:
        """Sampling axis (1-based) a parameter acts along, 0 for amplitude/phase."""
        return [axis for _ in range(self.n_components) for _, axis in _LAYOUT[self.kind]]

    @property
    def param_names(self) -> list[str]:
        names = []
        for k in range(1, self.n_components + 1):
            for j, (role, axis) in enumerate(_LAYOUT[self.kind]):
                name = f"{_SHORT[role]}{k}"
                if self.kind is ModelKind.CHIRP_1D and role == "frequency":
                    name = f"freq{k}_{'start' if j == 1 else 'slope'}"
                elif self.dim == 2 and axis:
                    name += f"_t{axis}"
                names.append(name)
        return names

    def indices(self, role: str, axis: Optional[int] = None) -> list[int]:
        """Parameter indices having ``role`` (optionally restricted to one axis)."""
        return [
            p
            for p, (r, a) in enumerate(zip(self.roles, self.axes))
            if r == role and (axis is None or a == axis)
        ]

    @property
    def nonlinear_indices(self) -> list[int]:
        """Indices of the parameters that enter the model non-linearly."""
        return [p for p, r in enumerate(self.roles) if r in ("frequency", "damping")]

    def check_theta(self, theta) -> np.ndarray:
        """Validate a parameter vector and return it as a float array."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ConfigError(f"theta must have length {self.n_params} for {self.kind.value} "
                              f"with K={self.n_components}, got shape {theta.shape}")
        if not np.all(np.isfinite(theta)):
            raise ConfigError("theta contains non-finite values")
        roles = np.array(self.roles)
        if np.any(theta[roles == "amplitude"] <= 0):
            raise ConfigError("amplitudes must be strictly positive")
        if np.any(theta[roles == "damping"] < 0):
            raise ConfigError("dampings must be non-negative")
        return theta

    def _coords(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.dim == 1:
            if t.ndim == 2 and t.shape[1] == 1:
                t = t[:, 0]
            if t.ndim > 1:
                raise ConfigError(f"{self.kind.value} expects scalar sampling points, got shape {t.shape}")
            return np.atleast_1d(t)[:, None]
        if t.shape[-1] != 2 or t.ndim > 2:
            raise ConfigError(f"{self.kind.value} expects 2-vectors as sampling points, got shape {t.shape}")
        return np.atleast_2d(t)

    def components(self, theta, t) -> np.ndarray:
        """Complex contribution of every component, shape ``(N, K)``."""
        theta = np.asarray(theta, dtype=float).reshape(self.n_components, self.params_per_component)
        x = self._coords(t)
        amp, phase = theta[:, 0], theta[:, -1]
        return amp * np.exp(1j * phase) * self.unit_waveforms(theta[:, 1:-1], x)

    def unit_waveforms(self, nonlinear, x) -> np.ndarray:
        """Unit-amplitude, zero-phase waveforms for each component.

        ``nonlinear`` has shape ``(..., K, params_per_component - 2)`` and ``x``
        is an ``(N, D)`` coordinate array; the result has shape ``(..., N, K)``.
        """
        nl = np.asarray(nonlinear, dtype=float)
        nl = np.expand_dims(nl, -3)  # (..., 1, K, q)
        if self.kind is ModelKind.DAMPED_1D:
            t = x[:, 0][:, None]
            expo = 2j * np.pi * nl[..., 0] * t - nl[..., 1] * t
        elif self.kind is ModelKind.CHIRP_1D:
            t = x[:, 0][:, None]
            expo = 2j * np.pi * (nl[..., 0] + nl[..., 1] * t) * t
        else:
            t1, t2 = x[:, 0][:, None], x[:, 1][:, None]
            expo = 2j * np.pi * (nl[..., 0] * t1 + nl[..., 1] * t2) - (nl[..., 2] * t1 + nl[..., 3] * t2)
        return np.exp(expo)

    def mean(self, theta, t) -> np.ndarray:
        """Noiseless complex mean at each sampling point (vectorised)."""
        return self.components(theta, t).sum(axis=1)

    def grad(self, theta, t) -> np.ndarray:
        """Complex gradient of the mean, shape ``(N, P)``."""
        theta = np.asarray(theta, dtype=float)
        x = self._coords(t)
        comp = self.components(theta, x)  # (N, K)
        q = self.params_per_component
        out = np.empty((x.shape[0], self.n_params), dtype=complex)
        two_pi_i = 2j * np.pi
        for k in range(self.n_components):
            s = comp[:, k]
            base = k * q
            out[:, base] = s / theta[base]
            out[:, base + q - 1] = 1j * s
            if self.kind is ModelKind.DAMPED_1D:
                t = x[:, 0]
                out[:, base + 1] = two_pi_i * t * s
                out[:, base + 2] = -t * s
            elif self.kind is ModelKind.CHIRP_1D:
                t = x[:, 0]
                out[:, base + 1] = two_pi_i * t * s
                out[:, base + 2] = two_pi_i * t * t * s
            else:
                t1, t2 = x[:, 0], x[:, 1]
                out[:, base + 1] = two_pi_i * t1 * s
                out[:, base + 2] = two_pi_i * t2 * s
                out[:, base + 3] = -t1 * s
                out[:, base + 4] = -t2 * s
        return out


@dataclass(frozen=True)
class CandidateGrid:
    """``N`` candidate sampling points in ``D`` dimensions.

    ``shape`` is set when the points form a full Cartesian product, stored
    row-major, which the group-norm budgets need.
    """

    points: np.ndarray
    shape: Optional[tuple] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise ConfigError("candidate grid needs a non-empty (N, D) point array")
        if not np.all(np.isfinite(pts)):
            raise ConfigError("candidate points must be finite")
        if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise ConfigError("candidate points must be distinct")
        if self.shape is not None:
            shape = tuple(int(s) for s in self.shape)
            if int(np.prod(shape)) != pts.shape[0] or len(shape) != pts.shape[1]:
                raise ConfigError(f"grid shape {shape} does not match {pts.shape[0]} points in {pts.shape[1]}-D")
            object.__setattr__(self, "shape", shape)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, sizes: Sequence[int] | int, start: float = 0.0) -> "CandidateGrid":
        """Integer lattice ``start, start+1, ...`` along every axis."""
        sizes = [int(sizes)] if np.isscalar(sizes) else [int(s) for s in sizes]
        if any(s < 1 for s in sizes):
            raise ConfigError(f"grid sizes must be positive, got {sizes}")
        axes = [start + np.arange(s, dtype=float) for s in sizes]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        return cls(pts, tuple(sizes))

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.size


@dataclass(frozen=True)
class NoiseSpec:
    """White circular complex Gaussian noise of total variance ``variance``.

    Zero variance is allowed for noiseless simulation; Fisher information
    requires it to be strictly positive.
    """

    variance: float = field(default=1.0)

    def __post_init__(self):
        if not np.isfinite(self.variance) or self.variance < 0:
            raise ConfigError(f"noise variance must be finite and >= 0, got {self.variance!r}")


def _as_point(model: SignalModel, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if model.dim == 1:
        if t.size != 1:
            raise ConfigError(f"{model.kind.value} samples are scalars, got shape {t.shape}")
        return t.reshape(1)
    if t.shape != (model.dim,):
        raise ConfigError(f"{model.kind.value} samples are {model.dim}-vectors, got shape {t.shape}")
    return t.reshape(1, model.dim)


def mean(model: SignalModel, theta, t) -> complex:
    """Noiseless mean ``s(t; theta)`` at a single point."""
    theta = model.check_theta(theta)
    return complex(model.mean(theta, _as_point(model, t))[0])


def grad_mean(model: SignalModel, theta, t) -> np.ndarray:
    """Complex gradient of the mean with respect to ``theta`` at a single point."""
    theta = model.check_theta(theta)
    return model.grad(theta, _as_point(model, t))[0]


def fim_from_gradients(g: np.ndarray, variance: float) -> np.ndarray:
    """Stack of per-sample FIMs from complex gradients of shape ``(..., P)``."""
    if not variance > 0:
        raise ConfigError(f"Fisher information needs a positive noise variance, got {variance!r}")
    a, b = g.real, g.imag
    fim = a[..., :, None] * a[..., None, :] + b[..., :, None] * b[..., None, :]
    return (2.0 / variance) * fim


def per_sample_fim(model: SignalModel, theta, t, noise: NoiseSpec) -> np.ndarray:
    """Fisher information carried by one complex sample taken at ``t``."""
    return fim_from_gradients(grad_mean(model, theta, t), noise.variance)
