"""Pair potentials and external fields with analytic first and second derivatives."""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from typing import Iterable

import numpy as np

from shadowstep.errors import DomainError

logger = logging.getLogger(__name__)

# Central-difference settings used by the derivative self-checks
FD_RELATIVE_STEP = 1e-5
FD_TOLERANCE = 1e-6


class PairPotential(ABC):
    """phi(r) of the separation r > 0, with phi' and phi''."""

    @abstractmethod
    def phi(self, r: float) -> float:
        """Energy at separation r."""

    @abstractmethod
    def dphi(self, r: float) -> float:
        """First derivative of phi."""

    @abstractmethod
    def d2phi(self, r: float) -> float:
        """Second derivative of phi."""


class Gravity(PairPotential):
    """phi(r) = -k / r with k = G m_i m_j."""

    def __init__(self, k: float) -> None:
        if not k > 0:
            raise DomainError(f"gravity strength must be positive, got {k}")
        self.k = float(k)

    def phi(self, r: float) -> float:
        return -self.k / r

    def dphi(self, r: float) -> float:
        return self.k / (r * r)

    def d2phi(self, r: float) -> float:
        return -2.0 * self.k / (r * r * r)

    def __repr__(self) -> str:
        return f"Gravity(k={self.k!r})"


class Harmonic(PairPotential):
    """phi(r) = k (r - r0)^2 / 2."""

    def __init__(self, k: float, r0: float = 0.0) -> None:
        self.k = float(k)
        self.r0 = float(r0)

    def phi(self, r: float) -> float:
        return 0.5 * self.k * (r - self.r0) ** 2

    def dphi(self, r: float) -> float:
        return self.k * (r - self.r0)

    def d2phi(self, r: float) -> float:
        return self.k

    def __repr__(self) -> str:
        return f"Harmonic(k={self.k!r}, r0={self.r0!r})"


class ExternalField(ABC):
    """Time-independent one-body potential u(x) with gradient and Hessian."""

    @abstractmethod
    def u(self, x: np.ndarray) -> float:
        """Energy at position x."""

    @abstractmethod
    def grad(self, x: np.ndarray) -> np.ndarray:
        """D-vector du/dx."""

    @abstractmethod
    def hessian(self, x: np.ndarray) -> np.ndarray:
        """Symmetric D x D matrix of second derivatives."""


class HarmonicField(ExternalField):
    """u(x) = k |x - center|^2 / 2."""

    def __init__(self, k: float, center: Iterable[float] | None = None) -> None:
        self.k = float(k)
        self.center = None if center is None else np.asarray(center, dtype=float)

    def _offset(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return x if self.center is None else x - self.center

    def u(self, x: np.ndarray) -> float:
        d = self._offset(x)
        return 0.5 * self.k * float(d @ d)

    def grad(self, x: np.ndarray) -> np.ndarray:
        return self.k * self._offset(x)

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return self.k * np.eye(len(x))

    def __repr__(self) -> str:
        return f"HarmonicField(k={self.k!r})"


def _rel_err(a: np.ndarray | float, b: np.ndarray | float) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), 1e-300)
    return float(np.max(np.abs(a - b))) / scale


def check_pair_derivatives(potential: PairPotential, radii: Iterable[float]) -> float:
    """Largest relative mismatch between analytic and central-difference derivatives.

    Step is FD_RELATIVE_STEP * r at each sampled r.
    """
    worst = 0.0
    for r in radii:
        if r <= 0:
            raise DomainError(f"sample separation must be positive, got {r}")
        s = FD_RELATIVE_STEP * r
        d1 = (potential.phi(r + s) - potential.phi(r - s)) / (2 * s)
        d2 = (potential.dphi(r + s) - potential.dphi(r - s)) / (2 * s)
        worst = max(worst, _rel_err(potential.dphi(r), d1), _rel_err(potential.d2phi(r), d2))
    logger.debug(f"{type(potential).__name__}: worst derivative mismatch {worst:.2e}")
    return worst


def check_field_derivatives(field: ExternalField, points: Iterable[np.ndarray]) -> float:
    """Largest relative mismatch of grad and hessian against central differences of u and grad."""
    worst = 0.0
    for x in points:
        x = np.asarray(x, dtype=float)
        s = FD_RELATIVE_STEP * max(1.0, float(np.max(np.abs(x))))
        g_fd = np.empty_like(x)
        h_fd = np.empty((len(x), len(x)))
        for k in range(len(x)):
            e = np.zeros_like(x)
            e[k] = s
            g_fd[k] = (field.u(x + e) - field.u(x - e)) / (2 * s)
            h_fd[:, k] = (field.grad(x + e) - field.grad(x - e)) / (2 * s)
        hess = field.hessian(x)
        if not np.allclose(hess, hess.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.max(np.abs(hess))))):
            raise DomainError(f"hessian of {field!r} is not symmetric at {x}")
        worst = max(worst, _rel_err(field.grad(x), g_fd), _rel_err(hess, h_fd))
    logger.debug(f"{type(field).__name__}: worst derivative mismatch {worst:.2e}")
    return worst
