"""Phase state, system model, energies, forces and the force-gradient vector field."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np

from shadowstep.errors import DomainError
from shadowstep.models import Subset
from shadowstep.potentials import ExternalField, PairPotential


# Relative finite-difference step for the force Jacobian oracle
JACOBIAN_FD_STEP = 1e-6


@dataclass
class PhaseState:
    """Positions (N x D), velocities (N x D) and masses (N) of a particle system."""

    positions: np.ndarray
    velocities: np.ndarray
    masses: np.ndarray

    def __post_init__(self) -> None:
        self.positions = np.array(self.positions, dtype=float)
        self.velocities = np.array(self.velocities, dtype=float)
        self.masses = np.array(self.masses, dtype=float)
        if self.positions.ndim != 2 or self.positions.shape[1] not in (2, 3):
            raise DomainError(f"positions must be N x D with D in {{2, 3}}, got shape {self.positions.shape}")
        if self.velocities.shape != self.positions.shape:
            raise DomainError(
                f"velocities shape {self.velocities.shape} does not match positions {self.positions.shape}"
            )
        if self.masses.shape != (self.positions.shape[0],):
            raise DomainError(f"masses must have shape ({self.positions.shape[0]},), got {self.masses.shape}")
        if not (np.all(np.isfinite(self.positions)) and np.all(np.isfinite(self.velocities))
                and np.all(np.isfinite(self.masses))):
            raise DomainError("state entries must be finite")
        if np.any(self.masses <= 0):
            raise DomainError("masses must be strictly positive")

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    def copy(self) -> "PhaseState":
        return PhaseState(self.positions.copy(), self.velocities.copy(), self.masses.copy())

    def with_negated_velocities(self) -> "PhaseState":
        return PhaseState(self.positions.copy(), -self.velocities, self.masses.copy())


@dataclass(frozen=True)
class PairTerm:
    """One active pair interaction, labelled FAST (V1) or SLOW (V2)."""

    i: int
    j: int
    potential: PairPotential
    label: Subset = Subset.SLOW


@dataclass(frozen=True)
class SystemModel:
    """Pair interactions with their fast/slow split plus optional per-particle fields.

    External fields belong to the SLOW part.
    """

    n: int
    pairs: tuple[PairTerm, ...] = ()
    external: Mapping[int, ExternalField] = field(default_factory=dict)

    def __post_init__(self) -> None:
        seen: set[tuple[int, int]] = set()
        for p in self.pairs:
            if p.i == p.j:
                raise DomainError(f"self-pair ({p.i}, {p.j}) is not allowed", pair=(p.i, p.j))
            if not (0 <= p.i < self.n and 0 <= p.j < self.n):
                raise DomainError(f"pair ({p.i}, {p.j}) out of range for {self.n} particles", pair=(p.i, p.j))
            if p.label not in (Subset.FAST, Subset.SLOW):
                raise DomainError(f"pair ({p.i}, {p.j}) must be labelled FAST or SLOW, got {p.label}")
            key = (min(p.i, p.j), max(p.i, p.j))
            if key in seen:
                raise DomainError(f"pair {key} assigned twice", pair=key)
            seen.add(key)
        for i in self.external:
            if not 0 <= i < self.n:
                raise DomainError(f"external field on particle {i} out of range for {self.n} particles")

    def pairs_for(self, which: Subset) -> tuple[PairTerm, ...]:
        if which == Subset.FULL:
            return self.pairs
        return tuple(p for p in self.pairs if p.label == which)

    @staticmethod
    def includes_field(which: Subset) -> bool:
        return which in (Subset.FULL, Subset.SLOW)

    def relabelled(self, label: Subset) -> "SystemModel":
        """Copy with every pair carrying the same label."""
        pairs = tuple(PairTerm(p.i, p.j, p.potential, label) for p in self.pairs)
        return SystemModel(self.n, pairs, dict(self.external))


@dataclass(frozen=True)
class ForceReport:
    forces: np.ndarray
    which: Subset

    def accelerations(self, masses: np.ndarray) -> np.ndarray:
        return self.forces / masses[:, None]


def _check_model(state: PhaseState, model: SystemModel) -> None:
    if state.n != model.n:
        raise DomainError(f"state has {state.n} particles but model expects {model.n}")


def _separation(state: PhaseState, p: PairTerm) -> tuple[np.ndarray, float]:
    d = state.positions[p.i] - state.positions[p.j]
    r = float(np.sqrt(d @ d))
    if r == 0.0:
        raise DomainError(f"particles {p.i} and {p.j} coincide on an active pair", pair=(p.i, p.j))
    return d, r


def kinetic_energy(state: PhaseState) -> float:
    return 0.5 * float(np.sum(state.masses * np.sum(state.velocities**2, axis=1)))


def potential_energy(state: PhaseState, model: SystemModel, which: Subset = Subset.FULL) -> float:
    """V, V1 or V2; FULL is FAST + SLOW."""
    _check_model(state, model)
    if which == Subset.FULL:
        return potential_energy(state, model, Subset.FAST) + potential_energy(state, model, Subset.SLOW)
    energy = 0.0
    for p in model.pairs_for(which):
        _, r = _separation(state, p)
        energy += p.potential.phi(r)
    if model.includes_field(which):
        for i, fld in model.external.items():
            energy += fld.u(state.positions[i])
    return energy


def total_energy(state: PhaseState, model: SystemModel) -> float:
    """T(v) + V(r)."""
    return kinetic_energy(state) + potential_energy(state, model, Subset.FULL)


def total_momentum(state: PhaseState) -> np.ndarray:
    return np.sum(state.masses[:, None] * state.velocities, axis=0)


def _subset_forces(state: PhaseState, model: SystemModel, which: Subset) -> np.ndarray:
    f = np.zeros_like(state.positions)
    for p in model.pairs_for(which):
        d, r = _separation(state, p)
        pair_force = -(p.potential.dphi(r) / r) * d
        f[p.i] += pair_force
        f[p.j] -= pair_force
    if model.includes_field(which):
        for i, fld in model.external.items():
            f[i] -= fld.grad(state.positions[i])
    return f


def forces(state: PhaseState, model: SystemModel, which: Subset = Subset.FULL) -> ForceReport:
    """f = -grad V restricted to a subset; FULL is FAST + SLOW."""
    _check_model(state, model)
    if which == Subset.FULL:
        f = _subset_forces(state, model, Subset.FAST) + _subset_forces(state, model, Subset.SLOW)
    else:
        f = _subset_forces(state, model, which)
    return ForceReport(f, which)


def force_gradient(
    state: PhaseState,
    model: SystemModel,
    which: Subset = Subset.FULL,
    report: Optional[ForceReport] = None,
) -> np.ndarray:
    """Force-gradient vectors g with g_i = 2 sum_j (f_j / m_j) df_i/dr_j.

    Only the subset's pairs (and, for FULL or SLOW, the external field) take part,
    and the accelerations are rebuilt from that subset's forces, so the field is
    the one of [V_S, [T, V_S]].

    Args:
        report: Precomputed forces for the same subset and positions, if available.
    """
    _check_model(state, model)
    if report is None or report.which != which:
        report = forces(state, model, which)
    a = report.accelerations(state.masses)
    g = np.zeros_like(state.positions)
    for p in model.pairs_for(which):
        d, r = _separation(state, p)
        d1 = p.potential.dphi(r)
        d2 = p.potential.d2phi(r)
        da = a[p.i] - a[p.j]
        term = -2.0 * ((d1 / r) * da + d * ((r * d2 - d1) / r**3 * float(d @ da)))
        g[p.i] += term
        g[p.j] -= term
    if model.includes_field(which):
        for i, fld in model.external.items():
            g[i] -= 2.0 * fld.hessian(state.positions[i]) @ a[i]
    return g


def force_jacobian_fd(
    state: PhaseState,
    model: SystemModel,
    which: Subset = Subset.FULL,
    step: Optional[float] = None,
) -> np.ndarray:
    """Central-difference Jacobian df_(i,alpha) / dr_(j,beta) as an (N*D) x (N*D) matrix.

    Default step is JACOBIAN_FD_STEP * max(1, largest |coordinate|).
    """
    _check_model(state, model)
    if step is None:
        step = JACOBIAN_FD_STEP * max(1.0, float(np.max(np.abs(state.positions))))
    nd = state.n * state.dim
    jac = np.empty((nd, nd))
    shifted = state.copy()
    flat = shifted.positions.reshape(-1)
    for k in range(nd):
        original = flat[k]
        flat[k] = original + step
        f_plus = forces(shifted, model, which).forces.reshape(-1)
        flat[k] = original - step
        f_minus = forces(shifted, model, which).forces.reshape(-1)
        flat[k] = original
        jac[:, k] = (f_plus - f_minus) / (2.0 * step)
    return jac


def force_gradient_fd(
    state: PhaseState,
    model: SystemModel,
    which: Subset = Subset.FULL,
    step: Optional[float] = None,
) -> np.ndarray:
    """The defining contraction 2 J a evaluated with the finite-difference Jacobian."""
    jac = force_jacobian_fd(state, model, which, step)
    a = forces(state, model, which).accelerations(state.masses).reshape(-1)
    return (2.0 * jac @ a).reshape(state.positions.shape)
