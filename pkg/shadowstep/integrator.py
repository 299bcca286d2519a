"""Drift and kick maps, scheme stepping, and trajectory integration."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional

import numpy as np

from shadowstep.errors import ConfigurationError, DomainError, IntegrationError
from shadowstep.models import CostWeights, RunStatus, StageKind, Subset
from shadowstep.dynamics import ForceReport, PhaseState, SystemModel, force_gradient, forces, total_energy
from shadowstep.schemes import SplittingScheme

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[RunStatus], None]


@dataclass
class EvalCounter:
    """Logical force and force-gradient evaluations, per subset."""

    force: dict[Subset, int] = field(default_factory=lambda: {s: 0 for s in Subset})
    gradient: dict[Subset, int] = field(default_factory=lambda: {s: 0 for s in Subset})
    drifts: int = 0

    def weighted(self, w: CostWeights) -> float:
        """Weighted cost; a FULL evaluation is charged as one FAST plus one SLOW."""
        return (
            self.force[Subset.FULL] * (w.slow_force + w.fast_force)
            + self.force[Subset.SLOW] * w.slow_force
            + self.force[Subset.FAST] * w.fast_force
            + self.gradient[Subset.FULL] * (w.slow_force_gradient + w.fast_force_gradient)
            + self.gradient[Subset.SLOW] * w.slow_force_gradient
            + self.gradient[Subset.FAST] * w.fast_force_gradient
            + self.drifts * w.drift
        )

    def as_dict(self) -> dict[str, int]:
        out = {f"force_{s.value.lower()}": n for s, n in self.force.items()}
        out.update({f"gradient_{s.value.lower()}": n for s, n in self.gradient.items()})
        out["drifts"] = self.drifts
        return out


class ForceCache:
    """Forces and force gradients memoised on (position version, subset).

    Positions change only in drifts, so adjacent kicks on the same subset share
    one evaluation.
    """

    def __init__(self, enabled: bool = True) -> None:
        self.enabled = enabled
        self._version = -1
        self._forces: dict[Subset, ForceReport] = {}
        self._gradients: dict[Subset, np.ndarray] = {}

    def lookup(self, version: int, which: Subset) -> tuple[Optional[ForceReport], Optional[np.ndarray]]:
        if not self.enabled or version != self._version:
            return None, None
        return self._forces.get(which), self._gradients.get(which)

    def store(self, version: int, which: Subset, report: ForceReport, gradient: Optional[np.ndarray]) -> None:
        if not self.enabled:
            return
        if version != self._version:
            self._version = version
            self._forces.clear()
            self._gradients.clear()
        self._forces[which] = report
        if gradient is not None:
            self._gradients[which] = gradient


@lru_cache(maxsize=256)
def _compile(scheme: SplittingScheme, h: float) -> tuple:
    """Stage list with coefficients converted to floats for step size h."""
    plan = []
    for s in scheme.stages:
        match s.kind:
            case StageKind.DRIFT:
                plan.append((StageKind.DRIFT, float(s.a) * h))
            case StageKind.KICK:
                plan.append((StageKind.KICK, s.subset, float(s.b) * h, float(s.c) * h**3))
            case StageKind.INNER_LOOP:
                inner_h = float(s.time_fraction) * h / s.repetitions
                plan.append((StageKind.INNER_LOOP, s.repetitions, _compile(s.inner, inner_h)))
    return tuple(plan)


class Propagator:
    """Owns a private copy of the state and advances it stage by stage."""

    def __init__(
        self,
        state: PhaseState,
        model: SystemModel,
        counter: Optional[EvalCounter] = None,
        use_cache: bool = True,
    ) -> None:
        self.state = state.copy()
        self.model = model
        self.counter = counter if counter is not None else EvalCounter()
        self._cache = ForceCache(use_cache)
        self._version = 0
        self._masses = self.state.masses[:, None]

    def drift(self, tau: float) -> None:
        if tau == 0.0:
            return
        self.state.positions += tau * self.state.velocities
        self._version += 1
        self.counter.drifts += 1

    def kick(self, which: Subset, bh: float, ch3: float = 0.0) -> None:
        if bh == 0.0 and ch3 == 0.0:
            return
        report, gradient = self._cache.lookup(self._version, which)
        if report is None:
            report = forces(self.state, self.model, which)
            self.counter.force[which] += 1
        if ch3 != 0.0 and gradient is None:
            gradient = force_gradient(self.state, self.model, which, report)
            self.counter.gradient[which] += 1
        self._cache.store(self._version, which, report, gradient)
        if bh != 0.0:
            self.state.velocities += bh * (report.forces / self._masses)
        if ch3 != 0.0:
            self.state.velocities += ch3 * (gradient / self._masses)

    def _run(self, plan: tuple) -> None:
        for op in plan:
            match op[0]:
                case StageKind.DRIFT:
                    self.drift(op[1])
                case StageKind.KICK:
                    self.kick(op[1], op[2], op[3])
                case StageKind.INNER_LOOP:
                    for _ in range(op[1]):
                        self._run(op[2])

    def step(self, scheme: SplittingScheme, h: float) -> None:
        self._run(_compile(scheme, float(h)))


def drift(state: PhaseState, tau: float) -> PhaseState:
    """r -> r + tau v."""
    out = state.copy()
    out.positions += tau * out.velocities
    return out


def kick(state: PhaseState, model: SystemModel, which: Subset, bh: float, ch3: float = 0.0) -> PhaseState:
    """v -> v + (b h) f / m + (c h^3) g / m with f, g from the given subset."""
    prop = Propagator(state, model, use_cache=False)
    prop.kick(which, float(bh), float(ch3))
    return prop.state


def step(scheme: SplittingScheme, state: PhaseState, model: SystemModel, h: float) -> PhaseState:
    """One step of size h; inner loops run M times with step time_fraction h / M."""
    if not h > 0:
        raise ConfigurationError(f"step size must be positive, got {h}", field="h")
    prop = Propagator(state, model)
    try:
        prop.step(scheme, h)
    except DomainError as e:
        raise IntegrationError(str(e), scheme.name, 0) from e
    return prop.state


@dataclass
class Trajectory:
    """Energy (and optionally state) samples of an integration run."""

    scheme: str
    h: float
    steps: np.ndarray
    times: np.ndarray
    energies: np.ndarray
    initial_energy: float
    final_state: PhaseState
    counter: EvalCounter
    states: Optional[list[PhaseState]] = None

    @property
    def rel_energy_errors(self) -> np.ndarray:
        if self.initial_energy == 0.0:
            raise DomainError("relative energy error is undefined for zero initial energy")
        return np.abs(self.energies - self.initial_energy) / abs(self.initial_energy)


def integrate(
    scheme: SplittingScheme,
    state: PhaseState,
    model: SystemModel,
    h: float,
    l: int,
    sample_every: int = 1,
    record_states: bool = False,
    use_cache: bool = True,
    progress: Optional[ProgressCallback] = None,
) -> Trajectory:
    """l steps of size h, sampling energy at t = 0, every sample_every steps, and t = l h.

    Args:
        record_states: Also keep a copy of the state at each sample.
        use_cache: Reuse forces between kicks on unchanged positions.
        progress: Called with a RunStatus at every sample.
    """
    if not h > 0:
        raise ConfigurationError(f"step size must be positive, got {h}", field="h")
    if l < 1:
        raise ConfigurationError(f"step count must be at least 1, got {l}", field="l")
    if sample_every < 1:
        raise ConfigurationError(f"sample_every must be at least 1, got {sample_every}", field="sample_every")

    h = float(h)
    prop = Propagator(state, model, use_cache=use_cache)
    plan = _compile(scheme, h)
    states = [prop.state.copy()] if record_states else None

    t0 = time.monotonic()
    k = 0
    try:
        e0 = total_energy(prop.state, model)
        if e0 == 0.0:
            raise DomainError("relative energy error is undefined for zero initial energy")
        steps = [0]
        energies = [e0]
        for k in range(1, l + 1):
            prop._run(plan)
            if k % sample_every == 0 or k == l:
                e = total_energy(prop.state, model)
                steps.append(k)
                energies.append(e)
                if states is not None:
                    states.append(prop.state.copy())
                if progress is not None:
                    progress(RunStatus(
                        scheme=scheme.name,
                        step=k,
                        steps_total=l,
                        time_mo=k * h,
                        rel_energy_error=abs(e - e0) / abs(e0),
                    ))
    except DomainError as e:
        logger.error(f"{scheme.name}: domain error at step {k}: {e}")
        raise IntegrationError(str(e), scheme.name, k) from e

    elapsed = time.monotonic() - t0
    logger.debug(f"{scheme.name}: {l} steps of h={h} in {elapsed:.2f}s, evals={prop.counter.as_dict()}")
    steps_arr = np.asarray(steps, dtype=int)
    return Trajectory(
        scheme=scheme.name,
        h=h,
        steps=steps_arr,
        times=steps_arr * h,
        energies=np.asarray(energies),
        initial_energy=e0,
        final_state=prop.state,
        counter=prop.counter,
        states=states,
    )
