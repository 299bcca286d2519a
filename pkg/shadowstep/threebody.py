"""Sun-Earth-Moon experiments: energy-error series, convergence orders and cost vs accuracy."""

from __future__ import annotations

import asyncio
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence, TypeVar

import numpy as np

from shadowstep.dynamics import PairTerm, PhaseState, SystemModel, total_energy
from shadowstep.errors import ConfigurationError, DomainError
from shadowstep.integrator import EvalCounter, ProgressCallback, integrate
from shadowstep.models import DEFAULT_H_GRID, ConvergenceReport, CostRow, CostWeights, Subset, ThreeBodySetup
from shadowstep.potentials import Gravity
from shadowstep.schemes import SplittingScheme

logger = logging.getLogger(__name__)

T = TypeVar("T")

DEFAULT_T_END = 12.0
SLOPE_TOLERANCE = 0.5
MIN_WINDOW = 3
# t_end / h must be integral to within this relative tolerance
STEP_COUNT_TOLERANCE = 1e-9


def build_sun_earth_moon(setup: Optional[ThreeBodySetup] = None) -> tuple[PhaseState, SystemModel]:
    """Planar Sun (0), Earth (1), Moon (2) in AU / SU / month units.

    Earth-Moon is the FAST pair; Sun-Earth and Sun-Moon are SLOW. Initial
    velocities are tangential, along +x.
    """
    setup = setup or ThreeBodySetup()
    m = setup.masses
    state = PhaseState(
        positions=np.array(setup.positions, dtype=float),
        velocities=np.array([[v, 0.0] for v in setup.speeds]),
        masses=np.array(m, dtype=float),
    )
    pairs = (
        PairTerm(0, 1, Gravity(setup.G * m[0] * m[1]), Subset.SLOW),
        PairTerm(0, 2, Gravity(setup.G * m[0] * m[2]), Subset.SLOW),
        PairTerm(1, 2, Gravity(setup.G * m[1] * m[2]), Subset.FAST),
    )
    return state, SystemModel(3, pairs)


def erase_split(model: SystemModel) -> SystemModel:
    """Same interactions with every pair labelled SLOW."""
    return model.relabelled(Subset.SLOW)


def step_count(h: float, t_end: float) -> int:
    if not h > 0:
        raise ConfigurationError(f"step size must be positive, got {h}", field="h")
    if t_end < 0:
        raise ConfigurationError(f"t_end must be non-negative, got {t_end}", field="t_end")
    l = round(t_end / h)
    if abs(l * h - t_end) > STEP_COUNT_TOLERANCE * max(1.0, t_end):
        raise ConfigurationError(f"t_end={t_end} is not a whole number of steps of h={h}", field="t_end")
    return l


@dataclass
class EnergySeries:
    """Relative energy error |E(t) - E0| / |E0| sampled along one run."""

    scheme: str
    h: float
    steps: np.ndarray
    times: np.ndarray
    energies: np.ndarray
    rel_errors: np.ndarray
    counter: EvalCounter

    @property
    def running_max(self) -> np.ndarray:
        return np.maximum.accumulate(self.rel_errors)

    @property
    def max_rel_err(self) -> float:
        return float(np.max(self.rel_errors))


def energy_error_series(
    scheme: SplittingScheme,
    h: float,
    t_end: float,
    sample_every: int = 1,
    system: Optional[tuple[PhaseState, SystemModel]] = None,
    use_cache: bool = True,
    progress: Optional[ProgressCallback] = None,
) -> EnergySeries:
    """Integrate the Sun-Earth-Moon system (or `system`) up to t_end and reduce to errors."""
    state, model = system or build_sun_earth_moon()
    l = step_count(h, t_end)
    if l == 0:
        e0 = total_energy(state, model)
        if e0 == 0.0:
            raise DomainError("relative energy error is undefined for zero initial energy")
        return EnergySeries(
            scheme.name, float(h), np.array([0]), np.array([0.0]), np.array([e0]), np.array([0.0]), EvalCounter()
        )
    traj = integrate(scheme, state, model, h, l, sample_every=sample_every, use_cache=use_cache, progress=progress)
    return EnergySeries(
        scheme=scheme.name,
        h=traj.h,
        steps=traj.steps,
        times=traj.times,
        energies=traj.energies,
        rel_errors=traj.rel_energy_errors,
        counter=traj.counter,
    )


# ── Concurrency ──


async def _gather(jobs: Sequence[Callable[[], T]], workers: int) -> list[T]:
    loop = asyncio.get_running_loop()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [loop.run_in_executor(pool, job) for job in jobs]
        return list(await asyncio.gather(*futures))


def run_parallel(jobs: Sequence[Callable[[], T]], workers: int = 1) -> list[T]:
    """Run independent jobs, results in input order."""
    if workers <= 1 or len(jobs) <= 1:
        return [job() for job in jobs]
    return asyncio.run(_gather(jobs, workers))


# ── Convergence ──


def fit_convergence(
    scheme: str,
    h: Sequence[float],
    errors: Sequence[float],
    slope_tolerance: float = SLOPE_TOLERANCE,
) -> ConvergenceReport:
    """Fit log(error) against log(h) on the steepest consistent window.

    A window is a run of at least three consecutive step sizes over which the
    error decreases strictly with h and the local slopes agree to within
    slope_tolerance. Without a monotone window the report is flagged and unfitted.
    """
    h_arr = np.asarray(h, dtype=float)
    e_arr = np.asarray(errors, dtype=float)
    n = len(h_arr)
    if n < 4 or len(e_arr) != n:
        raise ConfigurationError(f"need at least 4 step sizes with matching errors, got {n}", field="h_grid")
    if np.any(np.diff(h_arr) >= 0):
        raise ConfigurationError("step sizes must be sorted strictly descending", field="h_grid")

    report = ConvergenceReport(scheme=scheme, h=h_arr.tolist(), max_rel_err=e_arr.tolist())
    usable = e_arr > 0
    log_h = np.log(h_arr)
    log_e = np.log(np.where(usable, e_arr, 1.0))
    # step k links points k and k + 1
    ok_step = usable[:-1] & usable[1:] & (e_arr[1:] < e_arr[:-1])
    local = np.full(n - 1, np.nan)
    local[ok_step] = (log_e[:-1] - log_e[1:])[ok_step] / (log_h[:-1] - log_h[1:])[ok_step]
    report.local_slopes = [float(s) for s in local]

    monotone: list[tuple[int, int]] = []
    for i in range(n):
        for j in range(i + MIN_WINDOW - 1, n):
            if np.all(ok_step[i:j]):
                monotone.append((i, j))
    if not monotone:
        report.flagged = True
        report.note = "no monotone window of three or more points"
        logger.warning(f"{scheme}: {report.note}; errors={e_arr.tolist()}")
        return report

    def fit(window: tuple[int, int]) -> tuple[float, float, float]:
        i, j = window
        x, y = log_h[i:j + 1], log_e[i:j + 1]
        slope, intercept = np.polyfit(x, y, 1)
        resid = y - (slope * x + intercept)
        return float(slope), float(intercept), float(np.sqrt(np.mean(resid**2)))

    consistent = [w for w in monotone if np.ptp(local[w[0]:w[1]]) <= slope_tolerance]
    if consistent:
        fits = {w: fit(w) for w in consistent}
        # slopes agreeing to 6 decimals tie; the longer window wins
        window = max(consistent, key=lambda w: (round(fits[w][0], 6), w[1] - w[0]))
    else:
        window = max(monotone, key=lambda w: (w[1] - w[0], -w[0]))
        fits = {window: fit(window)}
        report.flagged = True
        report.note = f"local slopes disagree by more than {slope_tolerance}"
        logger.warning(f"{scheme}: {report.note}; local slopes={report.local_slopes}")

    report.slope, report.intercept, report.residual = fits[window]
    report.window = window
    logger.info(f"{scheme}: slope={report.slope:.3f} on h[{window[0]}:{window[1]}], residual={report.residual:.2e}")
    return report


def convergence_order(
    scheme: SplittingScheme,
    h_list: Sequence[float] = DEFAULT_H_GRID,
    t_end: float = DEFAULT_T_END,
    system: Optional[tuple[PhaseState, SystemModel]] = None,
    workers: int = 1,
    use_cache: bool = True,
) -> ConvergenceReport:
    """Max relative energy error per h and the fitted order."""
    if len(h_list) < 4:
        raise ConfigurationError(f"need at least 4 step sizes, got {len(h_list)}", field="h_grid")
    system = system or build_sun_earth_moon()
    jobs = [
        (lambda h=h: energy_error_series(scheme, h, t_end, system=system, use_cache=use_cache).max_rel_err)
        for h in h_list
    ]
    errors = run_parallel(jobs, workers)
    return fit_convergence(scheme.name, h_list, errors)


# ── Cost vs accuracy ──


def cost_accuracy(
    schemes: Sequence[SplittingScheme],
    h_lists: Sequence[Sequence[float]] | Mapping[str, Sequence[float]],
    t_end: float = DEFAULT_T_END,
    weights: Optional[CostWeights] = None,
    system: Optional[tuple[PhaseState, SystemModel]] = None,
    workers: int = 1,
    use_cache: bool = True,
) -> list[CostRow]:
    """One row per (scheme, h): weighted logical evaluation cost and max relative error.

    Args:
        h_lists: Step sizes per scheme, either aligned with `schemes` or keyed by scheme name.
    """
    weights = weights or CostWeights()
    system = system or build_sun_earth_moon()
    if isinstance(h_lists, Mapping):
        grids = [h_lists[s.name] for s in schemes]
    else:
        if len(h_lists) != len(schemes):
            raise ConfigurationError("one step-size list per scheme is required", field="h_grid")
        grids = list(h_lists)

    def job(scheme: SplittingScheme, h: float) -> CostRow:
        t0 = time.monotonic()
        series = energy_error_series(scheme, h, t_end, system=system, use_cache=use_cache)
        row = CostRow(
            scheme=scheme.name,
            h=float(h),
            weighted_cost=series.counter.weighted(weights),
            max_rel_err=series.max_rel_err,
            counts=series.counter.as_dict(),
        )
        logger.info(f"{scheme.name} h={h}: cost={row.weighted_cost:.1f} err={row.max_rel_err:.3e} "
                    f"({time.monotonic() - t0:.2f}s)")
        return row

    jobs = [(lambda s=s, h=h: job(s, h)) for s, grid in zip(schemes, grids) for h in grid]
    return run_parallel(jobs, workers)


def matched_cost(rows: Sequence[CostRow], scheme: str, target: float = 1e-8) -> float:
    """Weighted cost needed to reach `target` max error, interpolated in log-log.

    Outside the measured error range the nearest two points are extrapolated.
    """
    pts = sorted((r.max_rel_err, r.weighted_cost) for r in rows if r.scheme == scheme and r.max_rel_err > 0)
    if len(pts) < 2:
        raise ConfigurationError(f"need at least two rows with positive error for {scheme}", field="h_grid")
    if not target > 0:
        raise ConfigurationError(f"target error must be positive, got {target}", field="target")
    log_err = np.log([p[0] for p in pts])
    log_cost = np.log([p[1] for p in pts])
    x = float(np.log(target))
    if log_err[0] <= x <= log_err[-1]:
        return float(np.exp(np.interp(x, log_err, log_cost)))
    logger.warning(f"{scheme}: target error {target:.1e} outside measured range "
                   f"[{pts[0][0]:.1e}, {pts[-1][0]:.1e}], extrapolating")
    i = 0 if x < log_err[0] else len(pts) - 2
    if log_err[i + 1] == log_err[i]:
        return float(np.exp(log_cost[i]))
    slope = (log_cost[i + 1] - log_cost[i]) / (log_err[i + 1] - log_err[i])
    return float(np.exp(log_cost[i] + slope * (x - log_err[i])))
