"""Stage-sequence splitting schemes, the named builders and the textual scheme grammar.

Grammar (rationals written as p/q, stages separated by whitespace):

    stage := K(<subset>,<b>,<c>) | D(<a>) | L(M=<m>,f=<frac>){ <stage> ... }
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, replace
from typing import Callable, Optional

import sympy

from shadowstep.errors import ConfigurationError, SchemeError
from shadowstep.models import StageKind, Subset, parse_rational

logger = logging.getLogger(__name__)

Rational = sympy.Rational

ZERO = Rational(0)
ONE = Rational(1)
HALF = Rational(1, 2)


@dataclass(frozen=True)
class Stage:
    """DRIFT(a), KICK(subset, b, c) or INNER_LOOP(scheme, M, time_fraction)."""

    kind: StageKind
    a: Rational = ZERO
    subset: Optional[Subset] = None
    b: Rational = ZERO
    c: Rational = ZERO
    inner: Optional["SplittingScheme"] = None
    repetitions: int = 1
    time_fraction: Rational = ONE

    @classmethod
    def drift(cls, a: object) -> "Stage":
        return cls(StageKind.DRIFT, a=parse_rational(a))

    @classmethod
    def kick(cls, subset: Subset, b: object, c: object = 0) -> "Stage":
        return cls(StageKind.KICK, subset=Subset(subset), b=parse_rational(b), c=parse_rational(c))

    @classmethod
    def loop(cls, inner: "SplittingScheme", repetitions: int, time_fraction: object = 1) -> "Stage":
        frac = parse_rational(time_fraction)
        if not isinstance(repetitions, int) or repetitions < 1:
            raise SchemeError(f"inner loop repetitions must be a positive integer, got {repetitions!r}")
        if not 0 < frac <= 1:
            raise SchemeError(f"inner loop time fraction must lie in (0, 1], got {frac}")
        if any(s.kind == StageKind.INNER_LOOP for s in inner.stages):
            raise SchemeError("inner loops may not contain inner loops")
        return cls(StageKind.INNER_LOOP, inner=inner, repetitions=repetitions, time_fraction=frac)


@dataclass(frozen=True)
class SplittingScheme:
    """Ordered stage list applied left to right over one step h."""

    name: str
    stages: tuple[Stage, ...]
    declared_order: int = 0

    def drift_total(self) -> Rational:
        total = ZERO
        for s in self.stages:
            if s.kind == StageKind.DRIFT:
                total += s.a
            elif s.kind == StageKind.INNER_LOOP:
                total += s.time_fraction * s.inner.drift_total()
        return total

    def kick_totals(self) -> dict[Subset, Rational]:
        """Total kick weight per subset label, inner loops weighted by their time fraction."""
        totals = {Subset.FULL: ZERO, Subset.FAST: ZERO, Subset.SLOW: ZERO}
        for s in self.stages:
            if s.kind == StageKind.KICK:
                totals[s.subset] += s.b
            elif s.kind == StageKind.INNER_LOOP:
                for k, v in s.inner.kick_totals().items():
                    totals[k] += s.time_fraction * v
        return totals

    def potential_weights(self) -> tuple[Rational, Rational]:
        """Effective weights of V1 and V2 (FULL kicks count for both)."""
        t = self.kick_totals()
        return t[Subset.FULL] + t[Subset.FAST], t[Subset.FULL] + t[Subset.SLOW]

    def check_consistency(self) -> None:
        """Raise SchemeError unless drifts and each potential sum to exactly 1."""
        if self.drift_total() != ONE:
            raise SchemeError(f"{self.name}: drift coefficients sum to {self.drift_total()}, expected 1")
        w1, w2 = self.potential_weights()
        if w1 != ONE or w2 != ONE:
            raise SchemeError(f"{self.name}: kick weights V1={w1}, V2={w2}, expected 1 each")

    @property
    def is_palindromic(self) -> bool:
        return self.stages == self.reversed().stages

    def reversed(self) -> "SplittingScheme":
        stages = []
        for s in reversed(self.stages):
            if s.kind == StageKind.INNER_LOOP:
                s = replace(s, inner=s.inner.reversed())
            stages.append(s)
        return SplittingScheme(self.name, tuple(stages), self.declared_order)

    def uses_force_gradient(self) -> bool:
        for s in self.stages:
            if s.kind == StageKind.KICK and s.c != 0:
                return True
            if s.kind == StageKind.INNER_LOOP and s.inner.uses_force_gradient():
                return True
        return False

    def subsets(self) -> set[Subset]:
        found: set[Subset] = set()
        for s in self.stages:
            if s.kind == StageKind.KICK:
                found.add(s.subset)
            elif s.kind == StageKind.INNER_LOOP:
                found |= s.inner.subsets()
        return found

    def __str__(self) -> str:
        return format_scheme(self)


# ── Builders ──


def _check_M(M: int) -> int:
    if isinstance(M, bool) or not isinstance(M, int) or M < 1:
        raise ConfigurationError(f"M must be a positive integer, got {M!r}", field="M")
    return M


def _check_lambda(lam: object) -> Rational:
    try:
        r = parse_rational(lam)
    except ValueError as e:
        raise ConfigurationError(str(e), field="lambda") from e
    if not 0 < r < HALF:
        raise ConfigurationError(f"lambda must lie in (0, 1/2), got {r}", field="lambda")
    return r


def leapfrog(kick_outside: bool = True) -> SplittingScheme:
    """Kick-drift-kick by default; drift-kick-drift when kick_outside is False."""
    if kick_outside:
        stages = (Stage.kick(Subset.FULL, HALF), Stage.drift(1), Stage.kick(Subset.FULL, HALF))
        return SplittingScheme("leapfrog", stages, 2)
    stages = (Stage.drift(HALF), Stage.kick(Subset.FULL, 1), Stage.drift(HALF))
    return SplittingScheme("leapfrog-drift", stages, 2)


def alike5(lam: object) -> SplittingScheme:
    """Five-stage single-rate family e^{lam hV} e^{hT/2} e^{(1-2 lam) hV} e^{hT/2} e^{lam hV}."""
    lam = _check_lambda(lam)
    stages = (
        Stage.kick(Subset.FULL, lam),
        Stage.drift(HALF),
        Stage.kick(Subset.FULL, 1 - 2 * lam),
        Stage.drift(HALF),
        Stage.kick(Subset.FULL, lam),
    )
    return SplittingScheme(f"alike5({lam})", stages, 2)


def omelyan5() -> SplittingScheme:
    return replace(alike5(Rational(1, 6)), name="omelyan5")


def omelyan5_fg() -> SplittingScheme:
    stages = list(omelyan5().stages)
    stages[2] = Stage.kick(Subset.FULL, Rational(2, 3), Rational(1, 72))
    return SplittingScheme("omelyan5-fg", tuple(stages), 4)


def _inner_leapfrog() -> SplittingScheme:
    stages = (Stage.kick(Subset.FAST, HALF), Stage.drift(1), Stage.kick(Subset.FAST, HALF))
    return SplittingScheme("inner-leapfrog", stages, 2)


def nested_leapfrog(M: int) -> SplittingScheme:
    M = _check_M(M)
    stages = (
        Stage.kick(Subset.SLOW, HALF),
        Stage.loop(_inner_leapfrog(), M, 1),
        Stage.kick(Subset.SLOW, HALF),
    )
    return SplittingScheme(f"nested-leapfrog(M={M})", stages, 2)


def alike5_nested(lam: object, M: int) -> SplittingScheme:
    lam = _check_lambda(lam)
    M = _check_M(M)
    inner = _inner_leapfrog()
    stages = (
        Stage.kick(Subset.SLOW, lam),
        Stage.loop(inner, M, HALF),
        Stage.kick(Subset.SLOW, 1 - 2 * lam),
        Stage.loop(inner, M, HALF),
        Stage.kick(Subset.SLOW, lam),
    )
    return SplittingScheme(f"alike5-nested(lambda={lam},M={M})", stages, 2)


def nested_force_gradient(M: int) -> SplittingScheme:
    base = alike5_nested(Rational(1, 6), M)
    stages = list(base.stages)
    stages[2] = Stage.kick(Subset.SLOW, Rational(2, 3), Rational(1, 72))
    return SplittingScheme(f"nested-fg(M={M})", tuple(stages), 4)


SCHEME_NAMES: dict[str, Callable[..., SplittingScheme]] = {
    "leapfrog": lambda M, lam: leapfrog(),
    "leapfrog-drift": lambda M, lam: leapfrog(kick_outside=False),
    "alike5": lambda M, lam: alike5(Rational(1, 6) if lam is None else lam),
    "omelyan5": lambda M, lam: omelyan5(),
    "omelyan5-fg": lambda M, lam: omelyan5_fg(),
    "nested-leapfrog": lambda M, lam: nested_leapfrog(M),
    "alike5-nested": lambda M, lam: alike5_nested(Rational(1, 6) if lam is None else lam, M),
    "nested-fg": lambda M, lam: nested_force_gradient(M),
}


def build_scheme(name: str, M: int = 30, lam: object = None) -> SplittingScheme:
    """Look up a builder by its command-line name."""
    try:
        builder = SCHEME_NAMES[name]
    except KeyError:
        raise ConfigurationError(f"unknown scheme '{name}'; known: {sorted(SCHEME_NAMES)}", field="scheme") from None
    scheme = builder(M, lam)
    scheme.check_consistency()
    logger.debug(f"built {scheme.name}: {len(scheme.stages)} stages, order {scheme.declared_order}")
    return scheme


# ── Text grammar ──


def format_scheme(scheme: SplittingScheme) -> str:
    return " ".join(_format_stage(s) for s in scheme.stages)


def _format_stage(s: Stage) -> str:
    match s.kind:
        case StageKind.DRIFT:
            return f"D({s.a})"
        case StageKind.KICK:
            return f"K({s.subset.value},{s.b},{s.c})"
        case StageKind.INNER_LOOP:
            return f"L(M={s.repetitions},f={s.time_fraction}){{ {format_scheme(s.inner)} }}"


_TOKEN = re.compile(
    r"\s*(?:"
    r"K\(\s*(?P<subset>[A-Za-z]+)\s*,\s*(?P<b>[^,()\s]+)\s*,\s*(?P<c>[^,()\s]+)\s*\)"
    r"|D\(\s*(?P<a>[^()\s]+)\s*\)"
    r"|L\(\s*M\s*=\s*(?P<m>\d+)\s*,\s*f\s*=\s*(?P<f>[^()\s]+)\s*\)\s*\{"
    r"|(?P<close>\})"
    r")"
)


def parse_scheme(text: str, name: str = "custom", declared_order: int = 0) -> SplittingScheme:
    """Inverse of `format_scheme`."""
    stages, pos, closed = _parse_stages(text, 0, depth=0)
    if closed or text[pos:].strip():
        raise SchemeError(f"unexpected text at offset {pos}: {text[pos:pos + 20]!r}")
    return SplittingScheme(name, tuple(stages), declared_order)


def _parse_stages(text: str, pos: int, depth: int) -> tuple[list[Stage], int, bool]:
    stages: list[Stage] = []
    while pos < len(text) and text[pos:].strip():
        m = _TOKEN.match(text, pos)
        if m is None:
            raise SchemeError(f"cannot parse scheme text at offset {pos}: {text[pos:pos + 20]!r}")
        pos = m.end()
        try:
            if m.group("close"):
                if depth == 0:
                    raise SchemeError(f"unbalanced '}}' at offset {m.start()}")
                return stages, pos, True
            if m.group("subset"):
                try:
                    subset = Subset(m.group("subset").upper())
                except ValueError:
                    raise SchemeError(f"unknown subset {m.group('subset')!r}") from None
                stages.append(Stage.kick(subset, m.group("b"), m.group("c")))
            elif m.group("a"):
                stages.append(Stage.drift(m.group("a")))
            else:
                if depth > 0:
                    raise SchemeError("inner loops may not contain inner loops")
                inner, pos, closed = _parse_stages(text, pos, depth + 1)
                if not closed:
                    raise SchemeError("inner loop is missing its closing '}'")
                inner_scheme = SplittingScheme("inner", tuple(inner), 0)
                stages.append(Stage.loop(inner_scheme, int(m.group("m")), m.group("f")))
        except ValueError as e:
            raise SchemeError(f"bad coefficient in scheme text: {e}") from e
    return stages, pos, False
