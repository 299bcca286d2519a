"""Shadow Hamiltonians of splitting schemes by truncated exact BCH, and claim checks.

A scheme step is the product of stage exponentials e^{X_1} ... e^{X_n} with
X = a h T for a drift and X = b h V_S + c h^3 [V_S,[T,V_S]] for a kick. The
shadow log is log of that product; its grade-k part carries h^k, so grade 1 is
h(T + V1 + V2) for a consistent scheme.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional

import sympy

from shadowstep.commutators import CommutatorExpr, Tree
from shadowstep.errors import SchemeError, SeriesError
from shadowstep.models import StageKind, Subset
from shadowstep.ncseries import (
    DEFAULT_MAX_DEGREE,
    NcSeries,
    exp_truncated,
    format_words,
    log_truncated,
)
from shadowstep.schemes import SplittingScheme

logger = logging.getLogger(__name__)

SINGLE_NAMES = {"V1": "V"}


@dataclass(frozen=True)
class SymbolicScheme:
    """Ordered exponents of one step, ready for the truncated BCH product."""

    name: str
    exponents: tuple[NcSeries, ...]
    commuting: bool = False
    max_degree: int = DEFAULT_MAX_DEGREE
    single_potential: bool = False

    @property
    def names(self) -> dict[str, str]:
        return SINGLE_NAMES if self.single_potential else {}

    def hamiltonian(self) -> NcSeries:
        """T + V1 + V2, or T + V for a single potential."""
        letters = ("T", "V1") if self.single_potential else ("T", "V1", "V2")
        return NcSeries({(x,): 1 for x in letters}, self.max_degree, self.commuting)


def _potential(subset: Subset, single: bool, deg: int, commuting: bool) -> NcSeries:
    match subset:
        case Subset.FAST:
            letters = ("V1",)
        case Subset.SLOW:
            letters = ("V2",)
        case _:
            letters = ("V1",) if single else ("V1", "V2")
    return NcSeries({(x,): 1 for x in letters}, deg, commuting)


def _double_bracket(v: NcSeries, t: NcSeries) -> NcSeries:
    inner = t * v - v * t
    return v * inner - inner * v


def from_scheme(
    scheme: SplittingScheme,
    max_degree: int = DEFAULT_MAX_DEGREE,
    commuting: bool = False,
    single_potential: Optional[bool] = None,
) -> SymbolicScheme:
    """Translate the stage list exactly; inner loops are unrolled for their concrete M.

    Adjacent drifts, and adjacent kicks on the same subset without a gradient
    term, are merged since their exponents commute.

    Args:
        single_potential: Render FULL as one symbol V (stored as V1). Defaults to
            True when the scheme kicks only on FULL.
    """
    if single_potential is None:
        single_potential = scheme.subsets() <= {Subset.FULL}
    if single_potential and scheme.subsets() - {Subset.FULL}:
        raise SchemeError(f"{scheme.name}: single_potential needs FULL kicks only")
    if max_degree < 3 and scheme.uses_force_gradient():
        logger.debug(f"{scheme.name}: force-gradient terms lie above max_degree {max_degree} and are dropped")

    t = NcSeries.symbol("T", 1, max_degree, commuting)
    exponents: list[NcSeries] = []
    pending: list = [None, sympy.Integer(0)]

    def flush() -> None:
        key, coeff = pending
        if key is not None and coeff != 0:
            base = t if key == "T" else _potential(key, single_potential, max_degree, commuting)
            exponents.append(base * coeff)
        pending[0], pending[1] = None, sympy.Integer(0)

    def push(key, coeff) -> None:
        if pending[0] != key:
            flush()
            pending[0] = key
        pending[1] += coeff

    def walk(s: SplittingScheme, scale: sympy.Rational) -> None:
        for stage in s.stages:
            match stage.kind:
                case StageKind.DRIFT:
                    push("T", stage.a * scale)
                case StageKind.KICK if stage.c == 0:
                    push(stage.subset, stage.b * scale)
                case StageKind.KICK:
                    flush()
                    v = _potential(stage.subset, single_potential, max_degree, commuting)
                    x = v * (stage.b * scale)
                    if max_degree >= 3:
                        x = x + _double_bracket(v, t) * (stage.c * scale**3)
                    exponents.append(x)
                case StageKind.INNER_LOOP:
                    sub = scale * stage.time_fraction / stage.repetitions
                    for _ in range(stage.repetitions):
                        walk(stage.inner, sub)

    walk(scheme, sympy.Integer(1))
    flush()
    return SymbolicScheme(scheme.name, tuple(exponents), commuting, max_degree, single_potential)


def alike5_limit(
    lam: object,
    force_gradient: bool = False,
    max_degree: int = DEFAULT_MAX_DEGREE,
    commuting: bool = False,
) -> SymbolicScheme:
    """Nested five-stage scheme with its inner integration of T + V1 taken exact.

    e^{lam V2} e^{(T+V1)/2} e^{(1-2 lam) V2 [+ 1/72 [V2,[T,V2]]]} e^{(T+V1)/2} e^{lam V2}

    lam may be a rational or a sympy symbol.
    """
    lam = sympy.sympify(lam)
    v2 = NcSeries.symbol("V2", 1, max_degree, commuting)
    half_flow = NcSeries({("T",): sympy.Rational(1, 2), ("V1",): sympy.Rational(1, 2)}, max_degree, commuting)
    middle = v2 * (1 - 2 * lam)
    if force_gradient and max_degree >= 3:
        t = NcSeries.symbol("T", 1, max_degree, commuting)
        middle = middle + _double_bracket(v2, t) * sympy.Rational(1, 72)
    exponents = tuple(x for x in (v2 * lam, half_flow, middle, half_flow, v2 * lam) if not x.is_zero())
    name = f"{'fg' if force_gradient else 'alike5'}-limit(lambda={lam})"
    return SymbolicScheme(name, exponents, commuting, max_degree)


def shadow_log(scheme: SymbolicScheme) -> NcSeries:
    """log(prod_i exp(X_i)), with the grade-1 part checked against T + V1 + V2."""
    product = NcSeries.one(scheme.max_degree, scheme.commuting)
    for x in scheme.exponents:
        product = product * exp_truncated(x)
    result = log_truncated(product)
    expected = scheme.hamiltonian().grade(1)
    if result.grade(1) != expected:
        raise SchemeError(
            f"{scheme.name}: grade-1 part {format_words(result.grade(1), scheme.names)} "
            f"differs from {format_words(expected, scheme.names)}"
        )
    logger.debug(f"{scheme.name}: shadow log has {len(result)} words up to grade {scheme.max_degree}")
    return result


def verify_claim(
    scheme: SymbolicScheme,
    claims: Mapping[int, CommutatorExpr],
    grades: Optional[Iterable[int]] = None,
    log: Optional[NcSeries] = None,
) -> NcSeries:
    """shadow_log - H - sum_g expand(claims[g]); empty when the claims hold exactly.

    Args:
        grades: Restrict the residual to these grades (default 2..max_degree).
        log: Precomputed shadow_log of the same scheme.
    """
    if log is None:
        log = shadow_log(scheme)
    residual = log - scheme.hamiltonian()
    for g, expr in claims.items():
        if expr.degrees() not in ([], [g]):
            raise SeriesError(f"claim for grade {g} has bracket degrees {expr.degrees()}")
        if g <= scheme.max_degree:
            residual = residual - expr.expand(scheme.max_degree, scheme.commuting)
    keep = range(2, scheme.max_degree + 1) if grades is None else grades
    out = NcSeries.zero(scheme.max_degree, scheme.commuting)
    for g in keep:
        out = out + residual.grade(g)
    return out


# ── Claims ──


def leapfrog_drift_claim() -> CommutatorExpr:
    """e^{T/2} e^{V} e^{T/2}: -(1/24)(2[V,[T,V]] + [T,[T,V]])."""
    return CommutatorExpr.parse("-1/12 [V,[T,V]] - 1/24 [T,[T,V]]")


def leapfrog_kick_claim(v: str = "V") -> CommutatorExpr:
    """e^{V/2} e^{T} e^{V/2}: -(1/24)[V,[V,T]] + (1/12)[T,[T,V]]."""
    return CommutatorExpr.parse(f"-1/24 [{v},[{v},T]] + 1/12 [T,[T,{v}]]")


def alike5_claim(lam: object) -> CommutatorExpr:
    """Single-rate five-stage family: (6 lam - 1)/24 [T,[T,V]] + (-1 + 6 lam - 6 lam^2)/12 [V,[T,V]]."""
    lam = sympy.sympify(lam)
    return CommutatorExpr.of(
        ((6 * lam - 1) / 24, ("T", ("T", "V1"))),
        ((-1 + 6 * lam - 6 * lam**2) / 12, ("V1", ("T", "V1"))),
    )


def nested_limit_claim(lam: object) -> CommutatorExpr:
    """alike5_claim with T -> T + V1 and V -> V2, expanded over the six double brackets."""
    lam = sympy.sympify(lam)
    a = (-1 + 6 * lam - 6 * lam**2) / 12
    b = (-1 + 6 * lam) / 24
    return CommutatorExpr.of(
        (a, ("V2", ("V1", "V2"))),
        (a, ("V2", ("T", "V2"))),
        (b, ("V1", ("T", "V2"))),
        (b, ("V1", ("V1", "V2"))),
        (b, ("T", ("V1", "V2"))),
        (b, ("T", ("T", "V2"))),
    )


def inner_error(M: int, scale: object = 1) -> CommutatorExpr:
    """Grade-3 log of M inner leapfrog substeps on T + V1 spanning `scale` of the step."""
    factor = sympy.sympify(scale) ** 3 / sympy.Integer(M) ** 2
    return leapfrog_kick_claim("V1").scaled(factor)


def nested_leapfrog_claim(M: int, commuting: bool = False) -> CommutatorExpr:
    """Grade-3 log of the nested leapfrog at finite M.

    -(1/24)[V2,[V2,T]] + (1/12)[V1,[T,V2]] + (1/12)[T,[T,V2]] + (1/M^2)(-(1/24)[V1,[V1,T]] + (1/12)[T,[T,V1]]),
    plus the [V1,V2] terms unless the potentials commute.
    """
    claim = CommutatorExpr.parse("-1/24 [V2,[V2,T]] + 1/12 [V1,[T,V2]] + 1/12 [T,[T,V2]]") + inner_error(M)
    if not commuting:
        claim = claim + CommutatorExpr.parse("-1/24 [V2,[V2,V1]] + 1/12 [T,[V1,V2]] + 1/12 [V1,[V1,V2]]")
    return claim


def alike5_nested_claim(lam: object, M: int) -> CommutatorExpr:
    """Limit claim plus the two half-step inner loops' error, E3 / (4 M^2)."""
    return nested_limit_claim(lam) + inner_error(M, sympy.Rational(1, 2)).scaled(2)


def nested_fg_claim(M: int) -> CommutatorExpr:
    """-(1/72)[V2,[V1,V2]] + E3 / (4 M^2); the [V1,V2] term drops when the potentials commute."""
    return CommutatorExpr.parse("-1/72 [V2,[V1,V2]]") + inner_error(M, sympy.Rational(1, 2)).scaled(2)


def force_gradient_split_identity(max_degree: int = 3) -> NcSeries:
    """[V,[T,V]] with V = V1 + V2 minus its four-commutator expansion; empty when exact."""
    v = NcSeries({("V1",): 1, ("V2",): 1}, max_degree)
    t = NcSeries.symbol("T", 1, max_degree)
    split = CommutatorExpr.parse("[V1,[T,V1]] + [V1,[T,V2]] + [V2,[T,V1]] + [V2,[T,V2]]")
    return _double_bracket(v, t) - split.expand(max_degree)


@dataclass(frozen=True)
class Claim:
    """A named shadow-Hamiltonian statement: expected grade parts of one scheme."""

    key: str
    description: str
    build: Callable[[], SymbolicScheme]
    expected: dict[int, CommutatorExpr] = field(default_factory=dict)
    grades: tuple[int, ...] = (2, 3, 4)

    def residual(self) -> NcSeries:
        scheme = self.build()
        grades = tuple(g for g in self.grades if g <= scheme.max_degree)
        return verify_claim(scheme, self.expected, grades)


def known_claim(scheme: SplittingScheme, M: int, lam: object, commuting: bool = False) -> dict[int, CommutatorExpr]:
    """Grade-3 claim for a registry scheme; even grades vanish for all of them."""
    base = scheme.name.split("(")[0]
    lam = sympy.Rational(1, 6) if lam is None else sympy.sympify(lam)
    match base:
        case "leapfrog":
            claim = leapfrog_kick_claim()
        case "leapfrog-drift":
            claim = leapfrog_drift_claim()
        case "alike5":
            claim = alike5_claim(lam)
        case "omelyan5":
            claim = alike5_claim(sympy.Rational(1, 6))
        case "omelyan5-fg":
            claim = CommutatorExpr()
        case "nested-leapfrog":
            claim = nested_leapfrog_claim(M, commuting)
        case "alike5-nested":
            claim = alike5_nested_claim(lam, M)
        case "nested-fg":
            claim = nested_fg_claim(M)
        case _:
            return {}
    return {3: claim}


def certified_claims(max_degree: int = DEFAULT_MAX_DEGREE) -> list[Claim]:
    """Every shadow-Hamiltonian statement this package certifies."""
    from shadowstep import schemes

    sixth = sympy.Rational(1, 6)
    claims = [
        Claim(
            "leapfrog-drift",
            "position-outside leapfrog: H - (h^2/24)(2[V,[T,V]] + [T,[T,V]])",
            lambda: from_scheme(schemes.leapfrog(kick_outside=False), max_degree),
            {3: leapfrog_drift_claim()},
        ),
        Claim(
            "leapfrog",
            "kick-outside leapfrog: H - (h^2/24)[V,[V,T]] + (h^2/12)[T,[T,V]]",
            lambda: from_scheme(schemes.leapfrog(), max_degree),
            {3: leapfrog_kick_claim()},
        ),
        Claim(
            "omelyan5",
            "five-stage scheme: H - [V,[T,V]] h^2/72",
            lambda: from_scheme(schemes.omelyan5(), max_degree),
            {3: CommutatorExpr.parse("-1/72 [V,[T,V]]")},
        ),
        Claim(
            "omelyan5-fg",
            "force-gradient five-stage scheme: H + O(h^4)",
            lambda: from_scheme(schemes.omelyan5_fg(), max_degree),
        ),
    ]
    for lam in ("1/6", "1/4", "1/3", "1/2"):
        r = sympy.Rational(lam)
        claims.append(Claim(
            f"nested-limit(lambda={lam})",
            "alike five-stage nested scheme, inner flow exact",
            lambda r=r: alike5_limit(r, max_degree=max_degree),
            {3: nested_limit_claim(r)},
        ))
    claims += [
        Claim(
            "nested-limit-commuting(lambda=1/6)",
            "with [V1,V2] = 0: H - (1/72)[V2,[T,V2]] h^2",
            lambda: alike5_limit(sixth, max_degree=max_degree, commuting=True),
            {3: CommutatorExpr.parse("-1/72 [V2,[T,V2]]")},
        ),
        Claim(
            "nested-fg-limit-commuting",
            "nested force-gradient scheme, inner flow exact, [V1,V2] = 0: H + O(h^4)",
            lambda: alike5_limit(sixth, force_gradient=True, max_degree=max_degree, commuting=True),
        ),
    ]
    for M in (1, 2, 3):
        claims.append(Claim(
            f"nested-leapfrog(M={M})",
            "nested leapfrog with [V1,V2] = 0, 1/M^2 inner error",
            lambda M=M: from_scheme(schemes.nested_leapfrog(M), max_degree, commuting=True),
            {3: nested_leapfrog_claim(M, commuting=True)},
        ))
    return claims


# ── Text output ──


def _right_nested(letters: tuple[str, ...], degree: int) -> list[Tree]:
    """[x1,[x2,...,[x_{k-1},x_k]]] with x_{k-1} < x_k; outer letters above the inner pair go last."""
    if degree == 1:
        return list(letters)
    pairs = [(a, b) for i, a in enumerate(letters) for b in letters[i + 1:]]
    if degree == 2:
        return list(pairs)
    trees: list[Tree] = list(pairs)
    for _ in range(degree - 2):
        trees = [(x, t) for t in trees for x in letters]
    rank = {x: i for i, x in enumerate(letters)}

    def late(t: Tree) -> bool:
        outer, inner = t
        while not isinstance(inner[1], str):
            inner = inner[1]
        return rank[outer] > max(rank[inner[0]], rank[inner[1]])

    return [t for t in trees if not late(t)] + [t for t in trees if late(t)]


def project_onto_brackets(part: NcSeries, letters: tuple[str, ...], degree: int) -> Optional[CommutatorExpr]:
    """Write a homogeneous Lie element as a combination of right-nested brackets.

    Returns None when the part is not in their span.
    """
    if part.is_zero():
        return CommutatorExpr()
    candidates = _right_nested(letters, degree)
    expanded = [CommutatorExpr.of((1, t)).expand(part.max_degree, part.commuting) for t in candidates]
    words = sorted({w for s in expanded for w, _ in s.items()} | {w for w, _ in part.items()})
    columns = [[s.coefficient(w) for w in words] for s in expanded] + [[part.coefficient(w) for w in words]]
    matrix = sympy.Matrix(len(words), len(columns), lambda i, j: columns[j][i])
    reduced, pivots = matrix.rref()
    if len(columns) - 1 in pivots:
        return None
    terms = []
    for row, col in enumerate(pivots):
        c = reduced[row, len(columns) - 1]
        if c != 0:
            terms.append((c, candidates[col]))
    return CommutatorExpr.of(*terms)


def format_series_as_claim(part: NcSeries, degree: int, single_potential: bool = False) -> str:
    """Exact text of one grade part: a bracket combination when possible, otherwise a word sum."""
    letters = ("T", "V1") if single_potential else ("T", "V1", "V2")
    names = SINGLE_NAMES if single_potential else None
    if degree >= 2:
        expr = project_onto_brackets(part, letters, degree)
        if expr is not None:
            return expr.format(names)
    return format_words(part, names)

