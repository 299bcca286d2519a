"""Truncated noncommutative series over {T, V1, V2} with exact coefficients.

A word of length k stands for a product of k operators and carries h^k, so the
word length is the h-grade. Coefficients are sympy Rationals, or polynomials in
sympy symbols when a scheme parameter is left symbolic.
"""

from __future__ import annotations

from typing import Iterable, Iterator, Mapping, Union

import sympy

from shadowstep.errors import SeriesError


Word = tuple[str, ...]
Coeff = sympy.Expr

ALPHABET = ("T", "V1", "V2")
DEFAULT_MAX_DEGREE = 4
MAX_SUPPORTED_DEGREE = 6

Scalar = Union[int, sympy.Expr]


def _clean(c: Scalar) -> Coeff:
    c = sympy.sympify(c)
    if isinstance(c, sympy.Rational):
        return c
    return sympy.expand(c)


def normal_order(word: Word) -> Word:
    """Rewrite V2 V1 -> V1 V2 until no V2 directly precedes V1."""
    out: list[str] = []
    run: list[str] = []
    for letter in word:
        if letter == "T":
            out.extend(sorted(run))
            run.clear()
            out.append(letter)
        else:
            run.append(letter)
    out.extend(sorted(run))
    return tuple(out)


class NcSeries:
    """Immutable map word -> nonzero coefficient, truncated at max_degree.

    With commuting=True every word is kept in normal order, which realises the
    quotient by [V1, V2] = 0.
    """

    __slots__ = ("_terms", "max_degree", "commuting")

    def __init__(
        self,
        terms: Mapping[Word, Scalar] | Iterable[tuple[Word, Scalar]] = (),
        max_degree: int = DEFAULT_MAX_DEGREE,
        commuting: bool = False,
    ) -> None:
        if not 0 <= max_degree <= MAX_SUPPORTED_DEGREE:
            raise SeriesError(f"max_degree must lie in 0..{MAX_SUPPORTED_DEGREE}, got {max_degree}")
        self.max_degree = max_degree
        self.commuting = commuting
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[Word, Coeff] = {}
        for word, c in items:
            word = tuple(word)
            for letter in word:
                if letter not in ALPHABET:
                    raise SeriesError(f"unknown symbol {letter!r} in word {word}")
            if len(word) > max_degree:
                raise SeriesError(f"word {word} is longer than max_degree {max_degree}")
            if commuting:
                word = normal_order(word)
            acc[word] = acc.get(word, 0) + sympy.sympify(c)
        self._terms = {w: v for w, v in ((w, _clean(c)) for w, c in acc.items()) if v != 0}

    # ── constructors ──

    @classmethod
    def zero(cls, max_degree: int = DEFAULT_MAX_DEGREE, commuting: bool = False) -> "NcSeries":
        return cls({}, max_degree, commuting)

    @classmethod
    def one(cls, max_degree: int = DEFAULT_MAX_DEGREE, commuting: bool = False) -> "NcSeries":
        return cls({(): 1}, max_degree, commuting)

    @classmethod
    def symbol(cls, letter: str, coeff: Scalar = 1, max_degree: int = DEFAULT_MAX_DEGREE,
               commuting: bool = False) -> "NcSeries":
        return cls({(letter,): coeff}, max_degree, commuting)

    def _like(self, terms: Mapping[Word, Scalar], max_degree: int | None = None) -> "NcSeries":
        return NcSeries(terms, self.max_degree if max_degree is None else max_degree, self.commuting)

    def _compatible(self, other: "NcSeries") -> int:
        if self.commuting != other.commuting:
            raise SeriesError("cannot combine series from different relation sets")
        return min(self.max_degree, other.max_degree)

    # ── access ──

    def items(self) -> Iterator[tuple[Word, Coeff]]:
        """Terms sorted by grade, then lexicographically by word."""
        return iter(sorted(self._terms.items(), key=lambda kv: (len(kv[0]), kv[0])))

    def coefficient(self, word: Iterable[str]) -> Coeff:
        word = tuple(word)
        if self.commuting:
            word = normal_order(word)
        return self._terms.get(word, sympy.Integer(0))

    def grade(self, k: int) -> "NcSeries":
        return self._like({w: c for w, c in self._terms.items() if len(w) == k})

    def grades(self) -> list[int]:
        return sorted({len(w) for w in self._terms})

    def is_zero(self) -> bool:
        return not self._terms

    def __len__(self) -> int:
        return len(self._terms)

    def __bool__(self) -> bool:
        return bool(self._terms)

    def truncated(self, max_degree: int) -> "NcSeries":
        return NcSeries({w: c for w, c in self._terms.items() if len(w) <= max_degree}, max_degree, self.commuting)

    def subs(self, *args, **kwargs) -> "NcSeries":
        """Substitute values for symbolic coefficient parameters."""
        return self._like({w: sympy.sympify(c).subs(*args, **kwargs) for w, c in self._terms.items()})

    # ── arithmetic ──

    def __add__(self, other: "NcSeries | Scalar") -> "NcSeries":
        if not isinstance(other, NcSeries):
            other = self._like({(): other})
        deg = self._compatible(other)
        acc = {w: c for w, c in self._terms.items() if len(w) <= deg}
        for w, c in other._terms.items():
            if len(w) <= deg:
                acc[w] = acc.get(w, 0) + c
        return self._like(acc, deg)

    __radd__ = __add__

    def __neg__(self) -> "NcSeries":
        return self._like({w: -c for w, c in self._terms.items()})

    def __sub__(self, other: "NcSeries | Scalar") -> "NcSeries":
        return self + (-other)

    def __rsub__(self, other: Scalar) -> "NcSeries":
        return (-self) + other

    def __mul__(self, other: "NcSeries | Scalar") -> "NcSeries":
        if not isinstance(other, NcSeries):
            s = sympy.sympify(other)
            return self._like({w: c * s for w, c in self._terms.items()})
        deg = self._compatible(other)
        acc: dict[Word, Coeff] = {}
        right = list(other._terms.items())
        for wa, ca in self._terms.items():
            room = deg - len(wa)
            if room < 0:
                continue
            for wb, cb in right:
                if len(wb) > room:
                    continue
                w = wa + wb
                if self.commuting:
                    w = normal_order(w)
                acc[w] = acc.get(w, 0) + ca * cb
        return self._like(acc, deg)

    def __rmul__(self, other: Scalar) -> "NcSeries":
        return self * other

    def __truediv__(self, other: Scalar) -> "NcSeries":
        return self * (sympy.Integer(1) / sympy.sympify(other))

    def __eq__(self, other: object) -> bool:
        if isinstance(other, NcSeries):
            return (self - other).is_zero()
        if other == 0:
            return self.is_zero()
        return NotImplemented

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return f"NcSeries({self}, max_degree={self.max_degree}, commuting={self.commuting})"

    def __str__(self) -> str:
        return format_words(self)


def commutator(a: NcSeries, b: NcSeries) -> NcSeries:
    """[a, b] = a b - b a."""
    return a * b - b * a


def exp_truncated(x: NcSeries) -> NcSeries:
    """sum_k x^k / k! truncated at x.max_degree."""
    if x.coefficient(()) != 0:
        raise SeriesError("exp_truncated needs a series without grade-0 part")
    result = NcSeries.one(x.max_degree, x.commuting)
    term = NcSeries.one(x.max_degree, x.commuting)
    for k in range(1, x.max_degree + 1):
        term = (term * x) * sympy.Rational(1, k)
        if term.is_zero():
            break
        result = result + term
    return result


def log_truncated(p: NcSeries) -> NcSeries:
    """log(1 + y) = sum_k (-1)^(k+1) y^k / k with y = p - 1, truncated."""
    if p.coefficient(()) != 1:
        raise SeriesError(f"log_truncated needs grade-0 coefficient 1, got {p.coefficient(())}")
    y = p - 1
    result = NcSeries.zero(p.max_degree, p.commuting)
    power = NcSeries.one(p.max_degree, p.commuting)
    for k in range(1, p.max_degree + 1):
        power = power * y
        if power.is_zero():
            break
        result = result + power * sympy.Rational((-1) ** (k + 1), k)
    return result


def format_coeff(c: Coeff) -> str:
    """Exact text for a coefficient: p/q for rationals."""
    if isinstance(c, sympy.Rational):
        return str(c)
    return f"({sympy.sstr(c)})"


def format_words(s: NcSeries, names: Mapping[str, str] | None = None) -> str:
    """Word-sum text such as `1/2 * T V1 - 1/2 * V1 T`; `0` for the empty series."""
    if s.is_zero():
        return "0"
    names = names or {}
    parts: list[str] = []
    for word, c in s.items():
        text = " ".join(names.get(x, x) for x in word) or "1"
        negative = isinstance(c, sympy.Rational) and c < 0
        mag = -c if negative else c
        body = text if mag == 1 and word else f"{format_coeff(mag)} * {text}" if word else format_coeff(mag)
        sign = "-" if negative else "+"
        parts.append(f"{sign} {body}")
    out = " ".join(parts)
    return out[2:] if out.startswith("+ ") else "-" + out[2:]
