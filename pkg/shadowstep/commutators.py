"""Rational-linear combinations of nested commutators, with a bracket-text parser.

Text form: `-1/72 * [V2,[T,V2]] + 1/12 [V1,[T,V2]]`. A bare `V` means V1, and
`0` is the empty combination.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Union

import sympy

from shadowstep.errors import SeriesError
from shadowstep.ncseries import ALPHABET, NcSeries, commutator, format_coeff

Tree = Union[str, tuple["Tree", "Tree"]]

ALIASES = {"V": "V1"}


def tree_degree(tree: Tree) -> int:
    if isinstance(tree, str):
        return 1
    return tree_degree(tree[0]) + tree_degree(tree[1])


def format_tree(tree: Tree, names: Mapping[str, str] | None = None) -> str:
    if isinstance(tree, str):
        return (names or {}).get(tree, tree)
    return f"[{format_tree(tree[0], names)},{format_tree(tree[1], names)}]"


@dataclass(frozen=True)
class CommutatorExpr:
    """Sum of coeff * tree terms; leaves are T, V1, V2."""

    terms: tuple[tuple[sympy.Expr, Tree], ...] = ()

    @classmethod
    def of(cls, *terms: tuple[object, Tree]) -> "CommutatorExpr":
        return cls(tuple((sympy.sympify(c), _check_tree(t)) for c, t in terms))

    @classmethod
    def parse(cls, text: str) -> "CommutatorExpr":
        return _Parser(text).parse()

    def __add__(self, other: "CommutatorExpr") -> "CommutatorExpr":
        return CommutatorExpr(self.terms + other.terms)

    def __neg__(self) -> "CommutatorExpr":
        return CommutatorExpr(tuple((-c, t) for c, t in self.terms))

    def __sub__(self, other: "CommutatorExpr") -> "CommutatorExpr":
        return self + (-other)

    def scaled(self, factor: object) -> "CommutatorExpr":
        f = sympy.sympify(factor)
        return CommutatorExpr(tuple((c * f, t) for c, t in self.terms))

    def substituted(self, mapping: Mapping[str, "CommutatorExpr | str"]) -> "CommutatorExpr":
        """Replace leaves by linear combinations of symbols, e.g. T -> T + V1."""
        out: list[tuple[sympy.Expr, Tree]] = []
        for c, t in self.terms:
            for c2, t2 in _substitute(t, mapping):
                out.append((c * c2, t2))
        return CommutatorExpr(tuple(out))

    def degrees(self) -> list[int]:
        return sorted({tree_degree(t) for _, t in self.terms})

    def is_empty(self) -> bool:
        return not self.terms

    def expand(self, max_degree: int = 4, commuting: bool = False) -> NcSeries:
        """Expand brackets into a word sum: [a, b] -> a b - b a."""
        total = NcSeries.zero(max_degree, commuting)
        for c, t in self.terms:
            if tree_degree(t) > max_degree:
                raise SeriesError(f"term {format_tree(t)} exceeds max_degree {max_degree}")
            total = total + _expand_tree(t, max_degree, commuting) * c
        return total

    def format(self, names: Mapping[str, str] | None = None) -> str:
        if not self.terms:
            return "0"
        parts: list[str] = []
        for c, t in self.terms:
            negative = isinstance(c, sympy.Rational) and c < 0
            mag = -c if negative else c
            body = format_tree(t, names) if mag == 1 else f"{format_coeff(mag)} * {format_tree(t, names)}"
            parts.append(("- " if negative else "+ ") + body)
        out = " ".join(parts)
        return out[2:] if out.startswith("+ ") else "-" + out[2:]

    def __str__(self) -> str:
        return self.format()


def _check_tree(t: Tree) -> Tree:
    if isinstance(t, str):
        t = ALIASES.get(t, t)
        if t not in ALPHABET:
            raise SeriesError(f"unknown symbol {t!r}")
        return t
    if not (isinstance(t, tuple) and len(t) == 2):
        raise SeriesError(f"malformed commutator {t!r}")
    return (_check_tree(t[0]), _check_tree(t[1]))


def _expand_tree(t: Tree, max_degree: int, commuting: bool) -> NcSeries:
    if isinstance(t, str):
        return NcSeries.symbol(t, 1, max_degree, commuting)
    return commutator(_expand_tree(t[0], max_degree, commuting), _expand_tree(t[1], max_degree, commuting))


def _substitute(t: Tree, mapping: Mapping[str, "CommutatorExpr | str"]) -> list[tuple[sympy.Expr, Tree]]:
    if isinstance(t, str):
        repl = mapping.get(t)
        if repl is None:
            return [(sympy.Integer(1), t)]
        if isinstance(repl, str):
            repl = CommutatorExpr.parse(repl)
        return list(repl.terms)
    left = _substitute(t[0], mapping)
    right = _substitute(t[1], mapping)
    return [(ca * cb, (ta, tb)) for ca, ta in left for cb, tb in right]


_TOKENS = re.compile(r"\s*(?:(?P<num>\d+(?:/\d+)?)|(?P<sym>V1|V2|T|V)|(?P<op>[\[\],+\-*·]))")


class _Parser:
    """expr := [sign] term ((+|-) term)* ; term := [rational [*]] node ; node := symbol | [node,node]"""

    def __init__(self, text: str) -> None:
        self.text = text
        self.tokens: list[tuple[str, str]] = []
        pos = 0
        while pos < len(text):
            if text[pos:].strip() == "":
                break
            m = _TOKENS.match(text, pos)
            if m is None:
                raise SeriesError(f"cannot parse commutator text at offset {pos}: {text[pos:pos + 20]!r}")
            kind = m.lastgroup
            self.tokens.append((kind, m.group(kind)))
            pos = m.end()
        self.i = 0

    def _peek(self) -> tuple[str, str] | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def _take(self, value: str | None = None) -> tuple[str, str]:
        tok = self._peek()
        if tok is None or (value is not None and tok[1] != value):
            raise SeriesError(f"expected {value or 'more input'} in {self.text!r}")
        self.i += 1
        return tok

    def parse(self) -> CommutatorExpr:
        if [t[1] for t in self.tokens] == ["0"]:
            return CommutatorExpr()
        terms: list[tuple[sympy.Expr, Tree]] = []
        sign = 1
        if self._peek() and self._peek()[1] in "+-":
            sign = -1 if self._take()[1] == "-" else 1
        terms.append(self._term(sign))
        while self._peek() is not None:
            op = self._take()[1]
            if op not in "+-":
                raise SeriesError(f"expected '+' or '-' in {self.text!r}, got {op!r}")
            terms.append(self._term(-1 if op == "-" else 1))
        return CommutatorExpr(tuple(terms))

    def _term(self, sign: int) -> tuple[sympy.Expr, Tree]:
        coeff = sympy.Integer(sign)
        tok = self._peek()
        if tok is not None and tok[0] == "num":
            coeff *= sympy.Rational(self._take()[1])
            if self._peek() is not None and self._peek()[1] in "*·":
                self._take()
        return coeff, self._node()

    def _node(self) -> Tree:
        tok = self._take()
        if tok[0] == "sym":
            return ALIASES.get(tok[1], tok[1])
        if tok[1] != "[":
            raise SeriesError(f"expected a symbol or '[' in {self.text!r}, got {tok[1]!r}")
        left = self._node()
        self._take(",")
        right = self._node()
        self._take("]")
        return (left, right)

