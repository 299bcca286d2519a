import pytest
import sympy

from shadowstep.commutators import CommutatorExpr
from shadowstep.errors import SchemeError, SeriesError
from shadowstep.schemes import (
    SCHEME_NAMES,
    alike5_nested,
    build_scheme,
    leapfrog,
    nested_leapfrog,
    omelyan5,
    omelyan5_fg,
    parse_scheme,
)
from shadowstep.shadow import (
    alike5_limit,
    certified_claims,
    force_gradient_split_identity,
    format_series_as_claim,
    from_scheme,
    inner_error,
    known_claim,
    leapfrog_drift_claim,
    nested_leapfrog_claim,
    nested_limit_claim,
    shadow_log,
    verify_claim,
)

from tests.test_schemes import all_builders

R = sympy.Rational
LAMBDAS = [R(1, 6), R(1, 4), R(1, 3), R(1, 2)]


def grade3(expr: str, max_degree: int = 4, commuting: bool = False):
    return CommutatorExpr.parse(expr).expand(max_degree, commuting)


def test_position_outside_leapfrog():
    scheme = from_scheme(leapfrog(kick_outside=False))
    assert scheme.single_potential
    assert verify_claim(scheme, {3: leapfrog_drift_claim()}).is_zero()
    log = shadow_log(scheme)
    assert log.grade(3) == grade3("-1/24 [T,[T,V]] - 1/12 [V,[T,V]]")


def test_five_stage_scheme_error_term():
    log = shadow_log(from_scheme(omelyan5()))
    assert log.grade(2).is_zero()
    assert log.grade(3) == grade3("-1/72 [V,[T,V]]")
    assert log.grade(4).is_zero()


def test_force_gradient_scheme_is_fourth_order():
    scheme = from_scheme(omelyan5_fg())
    assert verify_claim(scheme, {}).is_zero()


@pytest.mark.parametrize("lam", LAMBDAS, ids=str)
def test_nested_limit_coefficients(lam):
    scheme = alike5_limit(lam)
    assert verify_claim(scheme, {3: nested_limit_claim(lam)}).is_zero()


def test_nested_limit_with_commuting_potentials():
    log = shadow_log(alike5_limit(R(1, 6), commuting=True))
    assert log.grade(3) == grade3("-1/72 [V2,[T,V2]]", commuting=True)


def test_nested_force_gradient_limit_is_fourth_order_when_commuting():
    scheme = alike5_limit(R(1, 6), force_gradient=True, commuting=True)
    assert verify_claim(scheme, {}).is_zero()


def test_nested_force_gradient_limit_keeps_one_term_otherwise():
    log = shadow_log(alike5_limit(R(1, 6), force_gradient=True, max_degree=3))
    assert log.grade(3) == grade3("-1/72 [V2,[V1,V2]]", max_degree=3)


@pytest.mark.parametrize("M", [1, 2, 3])
def test_nested_leapfrog_with_commuting_potentials(M):
    scheme = from_scheme(nested_leapfrog(M), commuting=True)
    assert verify_claim(scheme, {3: nested_leapfrog_claim(M, commuting=True)}).is_zero()


@pytest.mark.parametrize("M", [1, 2, 3])
def test_nested_leapfrog_general(M):
    scheme = from_scheme(nested_leapfrog(M), max_degree=3)
    assert verify_claim(scheme, {3: nested_leapfrog_claim(M)}).is_zero()


def test_flipped_signs_leave_a_residual():
    flipped = CommutatorExpr.parse("-1/24 [V2,[V2,T]] - 1/12 [V1,[T,V2]] - 1/12 [T,[T,V2]]") + inner_error(2)
    scheme = from_scheme(nested_leapfrog(2), commuting=True)
    assert not verify_claim(scheme, {3: flipped}).is_zero()


def test_inner_error_scales_with_inverse_square_of_M():
    limit = shadow_log(alike5_limit(R(1, 6), max_degree=3)).grade(3)
    excess = {M: shadow_log(from_scheme(alike5_nested(R(1, 6), M), 3)).grade(3) - limit for M in (1, 2, 3)}
    assert not excess[1].is_zero()
    assert excess[1] == excess[2] * 4
    assert excess[1] == excess[3] * 9
    assert excess[1] == inner_error(1, R(1, 2)).scaled(2).expand(3)


PALINDROMIC_SCHEMES = all_builders(1)[:5] + [s for M in (1, 2, 3) for s in all_builders(M)[5:]]


@pytest.mark.parametrize("scheme", PALINDROMIC_SCHEMES, ids=lambda s: s.name)
def test_palindromic_schemes_have_no_even_grades(scheme):
    assert scheme.is_palindromic
    log = shadow_log(from_scheme(scheme))
    assert log.grade(2).is_zero()
    assert log.grade(4).is_zero()


def test_claim_with_wrong_degree_is_rejected():
    scheme = from_scheme(leapfrog())
    with pytest.raises(SeriesError):
        verify_claim(scheme, {2: CommutatorExpr.parse("[V,[T,V]]")})


def test_low_degree_translation_drops_force_gradient(caplog):
    with caplog.at_level("DEBUG", logger="shadowstep.shadow"):
        scheme = from_scheme(omelyan5_fg(), max_degree=2)
    assert "force-gradient terms" in caplog.text
    assert shadow_log(scheme).grade(2).is_zero()


def test_inconsistent_scheme_is_rejected():
    scheme = from_scheme(parse_scheme("K(FULL,1/2,0) D(1) K(FULL,1/4,0)"))
    with pytest.raises(SchemeError):
        shadow_log(scheme)


def test_single_potential_requires_full_kicks():
    with pytest.raises(SchemeError):
        from_scheme(nested_leapfrog(2), single_potential=True)


def test_adjacent_stages_are_merged():
    assert len(from_scheme(leapfrog()).exponents) == 3
    assert len(from_scheme(omelyan5()).exponents) == 5
    # K(SLOW) K(FAST) D K(FAST) D K(FAST) K(SLOW)
    assert len(from_scheme(nested_leapfrog(2)).exponents) == 7


def test_force_gradient_term_splits_into_four_brackets():
    assert force_gradient_split_identity().is_zero()


@pytest.mark.parametrize("name", sorted(SCHEME_NAMES))
def test_registry_claims_hold(name):
    scheme = build_scheme(name, M=2)
    claims = known_claim(scheme, 2, None)
    assert 3 in claims
    assert verify_claim(from_scheme(scheme, 3), claims).is_zero()


def test_unknown_scheme_has_no_known_claim():
    assert known_claim(parse_scheme("D(1/2) K(FULL,1,0) D(1/2)"), 2, None) == {}


@pytest.mark.parametrize("claim", certified_claims(), ids=lambda c: c.key)
def test_certified_claims(claim):
    assert claim.residual().is_zero()


def test_claim_text_for_five_stage_scheme():
    scheme = from_scheme(omelyan5(), 3)
    part = shadow_log(scheme).grade(3)
    assert format_series_as_claim(part, 3, scheme.single_potential) == "-1/72 * [V,[T,V]]"
    assert format_series_as_claim(part.grade(2), 2, True) == "0"


def test_claim_text_for_nested_force_gradient():
    scheme = from_scheme(build_scheme("nested-fg", M=1), 3)
    text = format_series_as_claim(shadow_log(scheme).grade(3), 3)
    assert CommutatorExpr.parse(text).expand(3) == shadow_log(scheme).grade(3)


@pytest.mark.slow
def test_nested_limit_with_symbolic_lambda():
    lam = sympy.Symbol("lam")
    scheme = alike5_limit(lam, max_degree=3)
    assert verify_claim(scheme, {3: nested_limit_claim(lam)}).is_zero()
