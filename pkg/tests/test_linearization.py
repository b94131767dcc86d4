import numpy as np
import sympy as sym
import pytest
from hypothesis import given, settings, strategies as st

from evanslab.linearization import (
    CHART_D0_MOVING, CHART_FRONT, CHART_PULSE, CaseError, Chart, DefectiveError, apply_chart, asymptotic_roots,
    build, characteristic_quartic, default_chart, subspaces,
)
from evanslab.model import FarFieldData, ReactionTerm, WaveProfile, catalog
from evanslab.numerics import NearBorderError, Polynomial, polynomial_roots


def charpoly_of(A):
    """det(A - νI) as an ascending Polynomial."""
    return Polynomial(np.poly(A)[::-1] * (-1) ** A.shape[0])


def proportional(p: Polynomial, q: Polynomial, tol=1e-10) -> bool:
    a, b = p.as_array(), q.as_array()
    if a.size != b.size:
        return False
    k = a[-1] / b[-1]
    return np.max(np.abs(a - k * b)) <= tol * np.max(np.abs(a))


def test_example7_far_field_matrix():
    sp = build(*catalog(7, D=0.5))
    lam = 0.7 + 0.2j
    expected = [[0, 0, 1, 0], [0, 0, 0, 1 / 0.5], [lam + 4, 0, 0, 0], [-4, lam, 0, 0]]
    assert np.allclose(sp.asymptotic(lam, "+"), expected)
    assert np.allclose(sp.asymptotic(lam, "-"), expected)


def test_example5_matrix_rows():
    rt, wp = catalog(5, c=1.0)
    sp = build(rt, wp)
    assert sp.case == "d0-moving-3"
    z, lam, c = 0.3, 1.5, 1.0
    gu, gv = rt.g_u(wp.u(np.array([z])), wp.v(np.array([z])))[0], rt.g_v(wp.u(np.array([z])), wp.v(np.array([z])))[0]
    expected = [[-c, 0, 1], [gu / c, (lam + gv) / c, 0], [lam - gu, -gv, 0]]
    assert np.allclose(sp.matrix(lam, z), expected)


def test_example8_far_field_entries():
    D = 1.5
    sp = build(*catalog(8, D=D))
    lam = 2.0
    A = sp.asymptotic(lam, "+")
    assert A[2, 0] == lam and A[2, 1] == -4 * D and A[3, 1] == 4 * D + lam


@pytest.mark.parametrize("eid", [5, 6, 7, 8, 9, 10])
def test_matrix_tends_to_asymptotic_limits(eid):
    sp = build(*catalog(eid))
    lam = 0.4 + 0.3j
    tol = 1e-2 if eid == 5 else 1e-8  # algebraic decay in example 5
    assert np.max(np.abs(sp.matrix(lam, 40.0) - sp.asymptotic(lam, "+"))) < tol
    assert np.max(np.abs(sp.matrix(lam, -40.0) - sp.asymptotic(lam, "-"))) < tol


def test_case_validation():
    with pytest.raises(CaseError):
        build(*catalog(5), case="general-4")
    with pytest.raises(CaseError):
        build(*catalog(7), case="d0-moving-3")
    with pytest.raises(CaseError):
        build(*catalog(5), case="d0-stationary-pencil-2")
    with pytest.raises(CaseError):
        build(*catalog(7), case="d1-scalar-2")
    assert build(*catalog(3)).case == "d0-stationary-pencil-2"
    assert build(*catalog(1), case="d1-scalar-2").order == 2


def test_pencil_matrix():
    sp = build(*catalog(3, gamma=0.3, L=1.0))
    lam = 0.5
    # outside the pulse: g_u = -1, g_v = γ
    assert np.allclose(sp.matrix(lam, 5.0), [[0, 1], [lam + 1 - 0.3 / (lam + 0.3), 0]])


# -- characteristic polynomial ----------------------------------------------------


def test_d1_quartic_is_square():
    p = characteristic_quartic(FarFieldData.uniform(0.0, 0.0), 1.0, 0.0, 2.0, "+")
    q = Polynomial([-2, 0, 1])
    assert np.allclose(p.as_array(), np.convolve(q.as_array(), q.as_array()))


def test_d1_general_factorisation():
    gu, gv, c, lam = 0.7, -1.3, 0.4, 1.1 + 0.5j
    p = characteristic_quartic(FarFieldData.uniform(gu, gv), 1.0, c, lam, "+")
    a = np.array([-lam, c, 1])
    b = np.array([-lam - (gv - gu), c, 1])
    assert np.allclose(p.as_array(), np.convolve(a, b))


def test_example5_cubic():
    c, lam = 1.0, 1.0
    p = characteristic_quartic(FarFieldData.uniform(c * c, c * c), 0.0, c, lam, "+")
    cubic = Polynomial([-lam ** 2 / c, 2 * lam, lam / c, -1])
    assert p.degree == 3 and np.allclose(p.as_array(), -c * cubic.as_array())


def test_degrees():
    far = FarFieldData.uniform(1.0, 2.0)
    assert characteristic_quartic(far, 0.5, 0.3, 1.0, "+").degree == 4
    assert characteristic_quartic(far, 0.0, 0.3, 1.0, "+").degree == 3
    assert characteristic_quartic(far, 0.0, 0.0, 1.0, "+").degree == 2


_far = st.tuples(st.floats(-5, 5), st.floats(-5, 5))
_lam = st.complex_numbers(max_magnitude=10)


def constant_problem(gu, gv, D, c):
    """Linear g = gu·u + gv·v about the zero state, so A(λ, z) = A±(λ)."""
    z = sym.Symbol("z")
    wp = WaveProfile("closed-form", c, D, (0.0, 0.0), (0.0, 0.0), 0 * z, 0 * z)
    return build(ReactionTerm({(1, 0): gu, (0, 1): gv}), wp)


@settings(max_examples=100, deadline=None)
@given(_far, st.floats(0.05, 4), st.floats(-3, 3), _lam)
def test_order4_determinant_matches_quartic(g, D, c, lam):
    sp = constant_problem(g[0], g[1], D, c)
    for side in "+-":
        assert proportional(charpoly_of(sp.asymptotic(lam, side)), characteristic_quartic(sp.far, D, c, lam, side),
                            1e-9)


@settings(max_examples=50, deadline=None)
@given(_far, st.floats(-3, 3).filter(lambda c: abs(c) > 0.05), _lam)
def test_order3_determinant_matches_cubic(g, c, lam):
    sp = constant_problem(g[0], g[1], 0.0, c)
    assert proportional(charpoly_of(sp.asymptotic(lam, "+")), characteristic_quartic(sp.far, 0.0, c, lam, "+"),
                        1e-9)


# -- asymptotics -------------------------------------------------------------------


def test_asymptotic_roots_d1():
    r = asymptotic_roots(FarFieldData.uniform(0.0, 0.0), 1.0, 0.0, 1e4)
    assert np.allclose(sorted(r.real), [-100, -100, 100, 100])


def test_asymptotic_third_root_d0():
    r = asymptotic_roots(FarFieldData.uniform(0.5, 1.0), 0.0, 1.0, 1e4)
    assert r[2] == pytest.approx(10001.0)


@pytest.mark.parametrize("D,c,g", [(0.5, 0.3, (1.0, -2.0)), (2.0, 0.0, (-4.0, 0.0)), (0.0, 1.0, (1.0, 1.0))])
def test_asymptotic_roots_nearly_solve_quartic(D, c, g):
    far = FarFieldData.uniform(*g)
    lam = 1e4
    p = characteristic_quartic(far, D, c, lam, "+")
    lead = p.as_array()[-1]
    for r in asymptotic_roots(far, D, c, lam):
        assert abs(p(r)) / abs(lead * r ** p.degree) < 0.05


def test_asymptotic_precondition():
    with pytest.raises(ValueError):
        asymptotic_roots(FarFieldData.uniform(1.0, 1.0), 0.5, 0.0, 10.0)


# -- subspaces and charts --------------------------------------------------------


def test_example7_d1_subspaces():
    sp = build(*catalog(7, D=1.0))
    s = subspaces(sp, 1.0, "+")
    assert s.dims == (2, 2)
    stable = sorted(s.eigenvalues[s.eigenvalues.real < 0].real)
    assert np.allclose(stable, [-np.sqrt(5), -1.0])
    assert np.allclose(s.stable.conj().T @ s.stable, np.eye(2))


def test_example5_dimensions():
    s = subspaces(build(*catalog(5, c=1.0)), 1.0, "+")
    assert s.dims == (1, 2)


@pytest.mark.parametrize("eid", [6, 7, 8, 9, 10])
def test_large_lambda_split(eid):
    sp = build(*catalog(eid))
    if sp.order == 4:
        assert subspaces(sp, 100.0, "+").dims == (2, 2)
        assert subspaces(sp, 100.0, "-").dims == (2, 2)


def test_near_border_and_defective():
    sp = build(*catalog(7, D=0.5))
    with pytest.raises(NearBorderError):
        subspaces(sp, 0.0, "+")
    # D = 1, c = 0, ĝ_u = ĝ_v: the quartic is (ν² - λ)², a Jordan pair
    with pytest.raises(DefectiveError):
        subspaces(constant_problem(1.0, 1.0, 1.0, 0.0), 1.0, "+")
    assert subspaces(build(*catalog(7, D=1.0)), 2.0, "+").dims == (2, 2)


def test_eigenvectors_normalised_first_nonzero():
    s = subspaces(apply_chart(build(*catalog(8)), CHART_FRONT), 1.3, "+")
    for col in s.eigenvectors.T:
        k = int(np.argmax(np.abs(col) > 1e-12))
        assert col[k] == pytest.approx(1.0)


def test_identity_chart_is_noop():
    sp = build(*catalog(9))
    spT = apply_chart(sp, Chart.identity(4))
    assert np.allclose(spT.matrix(0.5, 0.2), sp.matrix(0.5, 0.2))


def test_d0_chart_determinant_one():
    assert CHART_D0_MOVING.det == pytest.approx(1.0)


def test_chart_preserves_spectrum_example5():
    sp = build(*catalog(5, c=1.0))
    spT = apply_chart(sp, CHART_D0_MOVING)
    for side in "+-":
        a = np.sort_complex(np.linalg.eigvals(sp.asymptotic(2.0, side)))
        b = np.sort_complex(np.linalg.eigvals(spT.asymptotic(2.0, side)))
        assert np.allclose(a, b)


def test_singular_chart_rejected():
    with pytest.raises(ValueError):
        Chart(np.ones((3, 3)))
    with pytest.raises(ValueError):
        apply_chart(build(*catalog(5)), CHART_PULSE)


def test_default_charts():
    assert default_chart(build(*catalog(5))) is CHART_D0_MOVING
    assert default_chart(build(*catalog(7))) is CHART_PULSE
    assert default_chart(build(*catalog(8))) is CHART_FRONT


@settings(max_examples=100, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=2), min_size=16, max_size=16), _lam)
def test_similarity_invariance(entries, lam):
    T = np.array(entries).reshape(4, 4) + 3 * np.eye(4)
    if abs(np.linalg.det(T)) < 1e-3 or np.linalg.cond(T) > 1e6:
        return
    sp = build(*catalog(10))
    spT = apply_chart(sp, Chart(T))
    for side in "+-":
        p = charpoly_of(sp.asymptotic(lam, side))
        q = charpoly_of(spT.asymptotic(lam, side))
        assert np.allclose(p.as_array(), q.as_array(), atol=1e-8 * max(1.0, abs(lam)) ** 2)
