import csv
import io
import json

import numpy as np
import pytest

from evanslab import riccati_evans as re_
from evanslab.linearization import CHART_D0_MOVING, apply_chart, build, subspaces
from evanslab.model import catalog
from evanslab.numerics import circle, integrate

RNG = np.random.default_rng(7)


# -- Riccati fields -----------------------------------------------------------------------


def test_diagonal_line_flow():
    d = np.array([1.0, -2.0, 0.5])
    W = np.array([[0.3], [-0.7]], dtype=complex)
    f = re_.riccati_field(np.diag(d).astype(complex), W, 1)
    assert np.allclose(f.ravel(), [(d[1] - d[0]) * 0.3, (d[2] - d[0]) * -0.7])
    assert np.allclose(re_.riccati_field(np.diag(d).astype(complex), np.zeros((2, 1)), 1), 0)


def test_sylvester_flow_when_off_diagonal_blocks_vanish():
    A = np.zeros((4, 4), dtype=complex)
    a = RNG.normal(size=(2, 2)) + 1j * RNG.normal(size=(2, 2))
    d = RNG.normal(size=(2, 2))
    A[:2, :2], A[2:, 2:] = a, d
    W = RNG.normal(size=(2, 2)) + 0j
    assert np.allclose(re_.riccati_field(A, W, 2), d @ W - W @ a)


def test_eigenvector_is_a_fixed_point_of_the_line_flow():
    sp = build(*catalog(5, c=1.0))
    spT = apply_chart(sp, CHART_D0_MOVING)
    f = re_.line_flow(spT, 1.0)
    A = spT.matrix(1.0, 0.7)
    w, V = np.linalg.eig(A)
    for j in range(3):
        v = V[:, j] / V[0, j]
        assert np.max(np.abs(f(0.7, v[1:]))) < 1e-10 * max(1.0, np.max(np.abs(v)))


def test_unstable_plane_is_a_fixed_point_of_the_plane_flow():
    sp = build(*catalog(5, c=1.0))
    spT = apply_chart(sp, CHART_D0_MOVING)
    A = spT.asymptotic(2.0, "-")
    U = subspaces(spT, 2.0, "-").unstable
    assert U.shape[1] == 2
    W = re_.chart_coordinates(U, 2)
    assert W.shape == (1, 2)
    assert np.max(np.abs(re_.riccati_field(A, W, 2))) < 1e-10


def test_plane_flow_shape():
    sp = build(*catalog(5, c=1.0))
    f = re_.plane_flow(apply_chart(sp, CHART_D0_MOVING), 1.0, 2)
    assert f(0.0, np.zeros((1, 2))).shape == (1, 2)


def test_line_flow_matches_linear_integration():
    # Riccati coordinates of the stable line, carried from z = 25 to 0, equal the projected linear solution
    sp = build(*catalog(5, c=1.0))
    spT = apply_chart(sp, CHART_D0_MOVING)
    lam, L = 1.0, 25.0
    s = subspaces(spT, lam, "+").stable[:, 0]
    w0 = s[1:] / s[0]
    ric = integrate(re_.line_flow(spT, lam), w0, L, 0.0, rtol=1e-11, atol=1e-13)
    assert ric.termination == "reached-endpoint" and np.all(np.isfinite(ric.final))
    lin = integrate(lambda z, y: spT.matrix(lam, z) @ y, s, L, 0.0, rtol=1e-11, atol=1e-13, blow_up_norm=1e30)
    assert lin.termination == "reached-endpoint"
    y = lin.final
    assert np.max(np.abs(ric.final - y[1:] / y[0])) < 1e-7 * max(1.0, np.max(np.abs(ric.final)))


def test_combine_equals_determinant_difference():
    Wu = RNG.normal(size=(2, 2)) + 1j * RNG.normal(size=(2, 2))
    Ws = RNG.normal(size=(2, 2)) + 1j * RNG.normal(size=(2, 2))
    assert re_.combine(Wu, Ws) == pytest.approx(np.linalg.det(Ws - Wu))


def test_combine_line_against_plane():
    # n = 3: unstable plane W_u = (w1, w2), stable line (α, β)ᵀ
    w1, w2, al, be = 0.3 - 1j, 2.0, -0.5j, 1.5
    E = re_.combine(np.array([[w1, w2]]), np.array([[al], [be]]))
    assert E == pytest.approx(be - w1 - w2 * al)


def test_chart_coordinates_singular_frame():
    assert re_.chart_coordinates(np.array([[0.0], [1.0], [2.0]]), 1) is None
    assert np.allclose(re_.chart_coordinates(np.array([[2.0], [1.0], [4.0]]), 1), [[0.5], [2.0]])


# -- values -------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def ex7_d1():
    return build(*catalog(7, D=1.0))


def test_example7_d1_root_at_five(ex7_d1):
    rep = re_.scan_real(ex7_d1, (0.5, 10.0), n=60)
    lams = [r["lam"].real for r in rep.roots]
    assert len(lams) == 1 and abs(lams[0] - 5) < 1e-6
    assert rep.poles == []


def test_example7_d1_winds_once_around_five(ex7_d1):
    rep = re_.winding(ex7_d1, circle(5.0, 1.0), n_seed=64)
    assert rep.winding == 1 and rep.winding_residual < 0.05


def test_example7_d1_no_poles(ex7_d1):
    assert re_.locate_poles(ex7_d1, (0.1, 10.0, -4.0, 4.0), seed_grid=(13, 13)) == []


@pytest.mark.parametrize("eid,params", [(7, dict(D=0.5)), (8, dict(D=0.5)), (9, dict(D=0.5, c=1.5))])
def test_translation_value(eid, params):
    assert abs(re_.translation_value(build(*catalog(eid, **params)))) < 1e-5


def test_evaluate_rejects_border_points(ex7_d1):
    with pytest.raises(re_.EssentialSpectrumError):
        re_.evaluate(ex7_d1, -1.0)


def test_evaluator_requires_uncharted_problem(ex7_d1):
    with pytest.raises(ValueError):
        re_.RiccatiEvans(apply_chart(ex7_d1, re_.default_chart(ex7_d1)))


def test_conjugate_residual(ex7_d1):
    assert re_.conjugate_residual(ex7_d1, 2.0 + 1.5j) < 1e-7


def test_values_are_deterministic(ex7_d1):
    lams = np.array([2.0 + 1j, 3.0, 7.5 - 2j])
    a = re_.RiccatiEvans(ex7_d1).values(lams).E
    b = re_.RiccatiEvans(ex7_d1).values(lams).E
    assert np.array_equal(a, b)


def test_threads_give_same_values(ex7_d1):
    lams = np.linspace(1.0, 9.0, 8) + 0.5j
    a = re_.RiccatiEvans(ex7_d1).values(lams).E
    b = re_.RiccatiEvans(ex7_d1, settings=re_.EvansSettings(threads=2)).values(lams).E
    assert np.array_equal(a, b)


# -- synthetic meromorphic function --------------------------------------------------------


class _Rational(re_.RiccatiEvans):
    """Stand-in evaluator with E(λ) = (λ - 5)/(λ - 2)."""

    def __init__(self, sp):
        self.sp, self.chart, self.settings, self.retries = sp, re_.default_chart(sp), re_.EvansSettings(), 0

    def values(self, lams, z0=None):
        lams = np.atleast_1d(np.asarray(lams, dtype=complex))
        return re_.EvansSamples(lams, (lams - 5) / (lams - 2), np.array([""] * lams.size, dtype=object))


def test_locate_poles_rational(ex7_d1):
    poles = re_.locate_poles(_Rational(ex7_d1), (0.3, 4.1, -1.3, 1.1), seed_grid=(21, 21))
    assert len(poles) == 1 and abs(poles[0] - 2) < 1e-6


def test_locate_roots_rational(ex7_d1):
    roots = re_.locate_roots(_Rational(ex7_d1), (3.1, 7.3, -1.3, 1.1), seed_grid=(21, 21))
    assert len(roots) == 1 and abs(roots[0]["lam"] - 5) < 1e-8


def test_winding_counts_zeros_minus_poles(ex7_d1):
    ev = _Rational(ex7_d1)
    assert re_.winding(ev, circle(3.5, 2.0)).winding == 0
    assert re_.winding(ev, circle(2.0, 1.0)).winding == -1
    assert re_.winding(ev, circle(5.0, 1.0)).winding == 1


def test_winding_rejects_zero_on_contour(ex7_d1):
    with pytest.raises(re_.RootOnContourError):
        re_.winding(_Rational(ex7_d1), circle(4.0, 1.0), n_seed=64)


# -- reports and settings ---------------------------------------------------------------------


def test_report_json_and_csv():
    rep = re_.EvansReport(np.array([1.0 + 0j, 2.0 + 1j]), np.array([1.0 + 1j, -2.0 + 0j]),
                          roots=[{"lam": 5.0 + 0j, "residual": 1e-12}], poles=[2.0 + 0j], winding=0,
                          winding_residual=0.001, chart="pulse")
    d = json.loads(rep.to_json())
    assert d["schema"] == 1 and d["roots"][0]["lambda"] == [5.0, 0.0] and d["poles"] == [[2.0, 0.0]]
    rows = list(csv.reader(io.StringIO(rep.to_csv())))
    assert rows[0] == ["re_lambda", "im_lambda", "re_E", "im_E", "phase"]
    assert len(rows) == 3 and float(rows[2][4]) == pytest.approx(np.pi)


def test_threads_from_env(monkeypatch):
    monkeypatch.delenv("EVANSLAB_THREADS", raising=False)
    assert re_.threads_from_env(3) == 3
    monkeypatch.setenv("EVANSLAB_THREADS", "4")
    assert re_.threads_from_env() == 4
    monkeypatch.setenv("EVANSLAB_THREADS", "lots")
    assert re_.threads_from_env(2) == 2


def test_default_region_size():
    sp = build(*catalog(8, D=1.5))
    K = re_.default_region(sp)
    z = K.sample(400).vertices
    assert np.max(np.abs(z)) == pytest.approx(20 * 6.0, rel=1e-9)
