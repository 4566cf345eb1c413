import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from graphon_pooling.graphon import (
    ClosedFormGraphon,
    GraphonError,
    Partition,
    StepGraphon,
    common_refinement,
    constant_graphon,
    eval_graphon,
    exponential,
    induced_graphon,
    integrate_box,
    parse_graphon,
    step_signal,
)

FAMILIES = ["exp:2.3", "bilinear", "poly", "logmax", "absdiff"]


def test_eval_bilinear():
    assert eval_graphon(ClosedFormGraphon("bilinear"), 0.5, 0.4) == pytest.approx(0.2, abs=1e-15)


@pytest.mark.parametrize("x", [0.0, 0.3, 0.77, 1.0])
def test_eval_exponential_diagonal(x):
    assert eval_graphon(exponential(2.3), x, x) == 1.0


def test_eval_step_block_lookup():
    w = StepGraphon(Partition.uniform(2), [[0, 1], [1, 0]])
    assert eval_graphon(w, 0.3, 0.7) == 1.0


def test_eval_out_of_range():
    with pytest.raises(GraphonError):
        eval_graphon(ClosedFormGraphon("bilinear"), 1.2, 0.1)
    with pytest.raises(GraphonError):
        eval_graphon(induced_graphon([[0.5]]), -0.1, 0.1)


def test_boundary_convention():
    w = induced_graphon([[0.1, 0.2], [0.2, 0.3]])
    # x = 0 belongs to the first interval; 0.5 closes the first interval
    assert w(0.0, 0.0) == 0.1
    assert w(0.5, 0.5) == 0.1
    assert w(0.5000001, 1.0) == 0.3


def test_induced_graphon():
    w = induced_graphon([[0, 1], [1, 0]])
    assert w(0.3, 0.7) == 1.0
    c = induced_graphon([[0.4]])
    assert np.all(c(np.random.default_rng(0).random(20), np.random.default_rng(1).random(20)) == 0.4)
    a = np.random.default_rng(2).random((5, 5))
    a = (a + a.T) / 2
    assert np.array_equal(induced_graphon(a).values, a)


def test_induced_graphon_rejects():
    with pytest.raises(GraphonError):
        induced_graphon([[0, 1], [0, 0]])
    with pytest.raises(GraphonError):
        induced_graphon([[2.0]])
    with pytest.raises(GraphonError):
        induced_graphon(np.zeros((2, 3)))


def test_integrate_box_examples():
    assert integrate_box(ClosedFormGraphon("bilinear"), (0, 0.5), (0, 0.5)) == pytest.approx(1 / 64, abs=1e-14)
    assert integrate_box(constant_graphon(0.3), (0.1, 0.4), (0.2, 0.9)) == pytest.approx(0.3 * 0.3 * 0.7, abs=1e-15)
    assert integrate_box(induced_graphon([[0, 1], [1, 0]]), (0, 1), (0, 1)) == pytest.approx(0.5, abs=1e-15)


def test_integrate_box_rejects_bad_box():
    with pytest.raises(GraphonError):
        integrate_box(ClosedFormGraphon("bilinear"), (0.5, 0.2), (0, 1))


@pytest.mark.parametrize("spec", FAMILIES)
def test_quadrature_additivity(spec):
    w = parse_graphon(spec)
    tol = 1e-10
    whole = integrate_box(w, (0, 1), (0, 1), tol)
    cuts_x, cuts_y = [0, 0.3, 0.55, 1], [0, 0.2, 0.9, 1]
    parts = sum(
        integrate_box(w, (cuts_x[i], cuts_x[i + 1]), (cuts_y[j], cuts_y[j + 1]), tol)
        for i in range(3)
        for j in range(3)
    )
    assert abs(whole - parts) <= 4 * tol


def test_closed_form_integrals():
    # symbolic oracles over the unit square
    assert integrate_box(parse_graphon("poly"), (0, 1), (0, 1)) == pytest.approx(1 / 3, abs=1e-12)
    assert integrate_box(parse_graphon("absdiff"), (0, 1), (0, 1)) == pytest.approx(1 / 3, abs=1e-10)
    # int int log(1 + max(x, y)) = 2 int_0^1 x log(1 + x) dx = 1/2
    assert integrate_box(parse_graphon("logmax"), (0, 1), (0, 1)) == pytest.approx(0.5, abs=1e-10)


def test_step_integration_exact():
    rng = np.random.default_rng(5)
    part = Partition(np.concatenate([[0], np.sort(rng.random(5)), [1]]))
    v = rng.random((6, 6))
    w = StepGraphon(part, (v + v.T) / 2)
    a, b, c, d = 0.13, 0.71, 0.05, 0.93
    ox = np.clip(np.minimum(part.breakpoints[1:], b) - np.maximum(part.breakpoints[:-1], a), 0, None)
    oy = np.clip(np.minimum(part.breakpoints[1:], d) - np.maximum(part.breakpoints[:-1], c), 0, None)
    assert abs(integrate_box(w, (a, b), (c, d), tol=1e-2) - ox @ w.values @ oy) <= 1e-14


@pytest.mark.parametrize("spec", FAMILIES)
def test_symmetry_and_range(spec):
    w = parse_graphon(spec)
    rng = np.random.default_rng(0)
    x, y = rng.random(1000), rng.random(1000)
    assert np.max(np.abs(w(x, y) - w(y, x))) <= 1e-15
    v = w(x, y)
    assert np.all((v >= 0) & (v <= 1))


def test_step_symmetry_exact():
    a = np.random.default_rng(3).random((7, 7))
    w = induced_graphon((a + a.T) / 2)
    rng = np.random.default_rng(4)
    x, y = rng.random(1000), rng.random(1000)
    assert np.array_equal(w(x, y), w(y, x))


def test_partition_invariants():
    with pytest.raises(GraphonError):
        Partition([0.0, 0.5, 0.5 + 1e-12, 1.0])
    with pytest.raises(GraphonError):
        Partition([0.1, 1.0])
    p = Partition([0, 0.2, 0.7, 1])
    assert p.measures.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(p.midpoints, [0.1, 0.45, 0.85])


def test_common_refinement():
    r = common_refinement(Partition.uniform(2), Partition.uniform(4))
    assert r == Partition.uniform(4) and r.regular
    r = common_refinement(Partition.uniform(2), Partition.uniform(3))
    np.testing.assert_allclose(r.breakpoints, [0, 1 / 3, 0.5, 2 / 3, 1])


def test_step_signal_examples():
    s = step_signal([1, 2])
    assert s(0.25) == 1 and s(0.75) == 2 and s(0.5) == 1 and s(1.0) == 2
    assert len(s.partition) == 2
    c = step_signal([3.5])
    assert np.all(c(np.linspace(0, 1, 11)) == 3.5)


@settings(max_examples=50, deadline=None)
@given(
    st.lists(st.floats(-10, 10), min_size=1, max_size=12),
    st.floats(-3, 3),
    st.floats(-3, 3),
)
def test_step_signal_linear(xs, alpha, beta):
    x = np.array(xs)
    z = np.cos(np.arange(x.size))
    t = np.linspace(0, 1, 37)
    lhs = step_signal(alpha * x + beta * z)(t)
    rhs = alpha * step_signal(x)(t) + beta * step_signal(z)(t)
    np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-12)


def test_parse_graphon_errors():
    with pytest.raises(GraphonError):
        parse_graphon("nope")
    assert parse_graphon("exp:1.5").params == (1.5,)
