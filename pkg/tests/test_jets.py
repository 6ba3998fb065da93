import math
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from beamforge.errors import ShapeError
from beamforge.jets import Jet, jet_product, jet_space, jet_variables


def dict_product(a, b, degree):
    """Truncated product of {multi_index: coeff} polynomials, term by term."""
    out = {}
    for (ea, ca), (eb, cb) in product(a.items(), b.items()):
        e = tuple(x + y for x, y in zip(ea, eb))
        if sum(e) <= degree:
            out[e] = out.get(e, 0) + ca * cb
    return out


def as_dict(jet):
    sp = jet.space
    return {tuple(sp.exponents[i]): jet.coeffs[i] for i in range(sp.size)}


coeff = st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False)


def jets(n, d):
    size = jet_space(n, d).size
    return st.lists(coeff, min_size=size, max_size=size).map(lambda c: Jet(n, d, np.array(c)))


def test_space_sizes_and_order():
    sp = jet_space(2, 3)
    assert sp.size == 10
    assert [tuple(e) for e in sp.exponents[:6]] == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
    assert sp.count(1) == 3
    assert jet_space(3, 4).size == math.comb(7, 3)


def test_truncate_is_prefix():
    j = Jet(2, 3, np.arange(10.0))
    t = j.truncate(1)
    assert t.max_degree == 1
    assert np.array_equal(t.coeffs, [0, 1, 2])
    with pytest.raises(ShapeError):
        t.truncate(2)
    assert np.array_equal(t.with_degree(3).coeffs[:3], [0, 1, 2])


@settings(max_examples=40, deadline=None)
@given(jets(2, 3), jets(2, 3))
def test_product_matches_term_by_term(a, b):
    ref = dict_product(as_dict(a), as_dict(b), 3)
    got = as_dict(jet_product(a, b))
    for e, c in got.items():
        assert abs(c - ref.get(e, 0)) < 1e-12


@settings(max_examples=30, deadline=None)
@given(jets(3, 2), jets(3, 2), jets(3, 2))
def test_product_ring_laws(a, b, c):
    assert np.allclose((a * b).coeffs, (b * a).coeffs)
    assert np.allclose(((a * b) * c).coeffs, (a * (b * c)).coeffs, atol=1e-10)
    assert np.allclose((a * (b + c)).coeffs, (a * b + a * c).coeffs, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(jets(2, 4), st.floats(0.5, 3.0))
def test_sqrt_and_reciprocal_inverses(a, shift):
    a = a * 0.1 + shift
    r = a.sqrt()
    assert np.allclose((r * r).coeffs, a.coeffs, atol=1e-10)
    inv = a.reciprocal()
    one = (a * inv).coeffs
    assert abs(one[0] - 1) < 1e-12 and np.allclose(one[1:], 0, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(jets(2, 3), jets(2, 3), st.integers(0, 1))
def test_leibniz_rule(a, b, axis):
    lhs = (a * b).partial(axis).truncate(2)
    rhs = (a.partial(axis) * b + a * b.partial(axis)).truncate(2)
    assert np.allclose(lhs.coeffs, rhs.coeffs, atol=1e-10)


def test_elementary_functions_match_taylor_series():
    x0 = 0.3
    (y,) = jet_variables(np.array([x0]), 6)
    fact = np.array([math.factorial(m) for m in range(7)])
    assert np.allclose(y.exp().coeffs, np.exp(x0) / fact)
    cos_d = [math.cos(x0 + m * math.pi / 2) for m in range(7)]
    assert np.allclose(y.cos().coeffs, np.array(cos_d) / fact)
    sin_d = [math.sin(x0 + m * math.pi / 2) for m in range(7)]
    assert np.allclose(y.sin().coeffs, np.array(sin_d) / fact)
    # d^m x^(1/2) = (1/2)(1/2 - 1)...(1/2 - m + 1) x^(1/2 - m)
    sq = [math.prod(0.5 - i for i in range(m)) * x0 ** (0.5 - m) for m in range(7)]
    assert np.allclose(y.sqrt().coeffs, np.array(sq) / fact)
    rec = [(-1) ** m * math.factorial(m) * x0 ** (-1 - m) for m in range(7)]
    assert np.allclose(y.reciprocal().coeffs, np.array(rec) / fact)


def test_two_variable_function_truncation_error():
    # the Taylor polynomial of degree d has remainder O(|delta|^(d+1))
    point = np.array([0.4, -0.7])
    y1, y2 = jet_variables(point, 4)
    f = (y1 * y2 + 1.5).sqrt() * (y2 * -0.5).exp()
    exact = lambda a, b: np.sqrt(a * b + 1.5) * np.exp(-0.5 * b)
    errs = []
    for h in (1e-2, 5e-3):
        d = np.array([h, -2 * h])
        errs.append(abs(f.eval(d) - exact(*(point + d))))
    assert errs[1] < errs[0] / 20


def test_derivatives_round_trip():
    sp = jet_space(2, 3)
    vals = np.arange(1.0, sp.size + 1)
    j = Jet.from_derivatives(vals, 2, 3)
    assert np.allclose(j.derivatives(), vals)


def test_batched_product_matches_loop():
    rng = np.random.default_rng(1)
    a = Jet(2, 3, rng.normal(size=(4, 5, 10)) + 1j * rng.normal(size=(4, 5, 10)))
    b = Jet(2, 3, rng.normal(size=(4, 5, 10)))
    ab = a * b
    for i in range(4):
        for k in range(5):
            assert np.allclose(ab.coeffs[i, k], (Jet(2, 3, a.coeffs[i, k]) * Jet(2, 3, b.coeffs[i, k])).coeffs)


def test_embed_and_slice_are_inverse():
    j = Jet(2, 3, np.arange(10.0) + 1)
    # as a jet in (s, y1, y2) multiplied by s
    e = j.embed(3, 4, (1, 2), shift=(0, 1))
    back = e.slice(0, 1, 3)
    assert np.allclose(back.coeffs, j.coeffs)
    assert np.allclose(e.slice(0, 0, 3).coeffs, 0)


def test_eval_matches_dict_sum():
    j = Jet.from_dict({(0, 0): 1.0, (2, 1): 3.0, (0, 3): -2.0}, 2, 3)
    d = np.array([0.2, -0.5])
    assert np.isclose(j.eval(d), 1.0 + 3.0 * 0.04 * -0.5 - 2.0 * (-0.125))


def test_shape_errors():
    with pytest.raises(ShapeError):
        Jet(2, 2, np.zeros(5))
    with pytest.raises(ShapeError):
        Jet.variable(3, 2, 2)
    with pytest.raises(ShapeError):
        Jet(2, 2).eval(np.zeros(3))
