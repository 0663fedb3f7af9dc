import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sopot_fbmc.quantizers import (
    FixedPointWord,
    QuantizerBudget,
    codeword_size,
    csd_digits,
    csd_recode,
    csd_vector,
    mpgbp_approximate,
    nearest_pow2_depth,
    quantize_fixed_point,
    sdl_approximate,
)
from sopot_fbmc.sopot import SopotError, reconstruct


def all_words(B):
    for q in range(-(1 << (B - 1)), 1 << (B - 1)):
        yield FixedPointWord.from_integer(q, B)


def min_signed_digit_weights(B):
    """Brute force: fewest nonzeros over every {-1,0,1} string of B+1 digits."""
    best = {}
    weights = [1 << j for j in range(B + 1)]
    for digits in itertools.product((-1, 0, 1), repeat=B + 1):
        q = sum(d * w for d, w in zip(digits, weights))
        n = sum(d != 0 for d in digits)
        if n < best.get(q, B + 2):
            best[q] = n
    return best


def is_naf(digits):
    return all(not (a and b) for a, b in zip(digits, digits[1:]))


# -- fixed point --------------------------------------------------------------------

def test_quantize_examples():
    w = quantize_fixed_point(0.4375, 5)
    assert w.bits == (0, 0, 1, 1, 1)
    assert w.value == 0.4375
    assert quantize_fixed_point(0.7, 3).value == 0.75
    assert quantize_fixed_point(-1.2, 4).value == -1.0
    assert quantize_fixed_point(5.0, 4).value == 1 - 2.0**-3


def test_quantize_ties_to_even():
    # 0.3125 = 2.5 steps of 1/8: rounds to 2 steps
    assert quantize_fixed_point(0.3125, 4).integer == 2
    assert quantize_fixed_point(0.4375, 4).integer == 4
    assert quantize_fixed_point(-0.3125, 4).integer == -2


def test_quantize_rejects_bad_input():
    with pytest.raises(SopotError):
        quantize_fixed_point(math.nan, 4)
    with pytest.raises(SopotError):
        quantize_fixed_point(0.1, 1)


def test_fixed_point_value_formula():
    for B in range(2, 8):
        for w in all_words(B):
            expected = -w.bits[0] + sum(Fraction(b, 2**i) for i, b in enumerate(w.bits) if i)
            assert Fraction(w.value) == expected


# -- CSD ----------------------------------------------------------------------------

def test_csd_examples():
    assert csd_digits(quantize_fixed_point(0.4375, 5)) == [0, 1, 0, 0, -1]
    assert csd_digits(quantize_fixed_point(0.0, 6)) == [0] * 6
    assert csd_recode(quantize_fixed_point(0.0, 6)).terms == ()
    assert csd_digits(quantize_fixed_point(0.625, 4)) == [0, 1, 0, 1]
    assert csd_digits(quantize_fixed_point(-1.0, 4)) == [-1, 0, 0, 0]


@pytest.mark.parametrize("B", range(2, 13))
def test_csd_exact_and_naf_exhaustive(B):
    for w in all_words(B):
        digits = csd_digits(w)
        assert is_naf(digits), (w, digits)
        assert reconstruct(csd_recode(w))[0] == w.value
        assert sum(Fraction(d, 2**i) for i, d in enumerate(digits)) == Fraction(w.value)


@pytest.mark.parametrize("B", range(2, 9))
def test_csd_minimal_against_brute_force(B):
    best = min_signed_digit_weights(B)
    for w in all_words(B):
        assert len(csd_recode(w)) == best[w.integer], w


def test_csd_density_approaches_one_third():
    rng = np.random.default_rng(7)
    B = 16
    counts = [len(csd_recode(quantize_fixed_point(x, B))) for x in rng.uniform(-1, 1, 100_000)]
    frac = np.mean(counts) / B
    assert abs(frac - 1 / 3) <= 0.03 / 3


def test_csd_vector():
    assert len(csd_vector(np.zeros(10), 6)) == 0
    a = csd_vector([0.4375, -0.3, 0.7], 5)
    assert a.scale_exponent == 0
    assert reconstruct(a).tolist() == [0.4375, -0.3125, 0.6875]


def test_csd_vector_grows_integer_bits_instead_of_saturating():
    v = np.array([13.7, -0.3, 2.2])
    a = csd_vector(v, 4)
    assert a.scale_exponent == 4
    # grid step 2**-3 in the units of v, no saturation
    assert reconstruct(a).tolist() == (np.round(v * 8) / 8).tolist()


# -- depth rule ---------------------------------------------------------------------

@pytest.mark.parametrize("mag, P, k", [(0.7, 1, 1), (0.09375, 1, 3), (1.0, 2, 1), (0.75, 1, 0), (1.5, 1, -1)])
def test_nearest_pow2_depth_examples(mag, P, k):
    assert nearest_pow2_depth(mag, P) == k


def test_nearest_pow2_depth_rejects_zero():
    with pytest.raises(SopotError):
        nearest_pow2_depth(0.0)


@given(st.floats(1e-30, 1e3), st.integers(1, 40))
def test_nearest_pow2_depth_bounds(mag, P):
    k = nearest_pow2_depth(mag, P)
    x = Fraction(mag) / P
    assert Fraction(3, 4) * Fraction(2) ** -k <= x < Fraction(3, 2) * Fraction(2) ** -k


# -- SDL ----------------------------------------------------------------------------

def test_sdl_examples():
    a, trace = sdl_approximate([0.5, 0.0], QuantizerBudget(4, 10))
    assert [tuple(t) for t in a.terms] == [(0, 1, 1)]
    assert trace.stop_reason == "exact"

    a, _ = sdl_approximate([0.7], QuantizerBudget(3, 10))
    assert [(t.depth, t.sign) for t in a.terms] == [(1, 1), (2, 1), (4, -1)]
    assert reconstruct(a).tolist() == [0.6875]

    a, _ = sdl_approximate([0.7, -0.3], QuantizerBudget(2, 10))
    assert reconstruct(a).tolist() == [0.5, -0.25]
    assert [tuple(t) for t in a.terms] == [(0, 1, 1), (1, 2, -1)]


def test_sdl_errors():
    with pytest.raises(SopotError):
        sdl_approximate([], QuantizerBudget(3))
    with pytest.raises(SopotError):
        sdl_approximate([1.5], QuantizerBudget(3))


def test_sdl_depth_limit_stops():
    a, trace = sdl_approximate([0.7], QuantizerBudget(10, 3))
    assert trace.stop_reason == "depth"
    assert all(t.depth <= 3 for t in a.terms)
    assert [t.depth for t in a.terms] == [1, 2]


def test_sdl_uses_exact_budget_when_depth_not_binding():
    v = np.random.default_rng(3).uniform(-1, 1, 64)
    a, trace = sdl_approximate(v, QuantizerBudget(150, 40))
    assert len(a) == 150 and trace.stop_reason == "budget"


def test_sdl_first_index_on_ties():
    a, _ = sdl_approximate([-0.5, 0.5, 0.5], QuantizerBudget(1))
    assert a.terms[0].position == 0


def test_sdl_contraction_on_random_scalars():
    rng = np.random.default_rng(11)
    budget = QuantizerBudget(4, 24)
    for x in rng.uniform(-1, 1, 100_000):
        a, trace = sdl_approximate([x], budget)
        r = x
        for t in a.terms:
            new = r - t.sign * 2.0**-t.depth
            assert abs(new) <= abs(r) / 3
            r = new


def test_sdl_inf_norm_monotone():
    rng = np.random.default_rng(5)
    for _ in range(200):
        v = rng.uniform(-1, 1, int(rng.integers(1, 64)))
        a, trace = sdl_approximate(v, QuantizerBudget(int(rng.integers(1, 200)), 24))
        norms = [np.max(np.abs(v))] + [s.residue_inf for s in trace.steps]
        assert all(b <= a_ for a_, b in zip(norms, norms[1:]))


def test_sdl_deterministic():
    v = np.random.default_rng(2).uniform(-1, 1, 100)
    assert sdl_approximate(v, QuantizerBudget(120))[0] == sdl_approximate(v, QuantizerBudget(120))[0]


# -- MPGBP --------------------------------------------------------------------------

def test_mpgbp_examples():
    a, trace = mpgbp_approximate([0.5, -0.5, 0.0, 0.0], QuantizerBudget(4, 10))
    assert len(trace) == 1
    assert trace.steps[0].depth == 1
    assert trace.steps[0].signs == (1, -1)
    assert reconstruct(a).tolist() == [0.5, -0.5, 0.0, 0.0]

    a_mp, _ = mpgbp_approximate([0.7], QuantizerBudget(3, 10))
    a_sdl, _ = sdl_approximate([0.7], QuantizerBudget(3, 10))
    assert a_mp.terms == a_sdl.terms

    a, trace = mpgbp_approximate(np.zeros(9), QuantizerBudget(5))
    assert len(a) == 0 and len(trace) == 0


def test_codeword_size():
    assert [codeword_size(n) for n in (1, 3, 4, 15, 16, 512)] == [1, 1, 2, 3, 4, 22]


def test_mpgbp_budget_rounds_up_to_whole_codewords():
    v = np.random.default_rng(9).uniform(-1, 1, 512)
    for m_max in (1, 22, 23, 100, 922):
        a, trace = mpgbp_approximate(v, QuantizerBudget(m_max, 40))
        P = 22
        assert trace.stop_reason == "budget"
        assert len(a) == math.ceil(m_max / P) * P
        assert len(a) <= m_max + P - 1


def test_mpgbp_energy_strictly_decreases():
    rng = np.random.default_rng(13)
    for _ in range(1000):
        n = int(rng.integers(4, 513))
        v = rng.uniform(-1, 1, n)
        budget = QuantizerBudget(int(rng.integers(1, 3 * n)), 24)
        _, trace = mpgbp_approximate(v, budget)
        norms = [np.linalg.norm(v)] + [s.residue_norm for s in trace.steps]
        assert all(b < a for a, b in zip(norms, norms[1:]))


def test_mpgbp_deterministic_with_ties():
    v = np.array([0.25, -0.25, 0.25, -0.25, 0.1])
    a1, t1 = mpgbp_approximate(v, QuantizerBudget(6))
    a2, t2 = mpgbp_approximate(v, QuantizerBudget(6))
    assert a1 == a2
    assert t1.steps[0].positions == (0, 1)
