"""SOPOT approximation algorithms.

Three routes from real coefficients to signed powers of two:

* ``csd_vector``  - per-element fixed-point rounding followed by canonical
  signed digit recoding;
* ``sdl_approximate`` - signed digit loading, a greedy allocator that
  spends one SPT at a time on the largest residue entry;
* ``mpgbp_approximate`` - matching pursuits with generalized bit planes,
  spending ``P = floor(sqrt(N))`` SPTs per iteration on the ``P`` largest
  residue entries.

The two vector methods share ``nearest_pow2_depth``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .sopot import DEFAULT_MAX_DEPTH, SopotApprox, SopotError, SptTerm, unit_inf_scale


@dataclass(frozen=True)
class FixedPointWord:
    """``B``-bit two's complement word, MSB first.

    value = -bits[0] + sum_{b>=1} bits[b] * 2**-b
    """

    wordlength: int
    bits: tuple[int, ...]

    def __post_init__(self):
        if self.wordlength < 2:
            raise SopotError(f"wordlength must be >= 2, got {self.wordlength}")
        if len(self.bits) != self.wordlength or any(b not in (0, 1) for b in self.bits):
            raise SopotError(f"bad bit pattern {self.bits!r} for B={self.wordlength}")

    @classmethod
    def from_integer(cls, q: int, wordlength: int) -> FixedPointWord:
        """Word whose value is ``q * 2**-(wordlength - 1)``."""
        lo, hi = -(1 << (wordlength - 1)), (1 << (wordlength - 1)) - 1
        if not lo <= q <= hi:
            raise SopotError(f"{q} does not fit in {wordlength} bits")
        u = q % (1 << wordlength)
        bits = tuple((u >> (wordlength - 1 - b)) & 1 for b in range(wordlength))
        return cls(wordlength, bits)

    @property
    def integer(self) -> int:
        u = 0
        for b in self.bits:
            u = (u << 1) | b
        return u - (self.bits[0] << self.wordlength)

    @property
    def value(self) -> float:
        return math.ldexp(self.integer, -(self.wordlength - 1))


@dataclass(frozen=True)
class QuantizerBudget:
    max_spts: int
    max_depth: int = DEFAULT_MAX_DEPTH

    def __post_init__(self):
        if self.max_spts < 1:
            raise SopotError(f"max_spts must be >= 1, got {self.max_spts}")
        if self.max_depth < 0:
            raise SopotError(f"max_depth must be >= 0, got {self.max_depth}")


@dataclass(frozen=True)
class PursuitStep:
    iteration: int
    positions: tuple[int, ...]
    signs: tuple[int, ...]
    depth: int
    residue_inf: float
    residue_norm: float


@dataclass
class PursuitTrace:
    steps: list[PursuitStep] = field(default_factory=list)
    raw_spts: int = 0
    stop_reason: str = ""

    def __len__(self) -> int:
        return len(self.steps)


# -- fixed point + CSD -----------------------------------------------------------

def quantize_fixed_point(v: float, wordlength: int) -> FixedPointWord:
    """Round ``v`` to the nearest ``B``-bit two's complement value.

    Ties go to the even last bit; out-of-range inputs saturate.
    """
    if not math.isfinite(v):
        raise SopotError(f"cannot quantize non-finite value {v!r}")
    if wordlength < 2:
        raise SopotError(f"wordlength must be >= 2, got {wordlength}")
    frac = wordlength - 1
    lo, hi = -(1 << frac), (1 << frac) - 1
    if v <= lo * 2.0**-frac:
        q = lo
    elif v >= hi * 2.0**-frac:
        q = hi
    else:
        q = round(math.ldexp(v, frac))  # banker's rounding
    return FixedPointWord.from_integer(q, wordlength)


def csd_digits(word: FixedPointWord) -> list[int]:
    """CSD digits ``d[0..B-1]`` of ``word``; digit ``i`` weighs ``2**-i``.

    Bit-serial recoding from the LSB: a digit is emitted where two adjacent
    two's complement bits differ, unless the previous (finer) digit was
    nonzero; its sign comes from the next more significant bit.
    """
    B = word.wordlength
    c = list(word.bits) + [0, 0]  # c[B] = c[B+1] = 0
    def bit(i):  # sign extension: c[-1] = c[0]
        return c[0] if i < 0 else c[i]
    digits = [0] * (B + 1)
    delta_next = 0
    for i in range(B, -1, -1):
        theta = bit(i) ^ bit(i + 1)
        delta = (1 - delta_next) * theta
        digits[i] = (1 - 2 * bit(i - 1)) * delta
        delta_next = delta
    # digit B is always zero: c[B] = c[B+1] = 0
    return digits[:B]


def csd_recode(word: FixedPointWord) -> SopotApprox:
    digits = csd_digits(word)
    terms = tuple(SptTerm(0, i, d) for i, d in enumerate(digits) if d)
    return SopotApprox(1, word.wordlength - 1, terms)


def csd_vector(v, wordlength: int) -> SopotApprox:
    """Element-by-element CSD approximation of ``v``.

    ``wordlength`` counts the sign bit plus fractional bits, so the grid step
    is ``2**-(wordlength-1)`` in the units of ``v``. Inputs outside the unit
    ball get as many extra integer bits as ``unit_inf_scale`` removes; the
    result then carries that exponent, and nothing saturates.
    """
    scaled, s = unit_inf_scale(v)
    B = wordlength + s
    terms: list[SptTerm] = []
    for p, x in enumerate(scaled):
        for _, k, c in csd_recode(quantize_fixed_point(float(x), B)).terms:
            terms.append(SptTerm(p, k, c))
    return SopotApprox(len(scaled), B - 1, tuple(terms), s)


# -- shared depth rule --------------------------------------------------------

def nearest_pow2_depth(magnitude: float, P: int = 1) -> int:
    """Depth ``k`` such that ``(3/4) 2**-k <= magnitude/P < (3/2) 2**-k``.

    Equivalent to ``ceil(-log2(4 magnitude / (3 P)))``; the boundaries are
    checked exactly so the lower bound stays inclusive.
    """
    if not magnitude > 0:
        raise SopotError(f"depth undefined for magnitude {magnitude!r}")
    if P < 1:
        raise SopotError(f"P must be >= 1, got {P}")
    k = math.ceil(-math.log2(4.0 * magnitude / (3.0 * P)))
    # 3P * 2**-(k+2) is exact, so these comparisons are too
    while math.ldexp(3 * P, -(k + 2)) > magnitude:
        k += 1
    while math.ldexp(3 * P, -(k + 1)) <= magnitude:
        k -= 1
    return k


# -- vector methods -----------------------------------------------------------

def _as_residue(v) -> np.ndarray:
    r = np.array(v, dtype=float).ravel()
    if r.size == 0:
        raise SopotError("empty vector")
    if not np.all(np.isfinite(r)):
        raise SopotError("input contains non-finite values")
    if np.max(np.abs(r)) > 1.0:
        raise SopotError("input must satisfy max|v| <= 1; apply unit_inf_scale first")
    return r


def sdl_approximate(v, budget: QuantizerBudget) -> tuple[SopotApprox, PursuitTrace]:
    """Signed digit loading.

    Each iteration picks the first entry of largest absolute residue and
    allocates one SPT there at the nearest power-of-two depth. Stops after
    ``budget.max_spts`` allocations, when a requested depth exceeds
    ``budget.max_depth``, or when the residue is exactly zero.
    """
    r = _as_residue(v)
    terms: list[SptTerm] = []
    trace = PursuitTrace()
    i = 0
    while True:
        if len(terms) >= budget.max_spts:
            trace.stop_reason = "budget"
            break
        p = int(np.argmax(np.abs(r)))  # first occurrence on ties
        mag = abs(r[p])
        if mag == 0.0:
            trace.stop_reason = "exact"
            break
        c = 1 if r[p] > 0 else -1
        k = nearest_pow2_depth(mag)
        if k > budget.max_depth:
            trace.stop_reason = "depth"
            break
        r[p] -= c * math.ldexp(1.0, -k)  # exact by Sterbenz
        terms.append(SptTerm(p, k, c))
        trace.steps.append(
            PursuitStep(i, (p,), (c,), k, float(np.max(np.abs(r))), float(np.linalg.norm(r)))
        )
        i += 1
    trace.raw_spts = len(terms)
    return SopotApprox(r.size, budget.max_depth, tuple(terms)), trace


def codeword_size(n: int) -> int:
    return max(1, math.isqrt(n))


def mpgbp_approximate(v, budget: QuantizerBudget) -> tuple[SopotApprox, PursuitTrace]:
    """Matching pursuits with generalized bit planes.

    The codeword at each step holds the signs of the ``P`` largest residue
    entries (stable order on ties). Its depth follows the nearest power-of-two
    rule on their summed magnitude, and only that codeword is subtracted from
    the residue. Iterates while fewer than ``budget.max_spts`` SPTs have been
    spent, so the raw count ends at ``ceil(M_max / P) * P`` unless the depth
    limit or an exact fit stops it first.

    Raw terms may hit the same (position, depth) cell twice; see
    ``merge_canonical``.
    """
    r = _as_residue(v)
    P = codeword_size(r.size)
    terms: list[SptTerm] = []
    trace = PursuitTrace()
    i = 0
    while True:
        if len(terms) >= budget.max_spts:
            trace.stop_reason = "budget"
            break
        idx = np.argsort(-np.abs(r), kind="stable")[:P]
        mag = float(np.sum(np.abs(r[idx])))
        if mag == 0.0:
            trace.stop_reason = "exact"
            break
        k = nearest_pow2_depth(mag, P)
        if k > budget.max_depth:
            trace.stop_reason = "depth"
            break
        signs = np.where(r[idx] > 0, 1, -1)
        r[idx] -= signs * math.ldexp(1.0, -k)
        for p, c in zip(idx, signs):
            terms.append(SptTerm(int(p), k, int(c)))
        trace.steps.append(
            PursuitStep(
                i,
                tuple(int(p) for p in idx),
                tuple(int(c) for c in signs),
                k,
                float(np.max(np.abs(r))),
                float(np.linalg.norm(r)),
            )
        )
        i += 1
    trace.raw_spts = len(terms)
    return SopotApprox(r.size, budget.max_depth, tuple(terms)), trace


METHODS = ("CSD", "SDL", "MPGBP")
