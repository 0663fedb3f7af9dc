"""Sum-of-signed-powers-of-two (SOPOT) representation.

A SOPOT approximation of a length-N real vector is a bag of signed
power-of-two terms ``(position, depth, sign)``; each term contributes
``sign * 2**-depth`` to element ``position``. A global factor
``2**scale_exponent`` is applied on reconstruction so that inputs with
``max|v| > 1`` can be handled by a lossless power-of-two shift.
"""

from __future__ import annotations

import io
import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple

import numpy as np

DEFAULT_MAX_DEPTH = 24


class SopotError(ValueError):
    """Raised on malformed SOPOT input (non-finite values, bad terms)."""


class SptTerm(NamedTuple):
    position: int
    depth: int
    sign: int


@dataclass(frozen=True)
class SopotApprox:
    length: int
    depth_limit: int = DEFAULT_MAX_DEPTH
    terms: tuple[SptTerm, ...] = ()
    scale_exponent: int = 0

    def __post_init__(self):
        if self.length < 0:
            raise SopotError(f"negative length {self.length}")
        if self.depth_limit < 0:
            raise SopotError(f"negative depth limit {self.depth_limit}")
        terms = tuple(SptTerm(int(p), int(k), int(c)) for p, k, c in self.terms)
        for t in terms:
            if t.sign not in (-1, 1):
                raise SopotError(f"sign must be +-1, got {t}")
            if not 0 <= t.depth <= self.depth_limit:
                raise SopotError(f"depth out of [0, {self.depth_limit}]: {t}")
            if not 0 <= t.position < self.length:
                raise SopotError(f"position out of [0, {self.length}): {t}")
        object.__setattr__(self, "terms", terms)

    def __len__(self) -> int:
        return len(self.terms)

    @property
    def spt_per_coeff(self) -> float:
        return len(self.terms) / self.length if self.length else 0.0

    def is_canonical(self) -> bool:
        cells = {(t.position, t.depth) for t in self.terms}
        return len(cells) == len(self.terms)


def unit_inf_scale(v) -> tuple[np.ndarray, int]:
    """Shift ``v`` down by a power of two so that ``max|scaled| <= 1``.

    Returns ``(scaled, exponent)`` with ``scaled * 2**exponent == v`` exactly.
    Vectors already inside the unit ball are returned unchanged (exponent 0);
    they are never scaled up.
    """
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise SopotError("input contains non-finite values")
    peak = float(np.max(np.abs(v))) if v.size else 0.0
    if peak <= 1.0:
        return v.copy(), 0
    mant, exp = math.frexp(peak)  # peak = mant * 2**exp, mant in [0.5, 1)
    exponent = exp if mant > 0.5 else exp - 1
    return np.ldexp(v, -exponent), exponent


def _position_integers(approx: SopotApprox) -> dict[int, int]:
    # Exact per-position sums in units of 2**-depth_limit.
    top = approx.depth_limit
    acc: dict[int, int] = defaultdict(int)
    for p, k, c in approx.terms:
        acc[p] += c << (top - k)
    return acc


def reconstruct(approx: SopotApprox) -> np.ndarray:
    """Exact value of the approximation, ``2**s * sum_i c_i 2**-k_i e(p_i)``."""
    out = np.zeros(approx.length)
    shift = approx.scale_exponent - approx.depth_limit
    for p, total in _position_integers(approx).items():
        # float(int) rounds once, correctly; exact whenever the value fits a double
        out[p] = math.ldexp(float(total), shift)
    return out


def spt_count(approx: SopotApprox) -> int:
    return len(approx.terms)


def merge_canonical(approx: SopotApprox) -> SopotApprox:
    """Combine terms sharing a (position, depth) cell.

    Opposite signs cancel and equal pairs carry one level up (depth - 1).
    A carry above depth 0 raises ``scale_exponent`` and re-indexes every
    depth so that all depths stay non-negative; the value is unchanged.
    Canonical input is returned as is.
    """
    if approx.is_canonical():
        return approx

    cells: dict[int, dict[int, int]] = defaultdict(lambda: defaultdict(int))
    for p, k, c in approx.terms:
        cells[p][k] += c

    merged: list[SptTerm] = []
    for p in sorted(cells):
        digits = cells[p]
        k = max(digits)
        lowest = min(digits)
        carry = 0
        # walk from the finest plane upward, carrying pairs
        while k >= lowest or carry:
            n = digits.get(k, 0) + carry
            if n % 2:
                r = 1 if n > 0 else -1
            else:
                r = 0
            carry = (n - r) // 2
            if r:
                merged.append(SptTerm(p, k, r))
            k -= 1

    shift = max(0, -min((t.depth for t in merged), default=0))
    if shift:
        merged = [SptTerm(p, k + shift, c) for p, k, c in merged]
    merged.sort(key=lambda t: (t.position, t.depth))
    return SopotApprox(
        length=approx.length,
        depth_limit=approx.depth_limit + shift,
        terms=tuple(merged),
        scale_exponent=approx.scale_exponent + shift,
    )


def to_matrix(approx: SopotApprox) -> np.ndarray:
    """Dense ``N x (B_max + 1)`` allocation matrix with entries in {-1, 0, 1}."""
    if not approx.is_canonical():
        raise SopotError("approximation has repeated cells; merge_canonical first")
    mat = np.zeros((approx.length, approx.depth_limit + 1), dtype=np.int8)
    for p, k, c in approx.terms:
        mat[p, k] = c
    return mat


def basis(depth_limit: int) -> np.ndarray:
    """Power-of-two basis ``[2**0, 2**-1, ..., 2**-depth_limit]``."""
    return np.ldexp(1.0, -np.arange(depth_limit + 1))


def from_matrix(mat, scale_exponent: int = 0) -> SopotApprox:
    mat = np.asarray(mat)
    rows, cols = np.nonzero(mat)
    terms = [SptTerm(int(p), int(k), int(mat[p, k])) for p, k in zip(rows, cols)]
    return SopotApprox(mat.shape[0], mat.shape[1] - 1, tuple(terms), scale_exponent)


# -- trace files ---------------------------------------------------------------

def write_trace(approx: SopotApprox, path) -> None:
    """Write ``approx`` as a CSV trace: ``#`` metadata, then ``index,depth,sign``."""
    buf = io.StringIO()
    buf.write(f"# N={approx.length}\n")
    buf.write(f"# B_max={approx.depth_limit}\n")
    buf.write(f"# scale_exponent={approx.scale_exponent}\n")
    buf.write("index,depth,sign\n")
    for p, k, c in approx.terms:
        buf.write(f"{p},{k},{c}\n")
    Path(path).write_text(buf.getvalue())


def read_trace(path) -> SopotApprox:
    meta: dict[str, int] = {}
    terms: list[SptTerm] = []
    header_seen = False
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            meta[key.strip()] = int(value)
            continue
        if not header_seen:
            if line.replace(" ", "") != "index,depth,sign":
                raise SopotError(f"{path}:{lineno}: bad header {line!r}")
            header_seen = True
            continue
        p, k, c = (int(x) for x in line.split(","))
        terms.append(SptTerm(p, k, c))
    missing = {"N", "B_max", "scale_exponent"} - meta.keys()
    if missing:
        raise SopotError(f"{path}: missing metadata {sorted(missing)}")
    return SopotApprox(meta["N"], meta["B_max"], tuple(terms), meta["scale_exponent"])


def terms_from(triples: Iterable[tuple[int, int, int]]) -> tuple[SptTerm, ...]:
    return tuple(SptTerm(*t) for t in triples)
