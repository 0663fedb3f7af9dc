"""Gray-coded square QAM and the AWGN channel."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

SUPPORTED_ORDERS = (4, 64)


class ModemError(ValueError):
    pass


def _check_order(order: int) -> int:
    if order not in SUPPORTED_ORDERS:
        raise ModemError(f"QAM order must be one of {SUPPORTED_ORDERS}, got {order}")
    return int(round(math.log2(order)))


def bits_per_symbol(order: int) -> int:
    return _check_order(order)


def _axis_scale(order: int) -> float:
    # unit average energy: E|x|^2 = 2 (L^2 - 1) / 3 for L = sqrt(order) levels
    return math.sqrt(2.0 * (order - 1) / 3.0)


def _gray_to_binary(g: np.ndarray) -> np.ndarray:
    b = g.copy()
    shift = g >> 1
    while np.any(shift):
        b ^= shift
        shift >>= 1
    return b


def constellation(order: int) -> np.ndarray:
    """All points, indexed by the integer whose MSB-first bits they carry."""
    b = _check_order(order)
    idx = np.arange(order)
    bits = (idx[:, None] >> np.arange(b - 1, -1, -1)) & 1
    return qam_modulate(bits.ravel(), order)


def qam_modulate(bits, order: int) -> np.ndarray:
    """Map bits (MSB first, first half of each group on I) to unit-energy QAM."""
    b = _check_order(order)
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if bits.size % b:
        raise ModemError(f"{bits.size} bits is not a multiple of {b}")
    half = b // 2
    levels = 1 << half
    groups = bits.reshape(-1, b)
    weights = 1 << np.arange(half - 1, -1, -1)
    gi = groups[:, :half] @ weights
    gq = groups[:, half:] @ weights
    ii = _gray_to_binary(gi)
    iq = _gray_to_binary(gq)
    return ((2 * ii - (levels - 1)) + 1j * (2 * iq - (levels - 1))) / _axis_scale(order)


def qam_demodulate(symbols, order: int) -> np.ndarray:
    """Nearest-point hard decisions back to bits."""
    b = _check_order(order)
    half = b // 2
    levels = 1 << half
    z = np.asarray(symbols).ravel() * _axis_scale(order)

    def axis(x):
        i = np.clip(np.round((x + levels - 1) / 2), 0, levels - 1).astype(np.int64)
        g = i ^ (i >> 1)
        return (g[:, None] >> np.arange(half - 1, -1, -1)) & 1

    return np.hstack([axis(z.real), axis(z.imag)]).ravel()


def qfunc(x):
    return 0.5 * erfc(np.asarray(x) / np.sqrt(2.0))


def theoretical_ber(ebn0_db, order: int) -> np.ndarray:
    """Gray-coded square QAM over AWGN (exact for 4-QAM, nearest-neighbour otherwise)."""
    b = _check_order(order)
    ebn0 = 10.0 ** (np.asarray(ebn0_db, dtype=float) / 10.0)
    if order == 4:
        return qfunc(np.sqrt(2.0 * ebn0))
    L = math.isqrt(order)
    return (4.0 / b) * (1 - 1 / L) * qfunc(np.sqrt(3.0 * b * ebn0 / (order - 1)))


@dataclass(frozen=True)
class NoiseSpec:
    """AWGN level referred to information bits at the QAM level.

    ``symbol_energy`` is the transmitted energy per unit-energy QAM symbol
    after the chain (the prototype filter energy for OQAM-FBMC, since each
    QAM symbol rides on two PAM instants of half its energy).
    """

    ebn0_db: float
    seed: int
    order: int = 4
    symbol_energy: float = 1.0

    @property
    def variance(self) -> float:
        """Per complex sample, ``E|w|^2``."""
        if math.isinf(self.ebn0_db) and self.ebn0_db > 0:
            return 0.0
        ebn0 = 10.0 ** (self.ebn0_db / 10.0)
        return self.symbol_energy / (bits_per_symbol(self.order) * ebn0)


def awgn_apply(signal, noise: NoiseSpec, rng: np.random.Generator | None = None) -> np.ndarray:
    """Add circularly-symmetric complex Gaussian noise.

    Drawn from ``rng`` if given, otherwise from a generator seeded by
    ``noise.seed``.
    """
    x = np.asarray(signal)
    var = noise.variance
    if var == 0.0:
        return x.copy()
    if rng is None:
        rng = np.random.default_rng(noise.seed)
    sigma = math.sqrt(var / 2.0)
    w = rng.normal(0.0, sigma, x.shape) + 1j * rng.normal(0.0, sigma, x.shape)
    return x + w
