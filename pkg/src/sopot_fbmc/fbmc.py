"""OQAM-FBMC transceiver: prototype filter, staggering, synthesis, analysis.

Conventions: ``M`` subcarriers, overlap ``K_ov``, filter length
``L = K_ov * M``, PAM instants spaced ``M/2`` samples apart. Grids are
indexed ``[k, n]`` (subcarrier, time).
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PHYDYAS_H = {4: (1.0, 0.971960, np.sqrt(2.0) / 2.0, 0.235147)}

_QUARTER_TURNS = np.array([1, 1j, -1, -1j])


class FbmcError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FbmcConfig:
    num_subcarriers: int = 128
    overlap: int = 4
    num_blocks: int = 64
    active_mask: np.ndarray | None = None

    def __post_init__(self):
        M = self.num_subcarriers
        if M < 2 or M % 2:
            raise FbmcError(f"num_subcarriers must be even and >= 2, got {M}")
        if self.overlap < 1:
            raise FbmcError(f"overlap must be >= 1, got {self.overlap}")
        if self.num_blocks < 1:
            raise FbmcError(f"num_blocks must be >= 1, got {self.num_blocks}")
        mask = np.ones(M, bool) if self.active_mask is None else np.asarray(self.active_mask, bool)
        if mask.shape != (M,):
            raise FbmcError(f"active_mask must have shape ({M},), got {mask.shape}")
        mask = mask.copy()
        mask.flags.writeable = False
        object.__setattr__(self, "active_mask", mask)

    @property
    def filter_length(self) -> int:
        return self.overlap * self.num_subcarriers

    @property
    def pam_instants(self) -> int:
        return 2 * self.num_blocks

    @property
    def signal_length(self) -> int:
        return self.filter_length + (self.pam_instants - 1) * self.num_subcarriers // 2

    def with_central_band(self, width: int | None = None) -> FbmcConfig:
        """Copy with only the ``width`` subcarriers around DC active (default M/2)."""
        M = self.num_subcarriers
        width = M // 2 if width is None else width
        return FbmcConfig(M, self.overlap, self.num_blocks, central_mask(M, width))


def central_mask(M: int, width: int) -> np.ndarray:
    k = np.arange(M)
    signed = np.where(k < M // 2, k, k - M)  # subcarrier k sits at frequency k/M
    return (signed >= -(width // 2)) & (signed < width - width // 2)


@dataclass(frozen=True, eq=False)
class PrototypeFilter:
    coefficients: np.ndarray
    num_subcarriers: int
    overlap: int

    def __post_init__(self):
        g = np.array(self.coefficients, dtype=float)
        if g.shape != (self.num_subcarriers * self.overlap,):
            raise FbmcError(
                f"filter length {g.shape} != overlap*subcarriers = {self.num_subcarriers * self.overlap}"
            )
        g.flags.writeable = False
        object.__setattr__(self, "coefficients", g)

    @property
    def energy(self) -> float:
        return float(self.coefficients @ self.coefficients)

    def __len__(self) -> int:
        return self.coefficients.size


def phydyas_prototype(M: int = 128, K_ov: int = 4) -> PrototypeFilter:
    """PHYDYAS prototype filter, normalized to unit energy.

    ``g[m] = 1 + 2 sum_q (-1)^q H_q cos(2 pi q m / L)``; ``g[0]`` is the
    (near-)zero end sample, so ``g[m] == g[L-m]``.
    """
    if K_ov not in PHYDYAS_H:
        raise FbmcError(f"PHYDYAS coefficients are only tabulated for K_ov in {sorted(PHYDYAS_H)}")
    H = PHYDYAS_H[K_ov]
    L = K_ov * M
    m = np.arange(L)
    g = np.full(L, H[0])
    for q in range(1, K_ov):
        g += 2 * (-1) ** q * H[q] * np.cos(2 * np.pi * q * m / L)
    g /= np.sqrt(g @ g)
    return PrototypeFilter(g, M, K_ov)


# -- OQAM staggering ------------------------------------------------------------

def oqam_phase(k, n) -> np.ndarray:
    """``exp(j phi_{k,n})`` with ``phi = pi/2 (k+n) - pi k n``; always in {1, j, -1, -j}."""
    k = np.asarray(k)
    n = np.asarray(n)
    return _QUARTER_TURNS[(k + n + 2 * k * n) % 4]


def phase_grid(M: int, n_instants: int, n_start: int = 0) -> np.ndarray:
    k = np.arange(M)[:, None]
    n = np.arange(n_start, n_start + n_instants)[None, :]
    return oqam_phase(k, n)


def oqam_map(d) -> np.ndarray:
    """QAM grid ``(M, N)`` to PAM grid ``(M, 2N)``: real part first, then imaginary."""
    d = np.asarray(d)
    a = np.empty((d.shape[0], 2 * d.shape[1]))
    a[:, 0::2] = d.real
    a[:, 1::2] = d.imag
    return a


def oqam_demap(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape[1] % 2:
        raise FbmcError(f"PAM grid needs an even number of instants, got {a.shape[1]}")
    return a[:, 0::2] + 1j * a[:, 1::2]


# -- synthesis / analysis ---------------------------------------------------------

def _check_grid(a, filt: PrototypeFilter) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != filt.num_subcarriers:
        raise FbmcError(f"grid shape {a.shape} does not match M={filt.num_subcarriers}")
    return a


def synthesize(a, filt: PrototypeFilter) -> np.ndarray:
    """Transmit signal ``s[m] = sum_{k,n} a[k,n] g[m - nM/2] e^{j2pi km/M} e^{j phi_{k,n}}``.

    Polyphase implementation: one IFFT per PAM instant, the result tiled
    ``K_ov`` times and weighted by the prototype, then overlap-added with a
    hop of ``M/2``.
    """
    a = _check_grid(a, filt)
    M, n_inst = a.shape
    L = len(filt)
    hop = M // 2
    k = np.arange(M)[:, None]
    n = np.arange(n_inst)[None, :]
    # e^{j 2pi k (n M/2) / M} = (-1)^{kn}
    b = a * oqam_phase(k, n) * np.where((k * n) % 2, -1.0, 1.0)
    blocks = np.fft.ifft(b, axis=0) * M  # (M, n_inst)
    tiled = np.tile(blocks, (filt.overlap, 1)) * filt.coefficients[:, None]
    out = np.zeros(L + (n_inst - 1) * hop, dtype=complex)
    for i in range(n_inst):
        out[i * hop : i * hop + L] += tiled[:, i]
    return out


def synthesize_direct(a, filt: PrototypeFilter) -> np.ndarray:
    """Literal double sum over subcarriers and instants; reference for ``synthesize``."""
    a = _check_grid(a, filt)
    M, n_inst = a.shape
    L = len(filt)
    hop = M // 2
    g = filt.coefficients
    out = np.zeros(L + (n_inst - 1) * hop, dtype=complex)
    m = np.arange(out.size)
    for n in range(n_inst):
        shifted = np.zeros(out.size)
        shifted[n * hop : n * hop + L] = g
        for kk in range(M):
            if a[kk, n] != 0:
                out += a[kk, n] * shifted * np.exp(2j * np.pi * kk * m / M) * oqam_phase(kk, n)
    return out


def analyze_complex(signal, filt: PrototypeFilter, n_instants: int | None = None) -> np.ndarray:
    """Inner products ``<s, g_{k,n}>`` for every subcarrier and PAM instant.

    No energy normalization and no real-part extraction; this is the exact
    adjoint of ``synthesize``.
    """
    s = np.asarray(signal, dtype=complex)
    M = filt.num_subcarriers
    L = len(filt)
    hop = M // 2
    if n_instants is None:
        if (s.size - L) % hop or s.size < L:
            raise FbmcError(f"signal length {s.size} is not L + i*M/2 for L={L}")
        n_instants = (s.size - L) // hop + 1
    if s.size != L + (n_instants - 1) * hop:
        raise FbmcError(f"signal length {s.size} does not carry {n_instants} instants")
    segs = np.lib.stride_tricks.sliding_window_view(s, L)[::hop][:n_instants]
    folded = (segs * filt.coefficients).reshape(n_instants, filt.overlap, M).sum(axis=1)
    spec = np.fft.fft(folded, axis=1).T  # (M, n_instants)
    k = np.arange(M)[:, None]
    n = np.arange(n_instants)[None, :]
    return spec * np.conj(oqam_phase(k, n)) * np.where((k * n) % 2, -1.0, 1.0)


def analyze(signal, filt: PrototypeFilter, n_instants: int | None = None) -> np.ndarray:
    """Recovered PAM grid ``Re<s, g_{k,n}> / (g^T g)``.

    Dividing by the filter energy keeps quantized (non unit-energy)
    prototypes unbiased without touching the taps.
    """
    return analyze_complex(signal, filt, n_instants).real / filt.energy


def interference_variance(filt: PrototypeFilter, config: FbmcConfig | None = None) -> float:
    """Residual intrinsic interference power of an OQAM-FBMC chain.

    Sum of ``|Re<g_{0,0}, g_{k,n}>|^2`` over every ``(k, n) != (0, 0)``, all
    ``M`` subcarriers and time shifts ``|n| <= 2 K_ov - 1`` (the filter
    support), normalized by ``(g^T g)^2`` to match ``analyze``.
    """
    M = filt.num_subcarriers if config is None else config.num_subcarriers
    if M != filt.num_subcarriers:
        raise FbmcError("filter and config disagree on the number of subcarriers")
    g = filt.coefficients
    L = g.size
    hop = M // 2
    reach = 2 * filt.overlap - 1
    k = np.arange(M)
    total = 0.0
    for n in range(-reach, reach + 1):
        shift = n * hop
        prod = np.zeros(L)
        lo, hi = max(0, shift), min(L, L + shift)
        if lo >= hi:
            continue
        prod[lo:hi] = g[lo:hi] * g[lo - shift : hi - shift]
        # sum_m prod[m] e^{-j 2pi k m / M}, folded to one period
        spec = np.fft.fft(prod.reshape(filt.overlap, M).sum(axis=0))
        terms = (spec * np.conj(oqam_phase(k, n))).real
        if n == 0:
            terms[0] = 0.0
        total += float(terms @ terms)
    return total / filt.energy**2


# -- filter files -----------------------------------------------------------------

def write_filter(filt: PrototypeFilter, path) -> None:
    buf = io.StringIO()
    buf.write(f"# M={filt.num_subcarriers}\n")
    buf.write(f"# K_ov={filt.overlap}\n")
    buf.write(f"# energy={filt.energy!r}\n")
    buf.write("index,value\n")
    for i, x in enumerate(filt.coefficients):
        buf.write(f"{i},{float(x)!r}\n")
    Path(path).write_text(buf.getvalue())


def read_filter(path) -> PrototypeFilter:
    meta: dict[str, str] = {}
    values: list[float] = []
    header_seen = False
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            meta[key.strip()] = value.strip()
            continue
        if not header_seen:
            if line.replace(" ", "") != "index,value":
                raise FbmcError(f"{path}:{lineno}: bad header {line!r}")
            header_seen = True
            continue
        idx, value = line.split(",")
        if int(idx) != len(values):
            raise FbmcError(f"{path}:{lineno}: expected index {len(values)}, got {idx}")
        values.append(float(value))
    if "M" not in meta or "K_ov" not in meta:
        raise FbmcError(f"{path}: missing M / K_ov metadata")
    return PrototypeFilter(np.array(values), int(meta["M"]), int(meta["K_ov"]))
