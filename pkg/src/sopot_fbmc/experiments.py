"""Filter-approximation sweeps and OQAM-FBMC link experiments.

Approximations act on the polyphase-network coefficients ``gain * g``. With
``gain = M`` (the default) this is the tap set an implementation built on an
unnormalized ``M``-point IFFT multiplies by. The gain is a power of two, so
scaling back to unit-energy units is exact.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import signal as sps

from . import modem
from .fbmc import (
    FbmcConfig,
    FbmcError,
    PrototypeFilter,
    analyze_complex,
    interference_variance,
    oqam_demap,
    oqam_map,
    synthesize,
)
from .quantizers import (
    METHODS,
    PursuitTrace,
    QuantizerBudget,
    csd_vector,
    mpgbp_approximate,
    sdl_approximate,
)
from .sopot import DEFAULT_MAX_DEPTH, SopotApprox, merge_canonical, reconstruct, unit_inf_scale

CSD_WORDLENGTHS = (3, 4, 5, 6, 7, 8)
THREADS_ENV = "SOPOT_FBMC_THREADS"


class ExperimentError(ValueError):
    pass


# -- filter approximation -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FilterApproximation:
    method: str
    setting: int  # wordlength for CSD, SPT budget otherwise
    approx: SopotApprox
    filter: PrototypeFilter
    trace: PursuitTrace | None = None

    @property
    def spt_per_coeff_raw(self) -> float:
        return self.approx.spt_per_coeff

    @property
    def spt_per_coeff_merged(self) -> float:
        return merge_canonical(self.approx).spt_per_coeff

    @property
    def label(self) -> str:
        if self.method == "CSD":
            return f"CSD-{self.setting}bit"
        return f"{self.method}-{self.spt_per_coeff_raw:.2f}"


def _gain_exponent(gain: int) -> int:
    e = int(gain).bit_length() - 1
    if gain < 1 or (1 << e) != gain:
        raise ExperimentError(f"gain must be a positive power of two, got {gain}")
    return e


def approximate_filter(
    filt: PrototypeFilter,
    method: str,
    *,
    wordlength: int | None = None,
    spt_per_coeff: float | None = None,
    max_spts: int | None = None,
    max_depth: int = DEFAULT_MAX_DEPTH,
    gain: int | None = None,
) -> FilterApproximation:
    method = method.upper()
    gain = filt.num_subcarriers if gain is None else gain
    shift = _gain_exponent(gain)
    taps = np.ldexp(filt.coefficients, shift)
    trace = None
    if method == "CSD":
        if wordlength is None:
            raise ExperimentError("CSD needs a wordlength")
        approx = csd_vector(taps, wordlength)
        setting = wordlength
    elif method in ("SDL", "MPGBP"):
        if max_spts is None:
            if spt_per_coeff is None:
                raise ExperimentError(f"{method} needs spt_per_coeff or max_spts")
            max_spts = round(spt_per_coeff * len(filt))
        scaled, s = unit_inf_scale(taps)
        run = sdl_approximate if method == "SDL" else mpgbp_approximate
        approx, trace = run(scaled, QuantizerBudget(max_spts, max_depth))
        approx = replace(approx, scale_exponent=s)
        setting = max_spts
    else:
        raise ExperimentError(f"unknown method {method!r}; choose from {METHODS}")
    approx = replace(approx, scale_exponent=approx.scale_exponent - shift)
    ghat = PrototypeFilter(reconstruct(approx), filt.num_subcarriers, filt.overlap)
    return FilterApproximation(method, setting, approx, ghat, trace)


def parse_curve(spec: str) -> tuple[str, float | None]:
    """``"reference"``, ``"csd:4"``, ``"sdl:1.8"``, ``"mpgbp:1.8"``."""
    name, _, arg = spec.partition(":")
    name = name.strip().upper()
    if name in ("REFERENCE", "ORIGINAL", "REF"):
        if arg:
            raise ExperimentError(f"reference curve takes no argument: {spec!r}")
        return "REFERENCE", None
    if name not in METHODS or not arg:
        raise ExperimentError(f"bad curve spec {spec!r}; use reference, csd:B, sdl:X or mpgbp:X")
    value = float(arg)
    if name == "CSD" and value != int(value):
        raise ExperimentError(f"CSD wordlength must be an integer: {spec!r}")
    return name, value


def curve_filter(
    spec: str, reference: PrototypeFilter, max_depth: int = DEFAULT_MAX_DEPTH, gain: int | None = None
) -> tuple[str, PrototypeFilter]:
    method, value = parse_curve(spec)
    if method == "REFERENCE":
        return "reference", reference
    if method == "CSD":
        fa = approximate_filter(reference, method, wordlength=int(value), max_depth=max_depth, gain=gain)
        return f"csd-{int(value)}bit", fa.filter
    fa = approximate_filter(reference, method, spt_per_coeff=value, max_depth=max_depth, gain=gain)
    return f"{method.lower()}-{value:g}", fa.filter


# -- MSE / interference sweeps ----------------------------------------------------

def approximation_mse(g, ghat) -> float:
    """``10 log10(mean (g - ghat)^2)``; ``-inf`` when identical."""
    g = np.asarray(g, dtype=float)
    ghat = np.asarray(ghat, dtype=float)
    if g.shape != ghat.shape:
        raise ExperimentError(f"length mismatch: {g.shape} vs {ghat.shape}")
    mse = float(np.mean((g - ghat) ** 2))
    return 10.0 * math.log10(mse) if mse > 0 else -math.inf


def _db(x: float) -> float:
    return 10.0 * math.log10(x) if x > 0 else -math.inf


@dataclass(frozen=True)
class SweepRow:
    method: str
    setting: int
    spt_per_coeff_raw: float
    spt_per_coeff_merged: float
    mse_db: float
    interference_db: float | None = None


def csd_complexities(filt: PrototypeFilter, wordlengths=CSD_WORDLENGTHS, gain: int | None = None) -> list[float]:
    return [approximate_filter(filt, "CSD", wordlength=B, gain=gain).spt_per_coeff_raw for B in wordlengths]


def run_mse_sweep(
    filt: PrototypeFilter,
    methods: Sequence[str] = METHODS,
    complexity_grid: Sequence[float] | None = None,
    *,
    wordlengths: Sequence[int] = CSD_WORDLENGTHS,
    max_depth: int = DEFAULT_MAX_DEPTH,
    gain: int | None = None,
    interference: bool = False,
) -> list[SweepRow]:
    """One row per (method, complexity).

    CSD rows are keyed by wordlength. Vector methods get
    ``M_max = round(c * L)`` for each ``c`` in ``complexity_grid``, which
    defaults to the SPT/coeff the CSD rows achieve (a matched comparison).
    """
    methods = [m.upper() for m in methods]
    for m in methods:
        if m not in METHODS:
            raise ExperimentError(f"unknown method {m!r}")
    if complexity_grid is None:
        complexity_grid = csd_complexities(filt, wordlengths, gain)
    if len(complexity_grid) == 0 and any(m != "CSD" for m in methods):
        raise ExperimentError("empty complexity grid")

    def row(fa: FilterApproximation) -> SweepRow:
        interf = _db(interference_variance(fa.filter)) if interference else None
        return SweepRow(
            fa.method,
            fa.setting,
            fa.spt_per_coeff_raw,
            fa.spt_per_coeff_merged,
            approximation_mse(filt.coefficients, fa.filter.coefficients),
            interf,
        )

    rows = []
    for m in methods:
        if m == "CSD":
            for B in wordlengths:
                rows.append(row(approximate_filter(filt, m, wordlength=B, max_depth=max_depth, gain=gain)))
        else:
            for c in complexity_grid:
                budget = max(1, round(c * len(filt)))
                rows.append(row(approximate_filter(filt, m, max_spts=budget, max_depth=max_depth, gain=gain)))
    return rows


def run_interference_sweep(
    filt: PrototypeFilter,
    methods: Sequence[str] = METHODS,
    complexity_grid: Sequence[float] | None = None,
    config: FbmcConfig | None = None,
    *,
    wordlengths: Sequence[int] = CSD_WORDLENGTHS,
    max_depth: int = DEFAULT_MAX_DEPTH,
    gain: int | None = None,
    include_reference: bool = True,
) -> list[SweepRow]:
    if config is not None and config.num_subcarriers != filt.num_subcarriers:
        raise ExperimentError("filter and config disagree on the number of subcarriers")
    rows = []
    if include_reference:
        rows.append(SweepRow("REFERENCE", 0, math.nan, math.nan, -math.inf, _db(interference_variance(filt))))
    rows += run_mse_sweep(
        filt, methods, complexity_grid, wordlengths=wordlengths, max_depth=max_depth, gain=gain, interference=True
    )
    return rows


# -- PSD ---------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PsdEstimate:
    frequencies: np.ndarray  # normalized, ascending in [-1/2, 1/2)
    power: np.ndarray  # linear density

    @property
    def psd_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(self.power)

    def band_db(self, fmin: float, fmax: float) -> float:
        """Mean linear density over ``fmin <= |f| <= fmax``, in dB."""
        sel = (np.abs(self.frequencies) >= fmin) & (np.abs(self.frequencies) <= fmax)
        if not np.any(sel):
            raise ExperimentError(f"no bins in |f| in [{fmin}, {fmax}]")
        return _db(float(np.mean(self.power[sel])))


def estimate_psd(x, segment_length: int = 512, overlap_fraction: float = 0.5) -> PsdEstimate:
    """Two-sided Welch estimate with a Hann window, ``fs = 1``.

    ``mean(power)`` estimates the mean signal power.
    """
    x = np.asarray(x)
    if x.size <= segment_length:
        raise ExperimentError(f"signal of {x.size} samples is not longer than segment {segment_length}")
    if not 0 <= overlap_fraction < 1:
        raise ExperimentError(f"overlap_fraction must be in [0, 1), got {overlap_fraction}")
    f, p = sps.welch(
        x,
        fs=1.0,
        window="hann",
        nperseg=segment_length,
        noverlap=int(round(overlap_fraction * segment_length)),
        detrend=False,
        return_onesided=False,
        scaling="density",
    )
    return PsdEstimate(np.fft.fftshift(f), np.fft.fftshift(p))


def average_psd(estimates: Sequence[PsdEstimate]) -> PsdEstimate:
    return PsdEstimate(estimates[0].frequencies, np.mean([e.power for e in estimates], axis=0))


def _random_qam_grid(rng: np.random.Generator, config: FbmcConfig, order: int) -> tuple[np.ndarray, np.ndarray]:
    b = modem.bits_per_symbol(order)
    M, N = config.num_subcarriers, config.num_blocks
    bits = rng.integers(0, 2, size=M * N * b, dtype=np.int64)
    d = modem.qam_modulate(bits, order).reshape(M, N)
    return bits.reshape(M, N, b), d


def inband_halfwidth(config: FbmcConfig) -> float:
    return int(config.active_mask.sum()) / (2.0 * config.num_subcarriers)


def run_psd_experiment(
    config: FbmcConfig,
    filt: PrototypeFilter,
    num_frames: int = 100,
    *,
    seed: int = 0,
    order: int = 4,
    segment_length: int = 512,
    overlap_fraction: float = 0.5,
) -> PsdEstimate:
    """Welch PSD averaged over independent frames, in-band plateau at 0 dB.

    Only subcarriers in ``config.active_mask`` carry i.i.d. QAM symbols. The
    plateau level is the mean density over the inner 80% of the active band.
    """
    if num_frames < 1:
        raise ExperimentError("num_frames must be >= 1")
    ests = []
    for frame in range(num_frames):
        rng = np.random.default_rng([seed, frame])
        _, d = _random_qam_grid(rng, config, order)
        d[~config.active_mask, :] = 0
        s = synthesize(oqam_map(d), filt)
        ests.append(estimate_psd(s, segment_length, overlap_fraction))
    avg = average_psd(ests)
    plateau = 10.0 ** (avg.band_db(0.0, 0.8 * inband_halfwidth(config)) / 10.0)
    return PsdEstimate(avg.frequencies, avg.power / plateau)


# -- BER --------------------------------------------------------------------

@dataclass(frozen=True)
class StopRule:
    """Stop a Monte Carlo point at whichever limit is hit first."""

    min_errors: int | None = 100
    max_bits: int | None = 1_000_000
    max_frames: int | None = None

    def __post_init__(self):
        if self.min_errors is None and self.max_bits is None and self.max_frames is None:
            raise ExperimentError("stop rule needs at least one limit")

    def done(self, errors: int, bits: int, frames: int) -> bool:
        return (
            (self.min_errors is not None and errors >= self.min_errors)
            or (self.max_bits is not None and bits >= self.max_bits)
            or (self.max_frames is not None and frames >= self.max_frames)
        )


@dataclass(frozen=True)
class BerPoint:
    ebn0_db: float
    bits_sent: int
    bit_errors: int
    label: str = ""

    @property
    def ber(self) -> float:
        return self.bit_errors / self.bits_sent if self.bits_sent else math.nan


def worker_count(workers: int | None = None) -> int:
    if workers is None:
        env = os.environ.get(THREADS_ENV)
        workers = int(env) if env else (os.cpu_count() or 1)
    return max(1, int(workers))


def interior_blocks(config: FbmcConfig, guard: int | None = None) -> slice:
    """QAM blocks whose PAM instants sit at least ``guard`` instants from either frame edge."""
    guard = 2 * config.overlap if guard is None else guard
    first = (guard + 1) // 2
    last = config.num_blocks - first
    if last <= first:
        raise ExperimentError(f"{config.num_blocks} blocks leave no interior with a guard of {guard} instants")
    return slice(first, last)


@dataclass(frozen=True, eq=False)
class _Link:
    config: FbmcConfig
    tx: PrototypeFilter
    rx: PrototypeFilter
    order: int
    seed: int
    interior: slice

    def frame_errors(self, frame: int, ebn0_db: float) -> tuple[int, int]:
        rng = np.random.default_rng([self.seed, frame])
        bits, d = _random_qam_grid(rng, self.config, self.order)
        d[~self.config.active_mask, :] = 0
        s = synthesize(oqam_map(d), self.tx)
        noise = modem.NoiseSpec(ebn0_db, self.seed, self.order, symbol_energy=self.tx.energy)
        r = modem.awgn_apply(s, noise, rng)
        gain = float(self.tx.coefficients @ self.rx.coefficients)
        dhat = oqam_demap(analyze_complex(r, self.rx, self.config.pam_instants).real / gain)
        active = self.config.active_mask
        est = modem.qam_demodulate(dhat[active, self.interior], self.order)
        ref = bits[active, self.interior].ravel()
        return int(np.count_nonzero(est != ref)), int(ref.size)


def run_ber(
    config: FbmcConfig,
    filt: PrototypeFilter,
    order: int,
    ebn0_list: Sequence[float],
    stop_rule: StopRule = StopRule(),
    *,
    seed: int = 0,
    rx_filter: PrototypeFilter | None = None,
    workers: int | None = None,
    guard: int | None = None,
    label: str = "",
) -> list[BerPoint]:
    """Monte Carlo BER over AWGN.

    Frame ``i`` draws its bits and noise from a generator seeded by
    ``(seed, i)``, the same for every Eb/N0 point and every filter, so curves
    share common random numbers. The stop rule is checked frame by frame in
    order, so results do not depend on ``workers``.
    """
    modem.bits_per_symbol(order)
    rx = filt if rx_filter is None else rx_filter
    for f in (filt, rx):
        if f.num_subcarriers != config.num_subcarriers or f.overlap != config.overlap:
            raise FbmcError("filter does not match config")
    link = _Link(config, filt, rx, order, seed, interior_blocks(config, guard))
    n_workers = worker_count(workers)
    points = []
    with ThreadPoolExecutor(max_workers=n_workers) as pool:
        for ebn0 in ebn0_list:
            errors = bits = frames = 0
            while not stop_rule.done(errors, bits, frames):
                batch = range(frames, frames + n_workers)
                for e, nb in pool.map(lambda i: link.frame_errors(i, ebn0), batch):
                    errors += e
                    bits += nb
                    frames += 1
                    if stop_rule.done(errors, bits, frames):
                        break
            points.append(BerPoint(float(ebn0), bits, errors, label))
    return points


def ebn0_at_ber(points: Sequence[BerPoint], target: float) -> float:
    """Eb/N0 where the curve crosses ``target``, by log-linear interpolation."""
    pts = sorted(points, key=lambda p: p.ebn0_db)
    for lo, hi in zip(pts, pts[1:]):
        if lo.ber >= target > hi.ber:
            if hi.ber == 0:
                return hi.ebn0_db
            t = (math.log10(lo.ber) - math.log10(target)) / (math.log10(lo.ber) - math.log10(hi.ber))
            return lo.ebn0_db + t * (hi.ebn0_db - lo.ebn0_db)
    raise ExperimentError(f"BER curve does not cross {target}")


# -- CSV outputs ---------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return f"{float(x):.12g}"


def _num(s: str) -> float | None:
    return None if s == "" else float(s)


SWEEP_FIELDS = ("method", "wordlength_or_budget", "spt_per_coeff_raw", "spt_per_coeff_merged", "mse_db", "interference_db")


def write_sweep_csv(rows: Sequence[SweepRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_FIELDS)
        for r in rows:
            w.writerow([r.method, r.setting] + [_fmt(x) for x in (r.spt_per_coeff_raw, r.spt_per_coeff_merged, r.mse_db, r.interference_db)])


def read_sweep_csv(path) -> list[SweepRow]:
    with open(path, newline="") as fh:
        return [
            SweepRow(
                d["method"],
                int(d["wordlength_or_budget"]),
                float(d["spt_per_coeff_raw"]),
                float(d["spt_per_coeff_merged"]),
                float(d["mse_db"]),
                _num(d["interference_db"]),
            )
            for d in csv.DictReader(fh)
        ]


def write_psd_csv(curves: dict[str, PsdEstimate], path) -> None:
    labels = list(curves)
    freqs = curves[labels[0]].frequencies
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["freq"] + labels)
        cols = [curves[lab].psd_db for lab in labels]
        for i, f in enumerate(freqs):
            w.writerow([_fmt(f)] + [_fmt(c[i]) for c in cols])


def read_psd_csv(path) -> dict[str, PsdEstimate]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], np.array(rows[1:], dtype=float)
    freqs = body[:, 0]
    return {lab: PsdEstimate(freqs, 10.0 ** (body[:, j + 1] / 10.0)) for j, lab in enumerate(header[1:])}


BER_FIELDS = ("label", "ebn0_db", "bits", "errors", "ber")


def write_ber_csv(points: Sequence[BerPoint], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(BER_FIELDS)
        for p in points:
            w.writerow([p.label, _fmt(p.ebn0_db), p.bits_sent, p.bit_errors, _fmt(p.ber)])


def read_ber_csv(path) -> list[BerPoint]:
    with open(path, newline="") as fh:
        return [
            BerPoint(float(d["ebn0_db"]), int(d["bits"]), int(d["errors"]), d["label"])
            for d in csv.DictReader(fh)
        ]
