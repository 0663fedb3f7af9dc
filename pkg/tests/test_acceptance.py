"""Acceptance criteria, one PASS/FAIL line each (see the summary section of the pytest run).

Thresholds are asserted as stated, never loosened. Criteria that the
faithful algorithms cannot reach fail here by design.
"""

import math
import time

import numpy as np
import pytest

from oracles import interference_brute_force
from sopot_fbmc import modem
from sopot_fbmc.experiments import (
    StopRule,
    approximate_filter,
    csd_complexities,
    ebn0_at_ber,
    run_ber,
    run_interference_sweep,
    run_mse_sweep,
    run_psd_experiment,
)
from sopot_fbmc.fbmc import (
    FbmcConfig,
    analyze,
    interference_variance,
    oqam_map,
    phydyas_prototype,
    synthesize,
    synthesize_direct,
)
from sopot_fbmc.quantizers import (
    FixedPointWord,
    QuantizerBudget,
    csd_digits,
    csd_recode,
    mpgbp_approximate,
    sdl_approximate,
)
from sopot_fbmc.sopot import reconstruct

pytestmark = pytest.mark.slow

FAR_STOPBAND = 0.375  # |f| from here to 1/2, well clear of the 64-carrier band edge at 1/4


def _gaps(rows, metric):
    csd = [getattr(r, metric) for r in rows if r.method == "CSD"]
    out = {}
    for m in ("SDL", "MPGBP"):
        vec = [getattr(r, metric) for r in rows if r.method == m]
        out[m] = [c - v for c, v in zip(csd, vec)]
    return out


def test_criterion_01_csd_density(phydyas, report):
    t0 = time.perf_counter()
    dens = csd_complexities(phydyas)
    elapsed = time.perf_counter() - t0
    target = [1.5, 1.8, 2.1, 2.4, 2.8, 3.1]
    ok = all(abs(d - t) <= 0.15 for d, t in zip(dens, target)) and elapsed < 1.0
    detail = f"SPT/coeff B=3..8 = {[round(d, 3) for d in dens]}, {elapsed:.2f}s"
    assert report("1 CSD density table", ok, detail)


def test_criterion_02_mse_gap(phydyas, report):
    t0 = time.perf_counter()
    rows = run_mse_sweep(phydyas)
    elapsed = time.perf_counter() - t0
    gaps = _gaps(rows, "mse_db")
    ok = all(g >= 10 for gs in gaps.values() for g in gs) and elapsed < 10
    detail = ", ".join(f"{m} gap dB {[round(g, 2) for g in gs]}" for m, gs in gaps.items()) + f", {elapsed:.1f}s"
    assert report("2 MSE gap >= 10 dB", ok, detail)


def test_criterion_03_interference_gap(phydyas, report):
    t0 = time.perf_counter()
    rows = run_interference_sweep(phydyas)
    elapsed = time.perf_counter() - t0
    gaps = _gaps(rows, "interference_db")
    ok = all(g >= 10 for gs in gaps.values() for g in gs) and elapsed < 60
    detail = (
        f"reference {rows[0].interference_db:.2f} dB; "
        + ", ".join(f"{m} gap dB {[round(g, 2) for g in gs]}" for m, gs in gaps.items())
        + f", {elapsed:.1f}s"
    )
    assert report("3 interference gap >= 10 dB", ok, detail)


def test_criterion_04_interference_oracle(report):
    filt = phydyas_prototype(16, 4)
    fast = interference_variance(filt)
    slow = interference_brute_force(filt.coefficients, 16, 4)
    rel = abs(fast - slow) / slow
    assert report("4 interference oracle M=16", rel <= 1e-12, f"relative difference {rel:.2e}")


def test_criterion_05_psd_ordering(phydyas, report):
    t0 = time.perf_counter()
    config = FbmcConfig().with_central_band(64)
    csd = approximate_filter(phydyas, "CSD", wordlength=4).filter
    sdl = approximate_filter(phydyas, "SDL", spt_per_coeff=1.8).filter
    far = {}
    for label, filt in (("reference", phydyas), ("csd-4", csd), ("sdl-1.8", sdl)):
        far[label] = run_psd_experiment(config, filt, 100, seed=0).band_db(FAR_STOPBAND, 0.5)
    elapsed = time.perf_counter() - t0
    csd_ok = far["csd-4"] >= far["reference"] + 10
    sdl_ok = far["sdl-1.8"] <= far["reference"] + 5
    ok = csd_ok and sdl_ok and elapsed < 120
    detail = (
        "far stopband dB " + ", ".join(f"{k} {v:.1f}" for k, v in far.items())
        + f"; CSD>=ref+10 {'ok' if csd_ok else 'no'}, SDL<=ref+5 {'ok' if sdl_ok else 'no'}, {elapsed:.0f}s"
    )
    assert report("5 PSD ordering", ok, detail)


def test_criterion_06_ber_sanity(phydyas, report):
    t0 = time.perf_counter()
    config = FbmcConfig()
    rule = StopRule(min_errors=1000, max_bits=20_000_000)
    within = []
    for p in run_ber(config, phydyas, 4, [4.0, 6.0, 8.0], rule, seed=1):
        theory = float(modem.theoretical_ber(p.ebn0_db, 4))
        sigma = math.sqrt(theory * (1 - theory) / p.bits_sent)
        within.append((p.ebn0_db, p.ber, theory, abs(p.ber - theory) <= 3 * sigma))
    grid = [6.0, 6.5, 7.0, 7.5]
    sdl = approximate_filter(phydyas, "SDL", spt_per_coeff=1.8).filter
    ref_at = ebn0_at_ber(run_ber(config, phydyas, 4, grid, rule, seed=2), 1e-3)
    sdl_at = ebn0_at_ber(run_ber(config, sdl, 4, grid, rule, seed=2), 1e-3)
    shift = sdl_at - ref_at
    elapsed = time.perf_counter() - t0
    ok = all(w[3] for w in within) and abs(shift) <= 0.3 and elapsed < 600
    detail = (
        "; ".join(f"{e:g} dB {b:.3e} vs Q {q:.3e}" for e, b, q, _ in within)
        + f"; SDL shift at 1e-3 {shift:+.3f} dB, {elapsed:.0f}s"
    )
    assert report("6 BER sanity 4-QAM", ok, detail)


def test_criterion_07_64qam_ordering(phydyas, report):
    config = FbmcConfig()
    frames = StopRule(None, None, 1000)
    grid = list(range(0, 31, 2))
    probe = run_ber(config, phydyas, 64, grid, StopRule(None, None, 50), seed=11)
    window = [p.ebn0_db for p in probe if 1e-4 <= p.ber <= 1e-2]
    ref = run_ber(config, phydyas, 64, window, frames, seed=11)
    window = [p.ebn0_db for p in ref if 1e-4 <= p.ber <= 1e-2]
    csd = approximate_filter(phydyas, "CSD", wordlength=4).filter
    sdl = approximate_filter(phydyas, "SDL", spt_per_coeff=1.8).filter
    b_csd = run_ber(config, csd, 64, window, frames, seed=11)
    b_sdl = run_ber(config, sdl, 64, window, frames, seed=11)
    ok = bool(window) and all(c.ber > s.ber for c, s in zip(b_csd, b_sdl))
    detail = "; ".join(f"{c.ebn0_db:g} dB CSD {c.ber:.4e} SDL {s.ber:.4e}" for c, s in zip(b_csd, b_sdl))
    assert report("7 64-QAM ordering", ok, detail + " (1000 paired frames)")


def test_criterion_08_csd_properties(report):
    import itertools

    bad_exact = bad_naf = bad_min = 0
    for B in range(2, 13):
        for q in range(-(1 << (B - 1)), 1 << (B - 1)):
            w = FixedPointWord.from_integer(q, B)
            d = csd_digits(w)
            bad_exact += reconstruct(csd_recode(w))[0] != w.value
            bad_naf += any(a and b for a, b in zip(d, d[1:]))
    for B in range(2, 9):
        best = {}
        for digits in itertools.product((-1, 0, 1), repeat=B + 1):
            v = sum(c << j for j, c in enumerate(digits))
            n = sum(c != 0 for c in digits)
            best[v] = min(best.get(v, n), n)
        for q in range(-(1 << (B - 1)), 1 << (B - 1)):
            bad_min += len(csd_recode(FixedPointWord.from_integer(q, B))) != best[q]
    ok = bad_exact == bad_naf == bad_min == 0
    detail = f"inexact {bad_exact}, non-NAF {bad_naf} (B<=12); non-minimal {bad_min} (B<=8)"
    assert report("8 CSD properties", ok, detail)


def test_criterion_09_greedy_contraction(report):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for x in rng.uniform(-1, 1, 100_000):
        a, _ = sdl_approximate([x], QuantizerBudget(6, 30))
        r = x
        for t in a.terms:
            new = r - t.sign * 2.0**-t.depth
            worst = max(worst, abs(new) / abs(r))
            r = new
    violations = 0
    for _ in range(1000):
        v = rng.uniform(-1, 1, int(rng.integers(4, 513)))
        _, trace = mpgbp_approximate(v, QuantizerBudget(int(rng.integers(1, 3 * v.size)), 24))
        norms = [np.linalg.norm(v)] + [s.residue_norm for s in trace.steps]
        violations += sum(b >= a for a, b in zip(norms, norms[1:]))
    ok = worst <= 1 / 3 and violations == 0
    detail = f"SDL worst |r_new|/|r_old| = {worst:.4f}; MPGBP non-decreasing steps {violations}"
    assert report("9 greedy contraction", ok, detail)


def test_criterion_10_modem_consistency(phydyas, report):
    rng = np.random.default_rng(10)
    worst = 0.0
    for M in (8, 16, 32):
        filt = phydyas_prototype(M, 4)
        a = rng.standard_normal((M, 10))
        fast, direct = synthesize(a, filt), synthesize_direct(a, filt)
        worst = max(worst, np.linalg.norm(fast - direct) / np.linalg.norm(direct))
    config = FbmcConfig(num_blocks=32)
    guard = 2 * config.overlap
    sq = []
    for _ in range(100):
        d = modem.qam_modulate(rng.integers(0, 2, 128 * 32 * 2), 4).reshape(128, 32)
        a = oqam_map(d)
        sq.append(((analyze(synthesize(a, phydyas), phydyas) - a)[:, guard:-guard]) ** 2)
    rms = math.sqrt(float(np.mean(sq)))
    predicted = math.sqrt(interference_variance(phydyas) * 0.5)
    ok = worst <= 1e-10 and predicted / 2 <= rms <= 2 * predicted
    detail = f"fast vs direct {worst:.1e}; loopback RMS {rms:.3e} vs predicted {predicted:.3e}"
    assert report("10 modem self-consistency", ok, detail)
