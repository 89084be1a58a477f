"""Synthetic high-speed waveform generation.

A parametric transmit chain stands in for a proprietary channel simulation:
PRBS bit patterns, linear edge shaping, symbol-spaced FIR echoes for ISI,
linear aggressor coupling for crosstalk, and additive Gaussian noise.
Voltages are in volts with a nominal +-1.0 swing; times are in picoseconds
on a fixed 1 ps grid with a 100 ps unit interval (10 Gbps).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import DataError

DT_PS = 1.0
UI_PS = 100.0
SEGMENT_LEN = 100
TRANSIENT_UIS = 3

DISTORTION_KINDS = ("isi", "amplitude", "harmonic", "crosstalk")

# maximal-length LFSR taps (Fibonacci form, 1-indexed from the MSB)
_LFSR_TAPS = {7: (7, 6), 9: (9, 5), 15: (15, 14)}


@dataclass(frozen=True)
class Waveform:
    """Uniformly sampled voltage trace with sampling metadata."""

    samples: np.ndarray
    dt: float = DT_PS
    ui: float = UI_PS

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        ratio = self.ui / self.dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("ui must be an integer multiple of dt")
        object.__setattr__(self, "samples",
                           np.asarray(self.samples, dtype=np.float64))

    @property
    def samples_per_ui(self) -> int:
        return int(round(self.ui / self.dt))

    @property
    def n_ui(self) -> float:
        return len(self.samples) / self.samples_per_ui


@dataclass(frozen=True)
class ChannelPreset:
    """Parametric channel: symbol-spaced FIR echoes, additive noise, and
    linear coupling from a second PRBS aggressor."""

    name: str
    isi_taps: tuple = (1.0,)
    noise_sigma: float = 0.0
    crosstalk_gain: float = 0.0
    rise_time: float = 30.0

    def __post_init__(self):
        taps = tuple(float(t) for t in self.isi_taps)
        object.__setattr__(self, "isi_taps", taps)
        if not taps:
            raise ValueError("isi_taps must be non-empty")
        if taps[0] <= 0:
            raise ValueError("first channel tap must be strictly positive")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")
        if not (0 <= self.crosstalk_gain < 1):
            raise ValueError("crosstalk_gain must be in [0, 1)")
        if self.rise_time <= 0 or self.rise_time > UI_PS:
            raise ValueError("rise_time must be in (0, ui]")


# five stand-in presets with increasing channel stress; the last one couples
# an aggressor lane
DEFAULT_PRESETS = {
    "case1": ChannelPreset("case1", isi_taps=(1.0, 0.05), noise_sigma=0.010),
    "case2": ChannelPreset("case2", isi_taps=(1.0, 0.10, 0.04), noise_sigma=0.015),
    "case3": ChannelPreset("case3", isi_taps=(1.0, 0.16, 0.07), noise_sigma=0.020),
    "case4": ChannelPreset("case4", isi_taps=(1.0, 0.22, 0.10, 0.04), noise_sigma=0.020),
    "case5": ChannelPreset("case5", isi_taps=(1.0, 0.22, 0.10, 0.04), noise_sigma=0.020,
                           crosstalk_gain=0.12),
}


@dataclass(frozen=True)
class SegmentSample:
    """One unit-interval slice of a waveform with its validity label."""

    x: np.ndarray
    y: int
    source_id: str
    distortion_kind: str = "none"
    index: int = -1

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        if x.shape != (SEGMENT_LEN,):
            raise ValueError(f"segment must have length {SEGMENT_LEN}, got {x.shape}")
        object.__setattr__(self, "x", x)
        if self.y not in (0, 1):
            raise ValueError("label must be 0 or 1")
        if self.distortion_kind not in ("none",) + DISTORTION_KINDS:
            raise ValueError(f"unknown distortion kind {self.distortion_kind!r}")


def prbs_generate(degree: int, seed: int, n_bits: int) -> np.ndarray:
    """Maximal-length LFSR bit sequence, deterministic in (degree, seed)."""
    if degree not in _LFSR_TAPS:
        raise ValueError(f"degree must be one of {sorted(_LFSR_TAPS)}, got {degree}")
    if n_bits < 1:
        raise ValueError("n_bits must be >= 1")
    mask = (1 << degree) - 1
    state = int(seed) & mask
    if state == 0:
        raise ValueError("LFSR seed must be nonzero (all-zero state locks up)")
    taps = _LFSR_TAPS[degree]
    bits = np.empty(n_bits, dtype=np.uint8)
    for i in range(n_bits):
        bits[i] = (state >> (degree - 1)) & 1
        fb = 0
        for t in taps:
            fb ^= (state >> (t - 1)) & 1
        state = ((state << 1) | fb) & mask
    return bits


def _shape_edges(bits: np.ndarray, rise_time: float,
                 spb: int | None = None) -> np.ndarray:
    """NRZ levels (+-1) sampled at 1 ps with linear transitions of the given
    rise time centered on bit boundaries."""
    if spb is None:
        spb = int(round(UI_PS / DT_PS))
    levels = bits.astype(np.float64) * 2.0 - 1.0
    wave = np.repeat(levels, spb)
    half = rise_time / 2.0
    t = np.arange(len(wave), dtype=np.float64)
    for k in range(1, len(bits)):
        prev, cur = levels[k - 1], levels[k]
        if prev == cur:
            continue
        tb = k * spb
        lo = int(np.ceil(tb - half))
        hi = int(np.floor(tb + half))
        lo = max(lo, 0)
        hi = min(hi, len(wave) - 1)
        frac = (t[lo:hi + 1] - (tb - half)) / rise_time
        wave[lo:hi + 1] = prev + frac * (cur - prev)
    return wave


def _apply_isi_taps(wave: np.ndarray, taps) -> np.ndarray:
    """Symbol-spaced FIR: y[n] = sum_k taps[k] * x[n - k*spb], edge-padded."""
    taps = np.asarray(taps, dtype=np.float64)
    if len(taps) == 1 and taps[0] == 1.0:
        return wave
    spb = int(round(UI_PS / DT_PS))
    pad = (len(taps) - 1) * spb
    padded = np.concatenate([np.full(pad, wave[0]), wave])
    out = np.zeros_like(wave)
    for k, t in enumerate(taps):
        out += t * padded[pad - k * spb: pad - k * spb + len(wave)]
    return out


AGGRESSOR_UI_PS = 89  # plesiochronous lane: edges drift across the victim eye


def _aggressor_pulses(n_samples: int, rng, rise: float = 30.0) -> np.ndarray:
    """Coupled trace from an asynchronous PRBS aggressor lane.

    Coupling is derivative-like (mutual capacitance/inductance), so each
    aggressor edge injects a unit-amplitude pulse one rise time wide.  The
    aggressor runs on its own clock, so pulse positions sweep the unit
    interval over the record.
    """
    agg_seed = int(rng.integers(1, 1 << 9))
    phase = int(rng.integers(0, AGGRESSOR_UI_PS))
    n_bits = int(np.ceil((n_samples + phase) / AGGRESSOR_UI_PS)) + 2
    agg_bits = prbs_generate(9, agg_seed, n_bits)
    agg = _shape_edges(agg_bits, rise, spb=AGGRESSOR_UI_PS)
    pulses = np.zeros(len(agg))
    pulses[1:] = np.diff(agg) * (rise / 2.0)
    return pulses[phase:phase + n_samples]


def synthesize_waveform(bits: np.ndarray, preset: ChannelPreset,
                        rng_seed: int) -> Waveform:
    """Drive the parametric channel with a bit pattern.

    The first TRANSIENT_UIS unit intervals are dropped, leaving exactly 100
    UIs (10,000 samples at 1 ps) for the standard 103-bit input.
    """
    bits = np.asarray(bits)
    min_bits = TRANSIENT_UIS + 100
    if len(bits) < min_bits:
        raise ValueError(
            f"need at least {min_bits} bits ({TRANSIENT_UIS} transient + 100 kept), "
            f"got {len(bits)}")
    rng = np.random.default_rng(rng_seed)
    wave = _shape_edges(bits, preset.rise_time)
    wave = _apply_isi_taps(wave, preset.isi_taps)
    if preset.crosstalk_gain > 0.0:
        wave = wave + preset.crosstalk_gain * _aggressor_pulses(
            len(wave), rng, preset.rise_time)
    if preset.noise_sigma > 0.0:
        wave = wave + rng.normal(0.0, preset.noise_sigma, size=len(wave))
    start = int(TRANSIENT_UIS * UI_PS / DT_PS)
    return Waveform(wave[start:start + 10_000])


def resample_to_uniform(times: np.ndarray, values: np.ndarray) -> Waveform:
    """Linear interpolation onto a 1 ps grid spanning [times[0], times[-1]]."""
    times = np.asarray(times, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if times.ndim != 1 or times.shape != values.shape:
        raise ValueError("times and values must be 1-D and equal length")
    if len(times) < 2:
        raise ValueError("need at least 2 points")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    grid = np.arange(times[0], times[-1] + DT_PS * 1e-9, DT_PS)
    return Waveform(np.interp(grid, times, values))


def inject_distortion(w: Waveform, kind: str, severity: float,
                      rng_seed: int) -> Waveform:
    """Distorted copy of a waveform; approaches the identity as severity -> 0.

    isi:       extra symbol-spaced echoes, renormalized to keep the swing
    amplitude: linear range compression
    harmonic:  tones at 2x and 3x the alternating-pattern fundamental
    crosstalk: an independently generated PRBS aggressor added in
    """
    if kind not in DISTORTION_KINDS:
        raise ValueError(f"unknown distortion kind {kind!r}; "
                         f"expected one of {DISTORTION_KINDS}")
    if not (0.0 < severity <= 1.0):
        raise ValueError("severity must be in (0, 1]")
    rng = np.random.default_rng(rng_seed)
    x = w.samples
    if kind == "amplitude":
        out = x * (1.0 - severity)
    elif kind == "isi":
        # reflections at fractional-UI delays, so echo edges land mid-eye
        delays = (50, 100, 170, 230, 310, 380)  # ps
        weights = np.array([0.8, 0.55, 0.4, 0.3, 0.22, 0.15]) * severity
        pad = delays[-1]
        padded = np.concatenate([np.full(pad, x[0]), x])
        out = x.copy()
        for d, wgt in zip(delays, weights):
            out += wgt * padded[pad - d: pad - d + len(x)]
        out /= 1.0 + weights.sum()
    elif kind == "harmonic":
        # spur tones at 2x/3x the alternating-pattern fundamental; the mix is
        # renormalized so the result stays inside the +-1.5 V decoder range
        f0 = 1.0 / (2.0 * w.ui)
        t = np.arange(len(x)) * w.dt
        ph2, ph3 = rng.uniform(0, 2 * np.pi, size=2)
        tones = (np.sin(2 * np.pi * 2 * f0 * t + ph2)
                 + 0.5 * np.sin(2 * np.pi * 3 * f0 * t + ph3))
        a = 1.3 * severity
        out = (x + a * tones) / (1.0 + a)
    else:  # crosstalk
        a = 1.2 * severity
        out = (x + a * _aggressor_pulses(len(x), rng)) / (1.0 + 0.6 * severity)
    return replace(w, samples=out)


def add_noise(w: Waveform, sigma: float, rng_seed: int) -> Waveform:
    """Additive Gaussian receiver noise; identity for sigma = 0."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return w
    rng = np.random.default_rng(rng_seed)
    return replace(w, samples=w.samples + rng.normal(0.0, sigma, size=len(w.samples)))


def segment_waveform(w: Waveform, label: int, source_id: str = "",
                     distortion_kind: str = "none") -> list[SegmentSample]:
    """100 consecutive non-overlapping unit-interval segments, all sharing
    the waveform's validity label."""
    if len(w.samples) != 10_000 or w.samples_per_ui != SEGMENT_LEN:
        raise DataError(
            f"expected 10,000 samples at 1 ps (100 UIs), got {len(w.samples)}")
    return [SegmentSample(w.samples[i * SEGMENT_LEN:(i + 1) * SEGMENT_LEN],
                          label, source_id=source_id, distortion_kind=distortion_kind)
            for i in range(100)]
