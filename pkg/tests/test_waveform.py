import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from silatent import waveform as wf
from silatent.errors import DataError


def lfsr_cycle_length(degree, taps, start):
    """Independent oracle: walk the LFSR state graph until the start recurs."""
    mask = (1 << degree) - 1
    state = start
    for step in range(1, 2 ** degree + 1):
        fb = 0
        for t in taps:
            fb ^= (state >> (t - 1)) & 1
        state = ((state << 1) | fb) & mask
        if state == start:
            return step
    raise AssertionError("no cycle found")


class TestPrbs:
    def test_degree7_has_period_127(self):
        # enumerate the state cycle: every nonzero state must sit on one
        # 127-long orbit, and the emitted bits must repeat with period 127
        assert lfsr_cycle_length(7, (7, 6), 1) == 127
        seen = set()
        state = 1
        for _ in range(127):
            assert state not in seen
            seen.add(state)
            fb = ((state >> 6) & 1) ^ ((state >> 5) & 1)
            state = ((state << 1) | fb) & 0x7F
        assert len(seen) == 127

        bits = wf.prbs_generate(7, seed=0b1011, n_bits=400)
        assert np.array_equal(bits[:273], bits[127:400])
        # no shorter period
        for p in (1, 7, 63):
            assert not np.array_equal(bits[:127], np.roll(bits[:127], p))

    def test_deterministic(self):
        a = wf.prbs_generate(7, seed=5, n_bits=10)
        b = wf.prbs_generate(7, seed=5, n_bits=10)
        assert np.array_equal(a, b)

    def test_zero_seed_rejected(self):
        with pytest.raises(ValueError, match="nonzero"):
            wf.prbs_generate(7, seed=0, n_bits=10)

    def test_bad_degree(self):
        with pytest.raises(ValueError):
            wf.prbs_generate(8, seed=1, n_bits=10)


def identity_preset(**kw):
    return wf.ChannelPreset("ident", isi_taps=(1.0,), noise_sigma=0.0,
                            crosstalk_gain=0.0, **kw)


def trapezoid_oracle(levels, rise, n_samples, offset_samples):
    """Closed-form trapezoid: linear transitions of `rise` ps centered on
    100 ps bit boundaries, evaluated on the 1 ps grid."""
    out = np.empty(n_samples)
    for i in range(n_samples):
        t = i + offset_samples
        k = int(t // 100)
        v = levels[k]
        for kb in (k, k + 1):
            tb = kb * 100.0
            if abs(t - tb) < rise / 2.0 and 0 < kb < len(levels):
                prev, cur = levels[kb - 1], levels[kb]
                v = prev + (t - (tb - rise / 2.0)) / rise * (cur - prev)
        out[i] = v
    return out


class TestSynthesize:
    def test_alternating_bits_form_trapezoid(self):
        bits = np.arange(103) % 2
        w = wf.synthesize_waveform(bits, identity_preset(), rng_seed=0)
        levels = bits * 2.0 - 1.0
        expected = trapezoid_oracle(levels, 30.0, 10_000, 300)
        assert np.allclose(w.samples, expected, atol=1e-12)

    def test_103_bits_yield_10000_samples(self):
        bits = wf.prbs_generate(7, 3, 103)
        w = wf.synthesize_waveform(bits, wf.DEFAULT_PRESETS["case2"], rng_seed=1)
        assert len(w.samples) == 10_000
        assert w.dt == 1.0 and w.ui == 100.0

    def test_deterministic_with_noise(self):
        bits = wf.prbs_generate(9, 40, 103)
        preset = wf.DEFAULT_PRESETS["case5"]
        a = wf.synthesize_waveform(bits, preset, rng_seed=7)
        b = wf.synthesize_waveform(bits, preset, rng_seed=7)
        assert np.array_equal(a.samples, b.samples)

    def test_too_few_bits(self):
        with pytest.raises(ValueError, match="103"):
            wf.synthesize_waveform(np.ones(102, dtype=int), identity_preset(), 0)


class TestResample:
    def test_linear_segment(self):
        w = wf.resample_to_uniform([0.0, 2.0], [0.0, 2.0])
        assert np.allclose(w.samples, [0.0, 1.0, 2.0])
        assert w.dt == 1.0

    def test_uniform_input_is_identity(self):
        t = np.arange(50.0)
        v = np.sin(t / 5.0)
        w = wf.resample_to_uniform(t, v)
        assert np.allclose(w.samples, v)

    def test_repeated_abscissa(self):
        with pytest.raises(ValueError, match="increasing"):
            wf.resample_to_uniform([0.0, 1.0, 1.0, 2.0], [0.0, 1.0, 2.0, 3.0])


@pytest.fixture(scope="module")
def clean_wave():
    bits = wf.prbs_generate(9, 17, 103)
    return wf.synthesize_waveform(bits, identity_preset(), rng_seed=0)


class TestInjectDistortion:
    def test_amplitude_compresses_peaks(self, clean_wave):
        for s in (0.2, 0.5, 1.0):
            out = wf.inject_distortion(clean_wave, "amplitude", s, rng_seed=1)
            assert np.abs(out.samples).max() < np.abs(clean_wave.samples).max()

    def test_tiny_severity_is_near_identity(self, clean_wave):
        for kind in wf.DISTORTION_KINDS:
            out = wf.inject_distortion(clean_wave, kind, 1e-9, rng_seed=2)
            assert np.abs(out.samples - clean_wave.samples).max() < 1e-6

    def test_harmonic_adds_2x_3x_tones(self):
        bits = np.arange(103) % 2  # pure alternating pattern
        w = wf.synthesize_waveform(bits, identity_preset(), rng_seed=0)
        out = wf.inject_distortion(w, "harmonic", 0.8, rng_seed=3)
        diff = out.samples - w.samples
        spectrum = np.abs(np.fft.rfft(diff))
        freqs = np.fft.rfftfreq(len(diff), d=1.0)  # cycles per ps
        f0 = 1.0 / 200.0
        mag = spectrum / spectrum.max()
        floor = np.median(mag)
        # the alternating input has only odd harmonics, so clear peaks at
        # 2x/3x the fundamental must come from the injected tones
        for mult in (2, 3):
            idx = np.argmin(np.abs(freqs - mult * f0))
            assert mag[idx] > 0.3, f"{mult}x tone missing"
            assert mag[idx] > 20 * floor

    def test_unknown_kind(self, clean_wave):
        with pytest.raises(ValueError, match="unknown distortion"):
            wf.inject_distortion(clean_wave, "jitter", 0.5, rng_seed=0)

    def test_deterministic(self, clean_wave):
        a = wf.inject_distortion(clean_wave, "crosstalk", 0.7, rng_seed=9)
        b = wf.inject_distortion(clean_wave, "crosstalk", 0.7, rng_seed=9)
        assert np.array_equal(a.samples, b.samples)


class TestSegmentWaveform:
    def test_hundred_segments(self, clean_wave):
        segs = wf.segment_waveform(clean_wave, 1, source_id="w0")
        assert len(segs) == 100
        assert all(s.y == 1 and s.source_id == "w0" for s in segs)

    def test_partition_reconstructs_waveform(self, clean_wave):
        segs = wf.segment_waveform(clean_wave, 0)
        rebuilt = np.concatenate([s.x for s in segs])
        assert np.array_equal(rebuilt, clean_wave.samples)

    def test_wrong_length(self):
        with pytest.raises(DataError):
            wf.segment_waveform(wf.Waveform(np.zeros(9_999)), 1)


class TestWaveformInvariants:
    def test_bad_dt(self):
        with pytest.raises(ValueError):
            wf.Waveform(np.zeros(10), dt=0.0)

    def test_ui_not_multiple(self):
        with pytest.raises(ValueError):
            wf.Waveform(np.zeros(10), dt=3.0, ui=100.0)

    @given(st.integers(min_value=1, max_value=126), st.integers(min_value=1, max_value=300))
    @settings(max_examples=25, deadline=None)
    def test_prbs_determinism_property(self, seed, n):
        assert np.array_equal(wf.prbs_generate(7, seed, n), wf.prbs_generate(7, seed, n))
