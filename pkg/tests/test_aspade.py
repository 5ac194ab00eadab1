import numpy as np
import pytest

from unclip.aspade import AspadeConfig, declip_frame, declip_signal, hard_threshold
from unclip.metrics import si_sdr, solve_threshold_for_target_sdr
from unclip.reliability import detect
from unclip.signal import Signal
from unclip.stft import Window


def on_bin_frame(n=1024, k=12, phase=0.4):
    return np.cos(2 * np.pi * k * np.arange(n) / n + phase)


def clip_fraction(x, frac):
    theta = np.quantile(np.abs(x), 1 - frac)
    return np.clip(x, -theta, theta), theta


def test_config_validation():
    assert AspadeConfig().max_iter == 1024
    with pytest.raises(ValueError):
        AspadeConfig(hop=0)
    with pytest.raises(ValueError):
        AspadeConfig(epsilon=-1)
    with pytest.raises(ValueError):
        AspadeConfig(sparsity_step=0)


def test_hard_threshold_support_and_ties():
    c = np.array([1.0, 3.0, 2.0, 3.0, 0.5], dtype=complex)
    out = hard_threshold(c, 2)
    assert out.tolist() == [0, 3, 0, 3, 0]
    tie = hard_threshold(np.array([2.0, 2.0, 2.0], dtype=complex), 1)
    assert tie.tolist() == [2, 0, 0]  # lower frequency wins
    assert np.array_equal(hard_threshold(out, 2), out)
    assert np.count_nonzero(hard_threshold(c, 3)) <= 3


def test_all_reliable_frame_is_untouched(rng):
    y = rng.uniform(-0.5, 0.5, 1024)
    res = declip_frame(y, detect(y, 1.0))
    assert np.array_equal(res.samples, y)


def test_zero_frame():
    y = np.zeros(1024)
    assert not np.any(declip_frame(y, detect(y, 1.0)).samples)


def test_sparse_on_bin_recovery():
    x = on_bin_frame()
    y, theta = clip_fraction(x, 0.10)
    res = declip_frame(y, detect(y, theta))
    assert res.converged
    assert si_sdr(x, res.samples).value > 40


def test_frame_output_is_feasible(rng):
    x = on_bin_frame() + 0.5 * on_bin_frame(k=40, phase=1.0)
    y, theta = clip_fraction(x, 0.2)
    m = detect(y, theta)
    out = declip_frame(y, m).samples
    assert np.array_equal(out[m.reliable], y[m.reliable])
    assert np.all(out[m.high] >= theta) and np.all(out[m.low] <= -theta)


def test_signal_without_clipping_passes_through(rng):
    y = Signal(0.5 * np.sin(np.arange(8000) * 0.05))
    out, rep = declip_signal(y)
    assert out is y and rep.n_clipped == 0
    out, rep = declip_signal(y, theta_c=0.9)
    assert np.array_equal(out.samples, y.samples) and rep.n_clipped == 0


def three_sines(seconds=1.0, sr=16000):
    t = np.arange(int(seconds * sr)) / sr
    base = sr / 256
    return (np.sin(2 * np.pi * 5 * base * t) + 0.6 * np.sin(2 * np.pi * 11 * base * t + 1)
            + 0.3 * np.sin(2 * np.pi * 23 * base * t + 2))


def random_three_sines(rng, sr=16000):
    t = np.arange(sr) / sr
    harmonics = rng.choice(np.arange(2, 48), 3, replace=False)
    amps = rng.uniform(0.2, 1.0, 3)
    phases = rng.uniform(0, 2 * np.pi, 3)
    return sum(a * np.sin(2 * np.pi * h * (sr / 256) * t + p) for h, a, p in zip(harmonics, amps, phases))


def test_signal_declipping_gain_and_feasibility():
    rng = np.random.default_rng(7)
    for trial in range(4):
        x = random_three_sines(rng)
        sol = solve_threshold_for_target_sdr(x, 7.0)
        y = Signal(np.clip(x, -sol.theta, sol.theta))
        out, rep = declip_signal(y, sol.theta)
        gain = si_sdr(x, out).value - si_sdr(x, y).value
        assert gain >= 10, (trial, gain)
        m = detect(y, sol.theta)
        assert np.array_equal(out.samples[m.reliable], y.samples[m.reliable])
        assert np.all(out.samples[m.high] >= sol.theta - 1e-6)
        assert np.all(out.samples[m.low] <= -sol.theta + 1e-6)
        assert rep.violations == 0
        assert rep.rtf > 0 and len(rep.iterations) == len(rep.residuals)
        assert all(r <= AspadeConfig().epsilon for r, c in zip(rep.residuals, rep.converged) if c)
        assert all(i <= AspadeConfig().max_iter for i in rep.iterations)
        reliable_energy = np.sum(y.samples[m.reliable] ** 2)
        assert np.sum(out.samples ** 2) >= reliable_energy


def test_determinism_and_parallel_equivalence():
    x = three_sines(0.5)
    y = Signal(np.clip(x, -0.8, 0.8))
    a, _ = declip_signal(y, 0.8)
    b, _ = declip_signal(y, 0.8)
    c, _ = declip_signal(y, 0.8, jobs=3)
    assert np.array_equal(a.samples, b.samples) and np.array_equal(a.samples, c.samples)


def test_threshold_estimated_when_missing():
    x = three_sines(0.5)
    y = Signal(np.clip(x, -0.8, 0.8))
    a, rep = declip_signal(y)
    b, _ = declip_signal(y, 0.8)
    assert rep.n_clipped > 0 and np.array_equal(a.samples, b.samples)


def test_rectangular_framing_and_small_frames():
    x = three_sines(0.25)
    y = Signal(np.clip(x, -0.9, 0.9))
    cfg = AspadeConfig(frame_len=256, hop=64, window=Window.HANN)
    out, rep = declip_signal(y, 0.9, cfg)
    assert len(out) == len(y) and rep.violations == 0


def test_empty_signal_error():
    with pytest.raises(ValueError):
        declip_signal(Signal([]), 1.0)
    with pytest.raises(ValueError):
        declip_signal(Signal([1.0, 1.0]), -1.0)


def test_report_serializes():
    y = Signal(np.clip(three_sines(0.25), -0.9, 0.9))
    _, rep = declip_signal(y, 0.9)
    d = rep.to_dict()
    assert d["n_clipped"] == rep.n_clipped and d["frames"] == len(rep.iterations)
