"""Acceptance suite: one test per criterion, reported as PASS/FAIL lines in the summary.

Run alone with ``pytest tests/test_acceptance.py -v``.
"""
import json
import time
from collections import Counter

import numpy as np
import pytest

from unclip.aspade import declip_frame, declip_signal
from unclip.cli import main as cli_main
from unclip.corpus import (EVAL_GRID, split, synth_eval_grid, synth_gain_grid, synth_tones, tone_clip)
from unclip.effects import DistortionSpec, amplify, apply, blend, hard_clip
from unclip.harness import superposition_study
from unclip.irm import apply_oracle
from unclip.metrics import CAP_DB, batch_sdr_loss, sdr, si_sdr, solve_threshold_for_target_sdr
from unclip.neural import (AdamState, ModelSpec, PlateauSchedule, TrainConfig, adam_step, backward, forward,
                           init_params, loss_and_grad, train)
from unclip.neural.model import ModelParams
from unclip.neural.train import batch_loss
from unclip.reliability import detect
from unclip.signal import Signal, read_wav
from unclip.stft import StftConfig, Window, spectral_energy, istft, stft


def criterion(n, title):
    return pytest.mark.criterion(n, title)


@pytest.fixture(scope="module")
def eval_grid(tone_dir, tmp_path_factory):
    return synth_eval_grid(tone_dir, EVAL_GRID, tmp_path_factory.mktemp("eval_grid"))


def _pairs(manifest, conditions):
    for e in manifest.entries:
        if e.condition_db in conditions:
            yield e, read_wav(manifest.resolve(e.clean_path)), read_wav(manifest.resolve(e.degraded_path))


@criterion(1, "effects exactness")
def test_c01_effects_exactness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1)
    x = Signal(rng.uniform(-2, 2, 20000))
    wet = hard_clip(x, DistortionSpec(gain_db=12))
    for kind in ("hardclip", "tanh"):
        assert np.array_equal(apply(x, DistortionSpec(kind, 30, wet_weight=0.0)).samples, x.samples)
        assert np.array_equal(apply(x, DistortionSpec(kind, 30, wet_weight=1.0)).samples,
                              apply(x, DistortionSpec(kind, 30)).samples)
    assert np.array_equal(blend(x, wet, 0.0).samples, x.samples)
    assert np.array_equal(blend(x, wet, 1.0).samples, wet.samples)
    for theta in (0.1, 0.5, 1.0, 2.5):
        for g in (0.0, 20.0, 45.0):
            y = hard_clip(x, DistortionSpec(gain_db=g, clip_threshold=theta)).samples
            assert np.max(np.abs(y)) <= theta
            assert np.array_equal(hard_clip(Signal(-x.samples), DistortionSpec(gain_db=g, clip_threshold=theta)).samples, -y)
        once = hard_clip(x, DistortionSpec(clip_threshold=theta))
        assert np.array_equal(hard_clip(once, DistortionSpec(clip_threshold=theta)).samples, once.samples)
    assert np.max(np.abs(amplify(x, 20.0).samples - 10.0 * x.samples)) <= 1e-12
    assert time.perf_counter() - t0 < 1.0


@criterion(2, "STFT perfect reconstruction and Parseval")
def test_c02_stft_reconstruction():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for i in range(100):
        n = int(rng.integers(1000, 20000))
        x = rng.standard_normal(n) * rng.uniform(0.01, 10)
        y = istft(stft(x)).samples
        worst = max(worst, np.linalg.norm(y - x) / np.linalg.norm(x))
    assert worst < 1e-10, worst
    for _ in range(10):
        x = rng.standard_normal(1024)
        e = spectral_energy(stft(x, StftConfig(1024, 1024, Window.RECTANGULAR)).bins)
        assert abs(e - np.sum(x ** 2)) <= 1e-9 * np.sum(x ** 2)
    assert time.perf_counter() - t0 < 30


@criterion(3, "metric identities")
def test_c03_metric_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    for _ in range(20):
        s = rng.standard_normal(1000)
        sh = s + rng.uniform(0.05, 2) * rng.standard_normal(1000)
        base = si_sdr(s, sh).value
        for c in (0.1, 3.0, 10.0):
            assert abs(si_sdr(s, c * sh).value - base) < 1e-9
        assert abs(sdr(s, 0.5 * s).value - 6.0206) <= 1e-3
        assert si_sdr(s, 0.5 * s).value == CAP_DB
    refs = [rng.standard_normal(500) for _ in range(6)]
    ests = [r + rng.uniform(0.01, 1) * rng.standard_normal(500) for r in refs]
    ests[2] = refs[2]
    assert batch_sdr_loss(refs, ests) == -np.mean([sdr(r, e).value for r, e in zip(refs, ests)])
    assert time.perf_counter() - t0 < 5


@criterion(4, "target-SDR synthesis on the evaluation grid")
def test_c04_target_sdr(tone_dir, tmp_path):
    t0 = time.perf_counter()
    m = synth_eval_grid(tone_dir, EVAL_GRID, tmp_path / "grid")
    clips = {e.clip_id for e in m.entries}
    assert len(clips) >= 20
    assert Counter(e.condition_db for e in m.entries) == {g: len(clips) for g in EVAL_GRID}
    worst = 0.0
    for e, clean, degraded in _pairs(m, EVAL_GRID):
        worst = max(worst, abs(sdr(clean, degraded).value - e.params["target_sdr"]))
    print(f"worst re-measured deviation {worst:.4f} dB")
    assert worst <= 0.05
    assert time.perf_counter() - t0 < 60


@criterion(5, "corpus arithmetic")
def test_c05_corpus_arithmetic(tone_dir, tmp_path):
    a = synth_gain_grid(tone_dir, DistortionSpec(), tmp_path / "a", seed=5)
    b = synth_gain_grid(tone_dir, DistortionSpec(), tmp_path / "b", seed=5)
    clean_total = sum(read_wav(p).duration for p in sorted((tone_dir / "clean").glob("*.wav")))
    assert a.total_duration == 5 * clean_total
    sa, sb = split(a, seed=5), split(b, seed=5)
    assert sa.write().read_bytes() == sb.write().read_bytes()
    by_clip = {}
    for e in sa.entries:
        by_clip.setdefault(e.clean_path, set()).add(e.split)
    assert all(len(v) == 1 for v in by_clip.values())
    counts = Counter(next(iter(v)) for v in by_clip.values())
    n = len(by_clip)
    for name, r in zip(("train", "valid", "test"), (0.8, 0.1, 0.1)):
        assert abs(counts[name] - r * n) <= 1


@criterion(6, "A-SPADE feasibility and recovery")
def test_c06_aspade(eval_grid):
    t0 = time.perf_counter()
    # sparse on-bin frames at 10 % sample loss
    for k, phase in ((12, 0.4), (50, 1.3), (200, 2.2)):
        x = np.cos(2 * np.pi * k * np.arange(1024) / 1024 + phase)
        theta = np.quantile(np.abs(x), 0.9)
        res = declip_frame(np.clip(x, -theta, theta), detect(np.clip(x, -theta, theta), theta))
        assert si_sdr(x, res.samples).value > 40
    # unclipped input passes through
    clean = read_wav(eval_grid.resolve(eval_grid.entries[0].clean_path))
    out, rep = declip_signal(clean)
    assert np.array_equal(out.samples, clean.samples) and rep.n_clipped == 0
    deltas = {}
    for e, clean, degraded in _pairs(eval_grid, (1.0, 3.0, 5.0, 7.0)):
        out, rep = declip_signal(degraded, e.params["theta"])
        mask = detect(degraded, e.params["theta"])
        assert np.array_equal(out.samples[mask.reliable], degraded.samples[mask.reliable])
        assert rep.violations == 0
        deltas.setdefault(e.condition_db, []).append(si_sdr(clean, out).value - si_sdr(clean, degraded).value)
    pooled = np.median([d for v in deltas.values() for d in v])
    print("median delta SI-SDR by condition:", {c: round(float(np.median(v)), 2) for c, v in deltas.items()},
          f"pooled {pooled:.2f} dB")
    assert pooled >= 10
    assert time.perf_counter() - t0 < 300


@criterion(7, "IRM oracle")
def test_c07_irm(eval_grid):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    x = Signal(rng.standard_normal(32000))
    assert np.linalg.norm(apply_oracle(x, x).samples - x.samples) / np.linalg.norm(x.samples) < 1e-6
    for cond in EVAL_GRID:
        inp, orc = [], []
        for _, clean, degraded in _pairs(eval_grid, (cond,)):
            inp.append(si_sdr(clean, degraded).value)
            orc.append(si_sdr(clean, apply_oracle(clean, degraded)).value)
        print(f"{cond:g} dB: input {np.median(inp):.2f} oracle {np.median(orc):.2f}")
        assert np.median(orc) > np.median(inp)
    assert time.perf_counter() - t0 < 120


def _live_model(seed):
    rng = np.random.default_rng(seed)
    p = init_params(ModelSpec(), seed)
    t = dict(p.tensors)
    t["head.weight"] = rng.normal(0, 0.3, t["head.weight"].shape)
    for k in t:
        if k.endswith(".bias"):
            t[k] = rng.normal(0, 0.05, t[k].shape)
    return ModelParams(p.spec, t)


@criterion(8, "gradient fidelity")
def test_c08_gradients():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    p = _live_model(8)
    clean = rng.standard_normal((2, 64))
    degraded = np.clip(clean, -0.6, 0.6)
    _, grads = loss_and_grad(p, clean, degraded)
    go = rng.standard_normal((2, 64))
    raw = backward(p, degraded, go)
    h = 1e-5
    checked, worst = Counter(), 0.0
    for name, tensor in p.tensors.items():
        for i in rng.choice(tensor.size, size=min(8, tensor.size), replace=False):
            idx = np.unravel_index(i, tensor.shape)
            orig = tensor[idx]
            vals = []
            for sign in (1, -1):
                tensor[idx] = orig + sign * h
                vals.append((batch_loss(p, clean, degraded), np.sum(go * forward(p, degraded))))
            tensor[idx] = orig
            for analytic, (fp, fm) in ((grads[name][idx], (vals[0][0], vals[1][0])),
                                       (raw[name][idx], (vals[0][1], vals[1][1]))):
                numeric = (fp - fm) / (2 * h)
                worst = max(worst, abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-6))
            checked[name.split(".")[0].rstrip("0123456789")] += 1
    print(f"checked {sum(checked.values())} parameters {dict(checked)}; worst relative error {worst:.2e}")
    assert sum(checked.values()) >= 100 and set(checked) == {"enc", "mid", "dec", "head"}
    assert worst < 1e-4
    assert time.perf_counter() - t0 < 120


@criterion(9, "training sanity")
def test_c09_training(tone_dir, tmp_path):
    t0 = time.perf_counter()
    from unclip.corpus import synth_target_sdr
    m = split(synth_target_sdr(tone_dir, (3, 12), tmp_path / "ts", seed=9), seed=9)
    _, hist = train(m, ModelSpec(), TrainConfig(segment_len=32000, max_epochs=0))
    vals = [sdr(read_wav(m.resolve(e.clean_path)), read_wav(m.resolve(e.degraded_path))).value
            for e in m.with_split("valid")]
    assert abs(-hist[0].valid_loss - np.mean(vals)) < 1e-9

    # single-pair overfit
    rng = np.random.default_rng(9)
    x = tone_clip(rng, n_sines=3, style="steady")[:4096]
    theta = solve_threshold_for_target_sdr(x, 10.0).theta
    y = np.clip(x, -theta, theta)
    params = init_params(ModelSpec(), 0, np.float32)
    state = AdamState()
    reached = None
    for step in range(1, 2001):
        loss, grads = loss_and_grad(params, x[None].astype(np.float32), y[None].astype(np.float32))
        if -loss >= 20:
            reached = step - 1
            break
        tensors, state = adam_step(params.tensors, grads, state, 1e-3)
        params = ModelParams(params.spec, tensors)
        assert all(np.all(np.isfinite(v)) for v in tensors.values())
    print(f"overfit: training SDR >= 20 dB after {reached} steps")
    assert reached is not None

    sched = PlateauSchedule(1e-3, patience=20)
    lrs = [sched.step(5.0) for _ in range(25)]
    assert lrs[19] == 1e-3 and lrs[20] == 1e-3 / 10
    assert time.perf_counter() - t0 < 600


@criterion(10, "superposition study direction")
def test_c10_superposition(tmp_path):
    t0 = time.perf_counter()
    # 20 clips leave 2 per held-out split and the model overfits; 60 gives 48/6/6
    synth_tones(tmp_path / "tones", 60, seed=0)
    cfg = TrainConfig(segment_len=2048, batch_size=8, lr_init=3e-3, max_epochs=40, seed=0)
    rows = superposition_study(tmp_path / "tones", [1.0, 0.5], tmp_path / "study.csv", tmp_path / "work",
                               ModelSpec(), cfg, 0)
    med = {(r.method, r.condition): r.median for r in rows}
    margin = med[("neural", 0.5)] - med[("neural", 1.0)]
    print(f"median test SI-SDR: alpha=1.0 {med[('neural', 1.0)]:.2f} dB, alpha=0.5 {med[('neural', 0.5)]:.2f} dB, "
          f"margin {margin:.2f} dB (inputs {med[('input', 1.0)]:.2f} / {med[('input', 0.5)]:.2f})")
    assert margin >= 6
    assert time.perf_counter() - t0 < 1800


@criterion(11, "speed ordering")
def test_c11_speed(capsys):
    t0 = time.perf_counter()
    assert cli_main(["bench", "rtf", "--seconds", "10"]) == 0
    rep = json.loads(capsys.readouterr().out)
    with capsys.disabled():
        print(f"\nrtf: aspade {rep['aspade']['median']:.3f}, neural {rep['neural']['median']:.3f}")
    assert rep["clip_seconds"] == 10.0
    assert rep["neural"]["median"] < 1.0
    assert rep["aspade"]["median"] > rep["neural"]["median"]
    assert time.perf_counter() - t0 < 120
