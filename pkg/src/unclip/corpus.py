"""Clean/degraded dataset synthesis, splits and JSON Lines manifests."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.signal import butter, sosfilt

from . import effects
from .effects import DistortionSpec, EffectKind
from .metrics import CAP_DB, sdr_value, solve_threshold_for_target_sdr
from .signal import CANONICAL_RATE, Signal, read_wav, resample, write_wav

SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.jsonl"
SPLITS = ("train", "valid", "test")
DEFAULT_GAIN_RANGE = (20.0, 50.0)
EVAL_GRID = (1.0, 3.0, 5.0, 7.0, 10.0, 15.0, 20.0)
TONE_SECONDS = 2.0
TONE_PEAK = 0.9


@dataclass
class Entry:
    clip_id: str
    clean_path: str
    degraded_path: str | None = None
    effect: str | None = None
    params: dict = field(default_factory=dict)
    split: str | None = None
    duration_s: float = 0.0
    sample_rate: int = CANONICAL_RATE

    @property
    def condition_db(self) -> float | None:
        if "target_sdr" in self.params:
            return self.params["target_sdr"]
        return self.params.get("gain_db")


@dataclass
class DatasetManifest:
    entries: list[Entry]
    seed: int | None = None
    root: Path = Path(".")
    schema_version: int = SCHEMA_VERSION

    def resolve(self, rel: str) -> Path:
        return (self.root / rel).resolve() if not os.path.isabs(rel) else Path(rel)

    def with_split(self, name: str) -> list[Entry]:
        return [e for e in self.entries if e.split == name]

    def clean_paths(self) -> list[str]:
        return sorted({e.clean_path for e in self.entries})

    @property
    def total_duration(self) -> float:
        return float(sum(e.duration_s for e in self.entries))

    def to_jsonl(self) -> str:
        lines = []
        for e in self.entries:
            row = {"schema_version": self.schema_version, "seed": self.seed}
            row.update(e.__dict__)
            lines.append(json.dumps(row, sort_keys=True))
        return "".join(line + "\n" for line in lines)

    def write(self, path=None) -> Path:
        path = Path(path) if path is not None else self.root / MANIFEST_NAME
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.to_jsonl())
        return path

    def validate(self) -> None:
        for e in self.entries:
            for p in (e.clean_path, e.degraded_path):
                if p is not None and not self.resolve(p).exists():
                    raise FileNotFoundError(f"manifest references missing file {p}")
            if e.split is not None and e.split not in SPLITS:
                raise ValueError(f"unknown split tag {e.split!r}")
            if "target_sdr" in e.params and e.params["target_sdr"] < CAP_DB:
                if abs(e.params["achieved_sdr"] - e.params["target_sdr"]) > 0.05:
                    raise ValueError(f"{e.clip_id}: achieved SDR off target")


def read_manifest(path) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    entries, seed, version = [], None, SCHEMA_VERSION
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            version = row.pop("schema_version")
            seed = row.pop("seed")
            entries.append(Entry(**row))
    if version != SCHEMA_VERSION:
        raise ValueError(f"unsupported manifest schema version {version}")
    return DatasetManifest(entries, seed, path.parent, version)


def _rel(path: Path, root: Path) -> str:
    return Path(os.path.relpath(Path(path).resolve(), Path(root).resolve())).as_posix()


def load_clean_sources(source, out_dir, sample_rate: int = CANONICAL_RATE) -> list[tuple[str, Path, Signal]]:
    """Collect clean clips from a directory of WAVs or a manifest.

    Returns ``(clip_id, path, signal)`` sorted by clip id. Clips not at
    ``sample_rate`` are resampled and a copy is written under ``out_dir/clean``.
    """
    source = Path(source)
    if source.suffix == ".jsonl" or (source / MANIFEST_NAME).exists():
        m = read_manifest(source)
        paths = sorted({m.resolve(e.clean_path) for e in m.entries})
    elif source.is_dir():
        paths = sorted(p for p in source.iterdir() if p.suffix.lower() == ".wav")
    else:
        raise FileNotFoundError(f"no clean audio found at {source}")
    if not paths:
        raise ValueError(f"{source} contains no WAV files")
    out = []
    for p in paths:
        sig = read_wav(p)
        if sig.sample_rate != sample_rate:
            sig = resample(sig, sample_rate)
            p = Path(out_dir) / "clean" / p.name
            p.parent.mkdir(parents=True, exist_ok=True)
            write_wav(sig, p)
            sig = read_wav(p)
        out.append((p.stem, p, sig))
    return out


def _write_pair(out_dir: Path, name: str, sig: Signal) -> Path:
    path = out_dir / "degraded" / f"{name}.wav"
    path.parent.mkdir(parents=True, exist_ok=True)
    write_wav(sig, path)
    return path


def synth_gain_grid(clean_dir, template: DistortionSpec, out_dir, seed: int = 0,
                    n_gains: int = 5, gain_range=DEFAULT_GAIN_RANGE) -> DatasetManifest:
    """Apply ``n_gains`` gains, drawn once from ``gain_range``, to every clip."""
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    gains = [float(g) for g in rng.uniform(gain_range[0], gain_range[1], n_gains)]
    entries = []
    for clip_id, path, sig in load_clean_sources(clean_dir, out_dir):
        for i, g in enumerate(gains):
            spec = replace(template, gain_db=g)
            dpath = _write_pair(out_dir, f"{clip_id}_g{i}", effects.apply(sig, spec))
            params = {"gain_db": g, "theta": spec.clip_threshold, "alpha": spec.wet_weight}
            if spec.kind is EffectKind.SOX_OVERDRIVE:
                params["colour"] = spec.colour
            entries.append(Entry(clip_id, _rel(path, out_dir), _rel(dpath, out_dir), spec.kind.value,
                                 params, None, sig.duration, sig.sample_rate))
    m = DatasetManifest(entries, seed, out_dir)
    m.write()
    return m


def _clip_at_target(sig: Signal, target: float) -> tuple[Signal, dict]:
    # tighter than the +-0.05 dB contract: float32 storage of theta costs a little
    sol = solve_threshold_for_target_sdr(sig, target, tol_db=0.01)
    # files are float32: clip at a level that survives storage exactly
    theta = float(np.float32(sol.theta))
    clipped = sig.with_samples(np.clip(sig.samples, -theta, theta))
    return clipped, {"target_sdr": float(target), "theta": theta, "achieved_sdr": sol.achieved_db}


def synth_target_sdr(clean_dir, sdr_range, out_dir, seed: int = 0) -> DatasetManifest:
    """Threshold-clip each clip to one input SDR drawn uniformly from ``sdr_range``."""
    lo, hi = map(float, sdr_range)
    if not 0 < lo <= hi:
        raise ValueError("sdr_range must satisfy 0 < lo <= hi")
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    entries = []
    for clip_id, path, sig in load_clean_sources(clean_dir, out_dir):
        target = float(rng.uniform(lo, hi))
        degraded, params = _clip_at_target(sig, target)
        dpath = _write_pair(out_dir, clip_id, degraded)
        params = _remeasure(params, sig, dpath)
        entries.append(Entry(clip_id, _rel(path, out_dir), _rel(dpath, out_dir), EffectKind.HARD_CLIP.value,
                             params, None, sig.duration, sig.sample_rate))
    m = DatasetManifest(entries, seed, out_dir)
    m.write()
    return m


def _remeasure(params: dict, clean: Signal, dpath: Path) -> dict:
    # the stored file is float32; record what a reader will actually measure
    degraded = read_wav(dpath)
    params["achieved_sdr"] = sdr_value(clean.samples, degraded.samples)
    return params


def synth_eval_grid(clean_dir, grid=EVAL_GRID, out_dir=".", split: str | None = "test") -> DatasetManifest:
    """Clip every clean clip at every input SDR of ``grid`` (no randomness)."""
    grid = [float(g) for g in grid]
    if not grid:
        raise ValueError("grid must be nonempty")
    out_dir = Path(out_dir)
    entries = []
    for clip_id, path, sig in load_clean_sources(clean_dir, out_dir):
        for g in grid:
            degraded, params = _clip_at_target(sig, g)
            dpath = _write_pair(out_dir, f"{clip_id}_sdr{g:g}", degraded)
            params = _remeasure(params, sig, dpath)
            entries.append(Entry(clip_id, _rel(path, out_dir), _rel(dpath, out_dir), EffectKind.HARD_CLIP.value,
                                 params, split, sig.duration, sig.sample_rate))
    m = DatasetManifest(entries, None, out_dir)
    m.write()
    return m


def split_counts(n: int, ratios) -> list[int]:
    ratios = np.asarray(ratios, dtype=np.float64)
    if n < len(ratios):
        raise ValueError(f"need at least {len(ratios)} clean clips, got {n}")
    raw = ratios * n
    counts = np.floor(raw).astype(int)
    order = np.argsort(-(raw - counts), kind="stable")
    for i in order[: n - counts.sum()]:
        counts[i] += 1
    # every class gets at least one clip
    for i in range(len(counts)):
        if counts[i] == 0:
            counts[int(np.argmax(counts))] -= 1
            counts[i] = 1
    return [int(c) for c in counts]


def split(manifest: DatasetManifest, ratios=(0.8, 0.1, 0.1), seed: int = 0) -> DatasetManifest:
    """Tag entries train/valid/test, assigning whole clean clips to one split."""
    if len(ratios) != 3 or min(ratios) <= 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError("ratios must be three positive numbers summing to one")
    clips = manifest.clean_paths()
    counts = split_counts(len(clips), ratios)
    order = np.random.default_rng(seed).permutation(len(clips))
    tag = {}
    pos = 0
    for name, c in zip(SPLITS, counts):
        for j in order[pos:pos + c]:
            tag[clips[j]] = name
        pos += c
    entries = [replace(e, split=tag[e.clean_path]) for e in manifest.entries]
    return DatasetManifest(entries, seed if manifest.seed is None else manifest.seed,
                           manifest.root, manifest.schema_version)


def tone_clip(rng: np.random.Generator, n_sines: int | None = None, style: str | None = None,
              sample_rate: int = CANONICAL_RATE, seconds: float = TONE_SECONDS) -> np.ndarray:
    """One synthetic test clip, peak-normalized to 0.9.

    Frequencies are multiples of ``sample_rate / 256`` so that every sinusoid
    falls on a DFT bin both for 1024-sample frames and for the whole clip.
    """
    n = int(round(seconds * sample_rate))
    t = np.arange(n) / sample_rate
    if n_sines is None:
        n_sines = int(rng.integers(1, 6))
    if style is None:
        style = ("steady", "pluck", "burst")[int(rng.integers(0, 3))]
    base = sample_rate / 256.0
    harmonics = rng.choice(np.arange(2, 48), size=n_sines, replace=False)
    x = np.zeros(n)
    for h in harmonics:
        amp = rng.uniform(0.2, 1.0)
        phase = rng.uniform(0, 2 * np.pi)
        x += amp * np.sin(2 * np.pi * h * base * t + phase)
    if style == "pluck":
        onset = int(rng.integers(0, n // 4))
        tau = rng.uniform(0.3, 1.0)
        env = np.zeros(n)
        env[onset:] = np.exp(-(t[onset:] - t[onset]) / tau)
        x *= env
    elif style == "burst":
        length = int(rng.uniform(0.1, 0.3) * sample_rate)
        start = int(rng.integers(0, n - length))
        f_lo = rng.uniform(200.0, 2000.0)
        sos = butter(4, [f_lo, f_lo * 2.0], btype="bandpass", fs=sample_rate, output="sos")
        burst = sosfilt(sos, rng.standard_normal(length)) * np.hanning(length)
        peak = np.max(np.abs(x)) or 1.0
        x[start:start + length] += 0.15 * peak * burst / np.max(np.abs(burst))
    elif style != "steady":
        raise ValueError(f"unknown tone style {style!r}")
    return TONE_PEAK * x / np.max(np.abs(x))


def synth_tones(out_dir, count: int, seed: int = 0, sample_rate: int = CANONICAL_RATE) -> DatasetManifest:
    """Write ``count`` deterministic clean clips and a clean-only manifest."""
    if count < 1:
        raise ValueError("count must be >= 1")
    out_dir = Path(out_dir)
    clean = out_dir / "clean"
    clean.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, child in enumerate(np.random.SeedSequence(seed).spawn(count)):
        x = tone_clip(np.random.default_rng(child), sample_rate=sample_rate)
        path = clean / f"tone_{i:03d}.wav"
        write_wav(Signal(x, sample_rate), path)
        entries.append(Entry(path.stem, _rel(path, out_dir), duration_s=x.size / sample_rate,
                             sample_rate=sample_rate))
    m = DatasetManifest(entries, seed, out_dir)
    m.write()
    return m
