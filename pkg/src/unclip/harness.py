"""Evaluation over manifests, box-plot summaries, the dry/wet superposition
study and real-time-factor benchmarks."""
from __future__ import annotations

import csv
import io
import logging
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import aspade, irm
from .corpus import DatasetManifest, Entry, split, synth_gain_grid
from .effects import DistortionSpec, EffectKind
from .metrics import sdr, si_sdr
from .neural import ModelParams, ModelSpec, TrainConfig, infer, train
from .signal import Signal, read_wav

log = logging.getLogger(__name__)

METHODS = ("input", "aspade", "irm", "neural")
RECORD_COLUMNS = ["method", "effect", "condition_db", "clip_id", "si_sdr_db", "sdr_db", "rtf",
                  "peaq", "rnonlin", "fad"]
SUMMARY_COLUMNS = ["method", "condition_db", "metric", "median", "q1", "q3", "count"]
SUMMARY_METRICS = ("si_sdr_db", "sdr_db")


@dataclass(frozen=True)
class EvalRecord:
    method: str
    effect: str
    condition_db: float
    clip_id: str
    si_sdr_db: float
    sdr_db: float
    rtf: float | None = None

    def sort_key(self):
        return METHODS.index(self.method), self.condition_db, self.clip_id


@dataclass(frozen=True)
class SummaryRow:
    method: str
    condition: float
    metric: str
    median: float
    q1: float
    q3: float
    count: int


def quartiles(values) -> tuple[float, float, float]:
    """Q1, median, Q3 by linear interpolation between closest ranks."""
    q1, med, q3 = np.percentile(np.asarray(values, dtype=np.float64), [25, 50, 75], method="linear")
    return float(q1), float(med), float(q3)


def summarize(records: list[EvalRecord], metrics=SUMMARY_METRICS) -> list[SummaryRow]:
    groups: dict[tuple[str, float], list[EvalRecord]] = {}
    for r in records:
        groups.setdefault((r.method, r.condition_db), []).append(r)
    rows = []
    for (method, cond), recs in sorted(groups.items(), key=lambda kv: (METHODS.index(kv[0][0]), kv[0][1])):
        for metric in metrics:
            q1, med, q3 = quartiles([getattr(r, metric) for r in recs])
            rows.append(SummaryRow(method, cond, metric, med, q1, q3, len(recs)))
    return rows


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def records_csv(records: list[EvalRecord]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for r in records:
        # perceptual metrics are not implemented; columns stay empty
        w.writerow([r.method, r.effect, _fmt(r.condition_db), r.clip_id, _fmt(r.si_sdr_db), _fmt(r.sdr_db),
                    _fmt(r.rtf), "", "", ""])
    return buf.getvalue()


def summary_csv(rows: list[SummaryRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_COLUMNS)
    for r in rows:
        w.writerow([r.method, _fmt(r.condition), r.metric, _fmt(r.median), _fmt(r.q1), _fmt(r.q3), r.count])
    return buf.getvalue()


def _write(path, text: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def summary_path(out_csv) -> Path:
    p = Path(out_csv)
    return p.with_name(p.stem + "_summary" + p.suffix)


def process(method: str, entry: Entry, clean: Signal, degraded: Signal, model: ModelParams | None = None,
            aspade_cfg: aspade.AspadeConfig = aspade.AspadeConfig()) -> tuple[Signal, float]:
    """Run one declipping method; returns the estimate and its real-time factor."""
    t0 = time.perf_counter()
    if method == "aspade":
        out, _ = aspade.declip_signal(degraded, entry.params.get("theta"), aspade_cfg)
    elif method == "irm":
        out = irm.apply_oracle(clean, degraded)
    elif method == "neural":
        if model is None:
            raise ValueError("neural evaluation needs a model")
        out = infer(model, degraded).signal
    else:
        raise ValueError(f"unknown method {method!r}")
    return out, (time.perf_counter() - t0) / degraded.duration


def run_eval(manifest: DatasetManifest, methods=("input", "aspade", "irm"), out_csv=None,
             model: ModelParams | None = None, jobs: int = 1, timing: bool = True,
             aspade_cfg: aspade.AspadeConfig = aspade.AspadeConfig()) -> tuple[list[EvalRecord], list[SummaryRow]]:
    """Score every test entry with every method against its clean reference.

    An ``input`` record (degraded vs clean) is always included. With
    ``timing=False`` the rtf column is left empty so reruns are byte-identical.
    """
    entries = manifest.with_split("test")
    if not entries:
        raise ValueError("manifest has no test split")
    methods = ["input"] + [m for m in methods if m != "input"]
    for m in methods:
        if m not in METHODS:
            raise ValueError(f"unknown method {m!r}")

    def load(e: Entry):
        cp = manifest.resolve(e.clean_path)
        if not cp.exists():
            raise FileNotFoundError(f"missing clean reference {e.clean_path}")
        return read_wav(cp), read_wav(manifest.resolve(e.degraded_path))

    def score(task):
        method, e = task
        clean, degraded = load(e)
        if method == "input":
            est, rtf = degraded, None
        else:
            est, rtf = process(method, e, clean, degraded, model, aspade_cfg)
        return EvalRecord(method, e.effect or "", float(e.condition_db), e.clip_id,
                          si_sdr(clean, est).value, sdr(clean, est).value, rtf if timing else None)

    tasks = [(m, e) for m in methods for e in entries]
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            records = list(pool.map(score, tasks))
    else:
        records = [score(t) for t in tasks]
    records.sort(key=EvalRecord.sort_key)
    rows = summarize(records)
    if out_csv is not None:
        _write(out_csv, records_csv(records))
        _write(summary_path(out_csv), summary_csv(rows))
    return records, rows


@dataclass(frozen=True)
class RtfStats:
    min: float
    median: float
    max: float
    repeats: int

    def to_dict(self) -> dict:
        return {"min": self.min, "median": self.median, "max": self.max, "repeats": self.repeats}


def measure_rtf(process: Callable[[Signal], object], clip: Signal, repeats: int = 3,
                clock: Callable[[], float] = time.perf_counter) -> RtfStats:
    """Wall-clock time per second of audio, over ``repeats`` runs on preloaded audio."""
    if repeats < 3:
        raise ValueError("repeats must be >= 3")
    rtfs = []
    for _ in range(repeats):
        t0 = clock()
        process(clip)
        rtfs.append((clock() - t0) / clip.duration)
    return RtfStats(min(rtfs), statistics.median(rtfs), max(rtfs), repeats)


def superposition_study(clean_dir, alpha_list, out_csv, work_dir, spec: ModelSpec = ModelSpec(),
                        cfg: TrainConfig = TrainConfig(), seed: int = 0,
                        template: DistortionSpec = DistortionSpec(EffectKind.HARD_CLIP)) -> list[SummaryRow]:
    """Train and test one model per dry/wet weight on gain-grid hard clipping.

    Every weight uses the same clips, gains, split, seeds and budget; only the
    blend changes. One ``neural`` and one ``input`` row per weight is written.
    """
    alpha_list = [float(a) for a in alpha_list]
    if 1.0 not in alpha_list or not any(a < 1.0 for a in alpha_list):
        raise ValueError("alpha_list must contain 1.0 and at least one weight below 1")
    work_dir = Path(work_dir)
    rows = []
    for alpha in alpha_list:
        tmpl = replace(template, wet_weight=alpha)
        m = synth_gain_grid(clean_dir, tmpl, work_dir / f"alpha_{alpha:g}", seed=seed)
        m = split(m, (0.8, 0.1, 0.1), seed=seed)
        m.write()
        params, history = train(m, spec, cfg)
        log.info("alpha %g: valid loss %.3f -> %.3f", alpha, history[0].valid_loss,
                 min(h.valid_loss for h in history))
        out, inp = [], []
        for e in m.with_split("test"):
            clean = read_wav(m.resolve(e.clean_path))
            degraded = read_wav(m.resolve(e.degraded_path))
            inp.append(si_sdr(clean, degraded).value)
            out.append(si_sdr(clean, infer(params, degraded).signal).value)
        for method, vals in (("input", inp), ("neural", out)):
            q1, med, q3 = quartiles(vals)
            rows.append(SummaryRow(method, alpha, "si_sdr_db", med, q1, q3, len(vals)))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method", "alpha", "metric", "median", "q1", "q3", "count"])
    for r in rows:
        w.writerow([r.method, _fmt(r.condition), r.metric, _fmt(r.median), _fmt(r.q1), _fmt(r.q3), r.count])
    _write(out_csv, buf.getvalue())
    return rows
