"""Offline tri-pattern head classification from history logit sequences."""

from __future__ import annotations

import json
import statistics
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import AllZero, EmptySequence, InsufficientHistory
from .heads import HeadClass, HeadKind
from .trace import LogitSequence, LogitTrace

ArrayLike = Union[LogitSequence, Sequence[float], np.ndarray]


@dataclass(frozen=True)
class ClassifyConfig:
    alpha: float = 0.80
    beta: float = 6.4
    harmonic_count: int = 4
    min_length: int = 8
    period_search_max: Optional[float] = None
    # zero-pad the differenced signal to this many samples before the FFT
    pad_to: Optional[int] = None

    def __post_init__(self):
        if not 0.5 < self.alpha <= 1:
            raise ValueError(f"alpha must be in (0.5, 1], got {self.alpha}")
        if self.beta < 2:
            raise ValueError(f"beta must be >= 2, got {self.beta}")
        if self.harmonic_count < 1:
            raise ValueError("harmonic_count must be >= 1")
        if self.min_length < 3:
            raise ValueError("min_length must be >= 3")
        if self.period_search_max is not None and self.period_search_max < 2:
            raise ValueError("period_search_max must be >= 2")


@dataclass(frozen=True)
class PeriodEstimate:
    dominant_period: float
    folded_score: float
    spectrum_peak_index: int


def _values(seq: ArrayLike) -> np.ndarray:
    if isinstance(seq, LogitSequence):
        return seq.values
    return np.asarray(seq, dtype=np.float64)


def sign_rates(seq: ArrayLike) -> tuple[float, float]:
    """Fractions of strictly positive and of non-positive logits."""
    a = _values(seq)
    if a.size == 0:
        raise EmptySequence("sign rates of an empty sequence")
    r_pos = np.count_nonzero(a > 0) / a.size
    return r_pos, 1.0 - r_pos


def mean_logit(seq: ArrayLike) -> float:
    a = _values(seq)
    if a.size == 0:
        raise EmptySequence("mean of an empty sequence")
    return float(np.mean(a))


def preprocess(seq: ArrayLike) -> np.ndarray:
    """First difference, mean removal and Hanning taper."""
    d = np.diff(_values(seq))
    d = d - d.mean()
    return d * np.hanning(len(d))


def magnitude_spectrum(x: np.ndarray, n: Optional[int] = None) -> np.ndarray:
    return np.abs(np.fft.rfft(x, n=n))


def folded_scores(mag: np.ndarray, harmonic_count: int) -> np.ndarray:
    """``score[k] = sum_h |X[h*k]| / h`` over harmonics at or below Nyquist.

    Index 0 (DC) is left at zero and never selected.
    """
    nyq = len(mag) - 1
    score = np.zeros(len(mag))
    for h in range(1, harmonic_count + 1):
        kmax = nyq // h
        if kmax < 1:
            break
        score[1 : kmax + 1] += mag[h : h * kmax + 1 : h] / h
    return score


def estimate_period(seq: ArrayLike, cfg: ClassifyConfig = ClassifyConfig()) -> PeriodEstimate:
    a = _values(seq)
    if a.size < cfg.min_length:
        raise InsufficientHistory(f"need {cfg.min_length} frames, got {a.size}")
    d = np.diff(a)
    centered = d - d.mean()
    scale = max(float(np.max(np.abs(a))), np.finfo(float).tiny)
    if np.max(np.abs(centered)) <= 1e-12 * scale:
        raise AllZero("differenced signal has no variation")
    n_fft = max(cfg.pad_to or 0, len(d))
    mag = magnitude_spectrum(centered * np.hanning(len(d)), n=n_fft)
    score = folded_scores(mag, cfg.harmonic_count)
    if cfg.period_search_max is not None:
        k = np.arange(len(score))
        score[(k > 0) & (n_fft / np.maximum(k, 1) > cfg.period_search_max)] = 0.0
    k = int(np.argmax(score[1:])) + 1
    return PeriodEstimate(n_fft / k, float(score[k]), k)


def classify_head(seq: ArrayLike, cfg: ClassifyConfig = ClassifyConfig()) -> HeadClass:
    """Sign-rate gate, then FFT period test, then mean-logit fallback.

    Gating comes first so one-sided heads with a periodic ripple never reach
    the wave test.
    """
    a = _values(seq)
    if a.size < cfg.min_length:
        raise InsufficientHistory(f"need {cfg.min_length} frames, got {a.size}")
    r_pos, r_neg = sign_rates(a)
    if r_pos >= cfg.alpha:
        return HeadClass.anchor()
    if r_neg >= cfg.alpha:
        return HeadClass.veil()
    try:
        est = estimate_period(a, cfg)
    except AllZero:
        est = None
    if est is not None and est.dominant_period < cfg.beta:
        return HeadClass.wave(est.dominant_period)
    return HeadClass.anchor() if mean_logit(a) > 0 else HeadClass.veil()


@dataclass
class HeadVote:
    result: HeadClass
    votes: dict[HeadKind, int]
    tie_break: bool = False


@dataclass
class HeadClassMap:
    heads: list[list[HeadVote]]
    prompts_voted: int
    config: ClassifyConfig = field(default_factory=ClassifyConfig)

    @property
    def num_layers(self) -> int:
        return len(self.heads)

    @property
    def num_heads(self) -> int:
        return len(self.heads[0]) if self.heads else 0

    def __getitem__(self, idx: tuple[int, int]) -> HeadClass:
        layer, head = idx
        return self.heads[layer][head].result

    def kinds(self) -> np.ndarray:
        return np.array([[int(v.result.kind) for v in row] for row in self.heads], dtype=np.uint8)

    def counts(self) -> dict[str, int]:
        c = Counter(v.result.kind.label for row in self.heads for v in row)
        return {k.label: c.get(k.label, 0) for k in HeadKind}

    @classmethod
    def uniform(cls, layers: int, heads: int, cls_: HeadClass) -> "HeadClassMap":
        rows = [[HeadVote(cls_, {cls_.kind: 1}) for _ in range(heads)] for _ in range(layers)]
        return cls(rows, prompts_voted=0)

    @classmethod
    def from_kinds(cls, kinds: np.ndarray, period: float = 6.0) -> "HeadClassMap":
        rows = []
        for row in np.asarray(kinds):
            out = []
            for k in row:
                kind = HeadKind(int(k))
                hc = HeadClass.wave(period) if kind is HeadKind.WAVE else HeadClass(kind)
                out.append(HeadVote(hc, {kind: 1}))
            rows.append(out)
        return cls(rows, prompts_voted=0)

    def to_dict(self) -> dict:
        layers = []
        for row in self.heads:
            entries = []
            for v in row:
                e = {"class": v.result.kind.label}
                if v.result.period is not None:
                    e["period"] = v.result.period
                if v.tie_break:
                    e["tie_break"] = True
                entries.append(e)
            layers.append({"heads": entries})
        return {"layers": layers, "config": asdict(self.config), "prompts_voted": self.prompts_voted}

    @classmethod
    def from_dict(cls, doc: dict) -> "HeadClassMap":
        cfg = ClassifyConfig(**doc.get("config", {}))
        rows = []
        for layer in doc["layers"]:
            row = []
            for e in layer["heads"]:
                kind = HeadKind.parse(e["class"])
                hc = HeadClass(kind, e.get("period")) if kind is HeadKind.WAVE else HeadClass(kind)
                row.append(HeadVote(hc, {}, bool(e.get("tie_break", False))))
            rows.append(row)
        return cls(rows, int(doc.get("prompts_voted", 0)), cfg)

    def dumps(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _vote(results: list[HeadClass], pooled: np.ndarray) -> HeadVote:
    votes = Counter(r.kind for r in results)
    top = max(votes.values())
    tied = {k for k, c in votes.items() if c == top}
    tie_break = len(tied) > 1
    if not tie_break:
        (winner,) = tied
    else:
        fallback = HeadKind.ANCHOR if mean_logit(pooled) > 0 else HeadKind.VEIL
        # a tie without the fallback class can only be {wave, opposite of fallback}
        winner = fallback if fallback in tied else HeadKind.WAVE
    if winner is HeadKind.WAVE:
        periods = [r.period for r in results if r.kind is HeadKind.WAVE]
        hc = HeadClass.wave(statistics.median(periods))
    else:
        hc = HeadClass(winner)
    return HeadVote(hc, {k: votes.get(k, 0) for k in HeadKind}, tie_break)


def classify_model(trace: LogitTrace, cfg: ClassifyConfig = ClassifyConfig()) -> HeadClassMap:
    """Per-prompt classification of every head, aggregated by majority vote.

    Wave winners take the median period of their wave-voting prompts. Ties go
    to the mean-logit fallback on the prompt-pooled sequence.
    """
    rows = []
    for layer in range(trace.num_layers):
        row = []
        for head in range(trace.num_heads):
            seqs = trace.sequences[:, layer, head, :].astype(np.float64)
            results = []
            first_err = None
            for p in range(trace.num_prompts):
                try:
                    results.append(classify_head(seqs[p], cfg))
                except InsufficientHistory as exc:
                    first_err = first_err or exc
            if not results:
                raise first_err
            row.append(_vote(results, seqs.reshape(-1)))
        rows.append(row)
    return HeadClassMap(rows, prompts_voted=trace.num_prompts, config=cfg)


def label_agreement(hmap: HeadClassMap, trace: LogitTrace) -> tuple[float, np.ndarray]:
    """Fraction of labeled heads matching, plus a 3x3 confusion matrix (truth x predicted)."""
    if trace.labels is None:
        raise ValueError("trace carries no labels")
    pred = hmap.kinds()
    mask = trace.labels != 255
    confusion = np.zeros((3, 3), dtype=int)
    np.add.at(confusion, (trace.labels[mask].astype(int), pred[mask].astype(int)), 1)
    total = int(mask.sum())
    return (float(np.trace(confusion)) / total if total else float("nan")), confusion
