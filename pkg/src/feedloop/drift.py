"""Concept drift detection: compare incoming message windows to the training
corpus in the classifier's own hashed-unigram feature space.

The metric pair is base-2 Jensen-Shannon divergence (bounded, symmetric) plus
out-of-vocabulary token mass. Hash collisions are accepted as noise: drift is
measured exactly where the model lives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Iterable, Optional

from .errors import EmptyProfile, EmptyWindow
from .textproc import bucket, tokenize


@dataclass(frozen=True)
class CorpusProfile:
    """Sparse unigram distribution over hash buckets plus corpus metadata."""

    unigram_dist: dict[int, float]
    token_count: int
    built_from: str = ""

    @property
    def vocab(self) -> frozenset[int]:
        return frozenset(self.unigram_dist)

    def to_dict(self) -> dict[str, Any]:
        return {
            "unigram_dist": {str(k): v for k, v in self.unigram_dist.items()},
            "token_count": self.token_count,
            "built_from": self.built_from,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CorpusProfile":
        return cls(
            unigram_dist={int(k): float(v) for k, v in d["unigram_dist"].items()},
            token_count=int(d["token_count"]),
            built_from=d.get("built_from", ""),
        )


def build_profile(texts: Iterable[str], built_from: str = "") -> CorpusProfile:
    """Tokenize and hash exactly as the classifier does, then normalize counts."""
    counts: dict[int, int] = {}
    total = 0
    for text in texts:
        for token in tokenize(text):
            b = bucket(token)
            counts[b] = counts.get(b, 0) + 1
            total += 1
    if total == 0:
        return CorpusProfile(unigram_dist={}, token_count=0, built_from=built_from)
    dist = {b: c / total for b, c in sorted(counts.items())}
    return CorpusProfile(unigram_dist=dist, token_count=total, built_from=built_from)


def js_divergence(p: CorpusProfile, q: CorpusProfile) -> float:
    """Base-2 Jensen-Shannon divergence over the union support.

    0 for identical distributions, 1 for disjoint supports. Terms with zero
    probability contribute zero.
    """
    if p.token_count == 0 or q.token_count == 0:
        raise EmptyProfile("js_divergence requires non-empty profiles")
    total = 0.0
    for b in sorted(p.vocab | q.vocab):
        pp = p.unigram_dist.get(b, 0.0)
        qq = q.unigram_dist.get(b, 0.0)
        m = 0.5 * (pp + qq)
        if pp > 0.0:
            total += 0.5 * pp * math.log2(pp / m)
        if qq > 0.0:
            total += 0.5 * qq * math.log2(qq / m)
    # clamp float dust at the boundaries
    return min(max(total, 0.0), 1.0)


def oov_rate(window: CorpusProfile, reference: CorpusProfile) -> float:
    """Fraction of window token mass in buckets absent from the reference vocab."""
    if window.token_count == 0:
        raise EmptyProfile("oov_rate requires a non-empty window profile")
    ref_vocab = reference.vocab
    return sum(p for b, p in window.unigram_dist.items() if b not in ref_vocab)


@dataclass(frozen=True)
class DriftReport:
    window_from: int
    window_to: int
    message_count: int
    jsd: float
    oov_rate: float
    tau_jsd: float
    tau_oov: float
    triggered: bool
    computed_at: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "window_from": self.window_from,
            "window_to": self.window_to,
            "message_count": self.message_count,
            "jsd": self.jsd,
            "oov_rate": self.oov_rate,
            "tau_jsd": self.tau_jsd,
            "tau_oov": self.tau_oov,
            "triggered": self.triggered,
            "computed_at": self.computed_at,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DriftReport":
        return cls(
            window_from=int(d["window_from"]),
            window_to=int(d["window_to"]),
            message_count=int(d["message_count"]),
            jsd=float(d["jsd"]),
            oov_rate=float(d["oov_rate"]),
            tau_jsd=float(d["tau_jsd"]),
            tau_oov=float(d["tau_oov"]),
            triggered=bool(d["triggered"]),
            computed_at=int(d["computed_at"]),
        )


def check_drift(
    window_messages: list,
    reference: CorpusProfile,
    tau_jsd: float,
    tau_oov: float,
    computed_at: int,
    window_from: Optional[int] = None,
    window_to: Optional[int] = None,
) -> DriftReport:
    """Build the window profile, score it against the reference, and decide.

    triggered <=> (jsd > tau_jsd) or (oov_rate > tau_oov).
    """
    if not window_messages:
        raise EmptyWindow("drift check over an empty window")
    texts = [m.text for m in window_messages]
    profile = build_profile(texts, built_from="window")
    if profile.token_count == 0:
        raise EmptyWindow("window contains no tokens")
    jsd = js_divergence(profile, reference)
    oov = oov_rate(profile, reference)
    stamps = [m.posted_at for m in window_messages]
    return DriftReport(
        window_from=window_from if window_from is not None else min(stamps),
        window_to=window_to if window_to is not None else max(stamps),
        message_count=len(window_messages),
        jsd=jsd,
        oov_rate=oov,
        tau_jsd=tau_jsd,
        tau_oov=tau_oov,
        triggered=(jsd > tau_jsd) or (oov > tau_oov),
        computed_at=computed_at,
    )
