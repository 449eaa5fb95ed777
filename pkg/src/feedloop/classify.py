"""Binary CT classification via two pathways.

FT: a logistic regression over hashed unigrams (2^18 buckets, FNV-1a 32-bit),
trained by deterministic full-batch gradient descent. A CPU-cheap, fully
reproducible stand-in with the same input/output contract as a fine-tuned
production model.

P: prompt-template rendering with pluggable few-shot example selection, a
text-completion client, and robust label extraction from free-form output.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from enum import Enum
from typing import Any, Optional, Protocol, Sequence

from .drift import CorpusProfile, build_profile
from .errors import (
    ClientFailure,
    DegenerateDataset,
    InsufficientTrainExamples,
    MalformedTemplate,
    SplitLeakage,
    Unparseable,
)
from .goldset import GoldExample
from .labels import Label, Pathway, Split
from .textproc import FEATURE_DIM, bucket, fnv1a_str, tokenize

DEFAULT_EPOCHS = 50
DEFAULT_LEARNING_RATE = 0.1
DEFAULT_PARSED_CONFIDENCE = 0.75


@dataclass(frozen=True)
class Classification:
    channel_id: str
    message_id: int
    label: Label
    confidence: float  # in [0, 1]
    pathway: Pathway
    version_id: str
    classified_at: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "channel_id": self.channel_id,
            "message_id": self.message_id,
            "label": self.label.value,
            "confidence": self.confidence,
            "pathway": self.pathway.value,
            "version_id": self.version_id,
            "classified_at": self.classified_at,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Classification":
        return cls(
            channel_id=d["channel_id"],
            message_id=int(d["message_id"]),
            label=Label(d["label"]),
            confidence=float(d["confidence"]),
            pathway=Pathway(d["pathway"]),
            version_id=d["version_id"],
            classified_at=int(d["classified_at"]),
        )


def featurize(text: str) -> dict[int, int]:
    """Sparse token-count vector over 2^18 hash buckets."""
    counts: dict[int, int] = {}
    for token in tokenize(text):
        b = bucket(token)
        counts[b] = counts.get(b, 0) + 1
    return counts


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@dataclass(frozen=True)
class ModelArtifact:
    """Reference classifier weights plus the training-corpus fingerprint used
    for drift detection."""

    weights: dict[int, float]  # sparse over FEATURE_DIM buckets
    bias: float
    vocab_profile: CorpusProfile
    train_seed: int
    trained_on_snapshot: str
    feature_dim: int = FEATURE_DIM

    def to_dict(self) -> dict[str, Any]:
        return {
            "feature_dim": self.feature_dim,
            "weights": {str(k): v for k, v in self.weights.items()},
            "bias": self.bias,
            "vocab_profile": self.vocab_profile.to_dict(),
            "train_seed": self.train_seed,
            "trained_on_snapshot": self.trained_on_snapshot,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ModelArtifact":
        return cls(
            feature_dim=int(d["feature_dim"]),
            weights={int(k): float(v) for k, v in d["weights"].items()},
            bias=float(d["bias"]),
            vocab_profile=CorpusProfile.from_dict(d["vocab_profile"]),
            train_seed=int(d["train_seed"]),
            trained_on_snapshot=d["trained_on_snapshot"],
        )


def train_reference(
    examples: Sequence[tuple[str, Label]],
    seed: int = 0,
    epochs: int = DEFAULT_EPOCHS,
    learning_rate: float = DEFAULT_LEARNING_RATE,
    trained_on_snapshot: str = "",
) -> ModelArtifact:
    """Train the reference classifier.

    Full-batch gradient descent from zero-initialized weights in fixed
    iteration order: identical inputs and seed give a bit-identical artifact.
    Raises DegenerateDataset when only one class is present.
    """
    labels = {label for _, label in examples}
    if labels != {Label.CT, Label.NOT_CT}:
        raise DegenerateDataset(f"training set must contain both labels, got {sorted(l.value for l in labels)}")
    feats = [featurize(text) for text, _ in examples]
    targets = [1.0 if label is Label.CT else 0.0 for _, label in examples]
    n = float(len(examples))

    weights: dict[int, float] = {}
    bias = 0.0
    for _ in range(epochs):
        grad: dict[int, float] = {}
        grad_bias = 0.0
        for x, y in zip(feats, targets):
            z = bias
            for b, c in x.items():
                z += weights.get(b, 0.0) * c
            delta = _sigmoid(z) - y
            for b, c in x.items():
                grad[b] = grad.get(b, 0.0) + delta * c
            grad_bias += delta
        for b, g in grad.items():
            weights[b] = weights.get(b, 0.0) - learning_rate * g / n
        bias -= learning_rate * grad_bias / n

    if not all(math.isfinite(w) for w in weights.values()) or not math.isfinite(bias):
        raise DegenerateDataset("training diverged to non-finite weights")
    profile = build_profile((text for text, _ in examples), built_from=trained_on_snapshot or "training-set")
    return ModelArtifact(
        weights=weights,
        bias=bias,
        vocab_profile=profile,
        train_seed=seed,
        trained_on_snapshot=trained_on_snapshot,
    )


def score_text(artifact: ModelArtifact, text: str) -> float:
    """P(CT | text) under the artifact."""
    z = artifact.bias
    for b, c in featurize(text).items():
        z += artifact.weights.get(b, 0.0) * c
    return _sigmoid(z)


def predict_ft(
    artifact: ModelArtifact,
    text: str,
    channel_id: str = "",
    message_id: int = 0,
    version_id: str = "",
    classified_at: int = 0,
) -> Classification:
    """Label is CT iff score >= 0.5 (harm-reduction bias toward flagging);
    confidence = max(score, 1 - score), always in [0.5, 1]."""
    score = score_text(artifact, text)
    label = Label.CT if score >= 0.5 else Label.NOT_CT
    return Classification(
        channel_id=channel_id,
        message_id=message_id,
        label=label,
        confidence=max(score, 1.0 - score),
        pathway=Pathway.FT,
        version_id=version_id,
        classified_at=classified_at,
    )


# --- prompt pathway ---


class SelectionStrategy(str, Enum):
    RANDOM_SEEDED = "RANDOM_SEEDED"
    TOKEN_OVERLAP = "TOKEN_OVERLAP"
    CLASS_BALANCED = "CLASS_BALANCED"


MESSAGE_PLACEHOLDER = "{message}"
EXAMPLES_PLACEHOLDER = "{examples}"

DEFAULT_TEMPLATE = (
    "Decide whether the following Telegram message spreads a conspiracy theory.\n"
    "Answer with the label CT or NOT_CT and optionally a confidence in [0, 1].\n\n"
    "{examples}Message: {message}\nLabel:"
)


@dataclass(frozen=True)
class PromptTemplate:
    template_text: str
    k_shot: int = 0
    selection_strategy: SelectionStrategy = SelectionStrategy.RANDOM_SEEDED
    selection_seed: int = 0

    def validate(self) -> None:
        if self.template_text.count(MESSAGE_PLACEHOLDER) != 1:
            raise MalformedTemplate("template must contain {message} exactly once")
        if self.k_shot < 0:
            raise MalformedTemplate("k_shot must be >= 0")

    def to_dict(self) -> dict[str, Any]:
        return {
            "template_text": self.template_text,
            "k_shot": self.k_shot,
            "selection_strategy": self.selection_strategy.value,
            "selection_seed": self.selection_seed,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PromptTemplate":
        return cls(
            template_text=d["template_text"],
            k_shot=int(d["k_shot"]),
            selection_strategy=SelectionStrategy(d["selection_strategy"]),
            selection_seed=int(d["selection_seed"]),
        )


def _example_block(example: GoldExample) -> str:
    return f"Text: {example.text}\nLabel: {example.label.value}"


def render_prompt(
    template: PromptTemplate, examples: Sequence[GoldExample], message_text: str
) -> str:
    """Deterministic substitution of {examples} and {message}.

    The message is spliced at the template's own {message} position, so
    placeholder-looking text inside examples or the message is never
    re-expanded. Raises SplitLeakage for any example outside the train split.
    """
    template.validate()
    if len(examples) != template.k_shot:
        raise MalformedTemplate(
            f"expected {template.k_shot} examples, got {len(examples)}"
        )
    for example in examples:
        if example.split is not Split.TRAIN:
            raise SplitLeakage(
                f"example {example.channel_id}:{example.message_id} is in {example.split.value}"
            )
    blocks = "\n\n".join(_example_block(e) for e in examples)
    if blocks:
        blocks += "\n\n"
    idx = template.template_text.index(MESSAGE_PLACEHOLDER)
    prefix = template.template_text[:idx].replace(EXAMPLES_PLACEHOLDER, blocks)
    suffix = template.template_text[idx + len(MESSAGE_PLACEHOLDER):].replace(
        EXAMPLES_PLACEHOLDER, blocks
    )
    return prefix + message_text + suffix


def _hash_order(seed: int, example: GoldExample) -> tuple[int, tuple[str, int]]:
    # process-stable pseudo-shuffle; no RNG state involved
    return (fnv1a_str(f"{seed}:{example.channel_id}:{example.message_id}"), example.key)


def select_examples(
    train_examples: Sequence[GoldExample],
    template: PromptTemplate,
    message_text: str,
) -> list[GoldExample]:
    """Pick k_shot examples from the train split per the template's strategy.

    A pure function of (train split, strategy, seed, message).
    """
    k = template.k_shot
    if k == 0:
        return []
    pool = sorted(train_examples, key=lambda e: e.key)
    for example in pool:
        if example.split is not Split.TRAIN:
            raise SplitLeakage(
                f"selection pool contains {example.split.value} example {example.key}"
            )
    strategy = template.selection_strategy
    if strategy is SelectionStrategy.TOKEN_OVERLAP:
        message_tokens = set(tokenize(message_text))
        scored = sorted(
            pool,
            key=lambda e: (-len(set(tokenize(e.text)) & message_tokens), e.key),
        )
        picked = scored[:k]
    elif strategy is SelectionStrategy.CLASS_BALANCED:
        ct_quota = (k + 1) // 2  # CT gets the odd slot, mirroring the CT-on->= bias
        not_quota = k // 2
        by_label = {Label.CT: [], Label.NOT_CT: []}
        for example in sorted(pool, key=lambda e: _hash_order(template.selection_seed, e)):
            by_label[example.label].append(example)
        if len(by_label[Label.CT]) < ct_quota or len(by_label[Label.NOT_CT]) < not_quota:
            raise InsufficientTrainExamples(
                f"need {ct_quota} CT and {not_quota} NOT_CT train examples, have "
                f"{len(by_label[Label.CT])} and {len(by_label[Label.NOT_CT])}"
            )
        picked = []
        for i in range(k):
            source = by_label[Label.CT] if i % 2 == 0 else by_label[Label.NOT_CT]
            picked.append(source.pop(0))
    else:  # RANDOM_SEEDED
        ordered = sorted(pool, key=lambda e: _hash_order(template.selection_seed, e))
        picked = ordered[:k]
    if len(picked) < k:
        raise InsufficientTrainExamples(f"train split has {len(pool)} examples, need {k}")
    return picked


_LABEL_TOKENS: list[tuple[re.Pattern[str], Label]] = [
    (re.compile(r"\bnot\s+a\s+conspiracy\b", re.IGNORECASE), Label.NOT_CT),
    (re.compile(r"\bnot_ct\b", re.IGNORECASE), Label.NOT_CT),
    (re.compile(r"\bconspiracy\b", re.IGNORECASE), Label.CT),
    (re.compile(r"\bct\b", re.IGNORECASE), Label.CT),
]

_CONFIDENCE_RE = re.compile(r"confidence[^0-9+\-.]*([0-9]+(?:\.[0-9]+)?|\.[0-9]+)", re.IGNORECASE)


def _scan_label(text: str) -> Optional[Label]:
    best: Optional[tuple[int, int, Label]] = None  # (start, -length, label)
    for pattern, label in _LABEL_TOKENS:
        m = pattern.search(text)
        if m is None:
            continue
        candidate = (m.start(), -(m.end() - m.start()), label)
        if best is None or candidate[:2] < best[:2]:
            best = candidate
    return best[2] if best else None


def _scan_confidence(text: str) -> Optional[float]:
    m = _CONFIDENCE_RE.search(text)
    if m is None:
        return None
    try:
        value = float(m.group(1))
    except ValueError:
        return None
    return value if 0.0 <= value <= 1.0 else None


def parse_response(
    raw: str, default_confidence: float = DEFAULT_PARSED_CONFIDENCE
) -> tuple[Label, float]:
    """Extract (label, confidence) from a completion.

    JSON-shaped responses with a "label" field are honored first; otherwise the
    raw text is scanned for the earliest label token, longest match winning at
    equal positions ("not a conspiracy" beats the contained "conspiracy").
    A "confidence" number in [0, 1] is captured when present, else the default.
    Never throws on arbitrary input except Unparseable.
    """
    stripped = raw.strip()
    if stripped.startswith("{"):
        try:
            doc = json.loads(stripped)
        except (json.JSONDecodeError, RecursionError):
            doc = None
        if isinstance(doc, dict) and "label" in doc:
            label = _scan_label(str(doc["label"]))
            if label is not None:
                confidence = default_confidence
                value = doc.get("confidence")
                if isinstance(value, (int, float)) and 0.0 <= float(value) <= 1.0:
                    confidence = float(value)
                return label, confidence
    label = _scan_label(raw)
    if label is None:
        raise Unparseable(f"no label token in response: {raw[:120]!r}")
    confidence = _scan_confidence(raw)
    return label, confidence if confidence is not None else default_confidence


class CompletionClient(Protocol):
    def complete(self, prompt: str) -> str: ...


def classify_p(
    message,
    template: PromptTemplate,
    client: CompletionClient,
    train_examples: Sequence[GoldExample],
    version_id: str = "",
    classified_at: int = 0,
    default_confidence: float = DEFAULT_PARSED_CONFIDENCE,
) -> Classification:
    """Prompt-pathway classification with one retry on Unparseable output or a
    client failure; the second failure propagates."""
    examples = select_examples(train_examples, template, message.text)
    prompt = render_prompt(template, examples, message.text)
    last_error: Exception = Unparseable("unreachable")
    for _ in range(2):
        try:
            raw = client.complete(prompt)
            label, confidence = parse_response(raw, default_confidence)
        except (Unparseable, ClientFailure) as exc:
            last_error = exc
            continue
        return Classification(
            channel_id=message.channel_id,
            message_id=message.message_id,
            label=label,
            confidence=confidence,
            pathway=Pathway.P,
            version_id=version_id,
            classified_at=classified_at,
        )
    raise last_error


class Triage(str, Enum):
    AUTO_ACCEPT = "AUTO_ACCEPT"
    REVIEW_QUEUE = "REVIEW_QUEUE"


def triage(classification: Classification, review_threshold: float) -> Triage:
    """Route low-confidence classifications to human review."""
    if not 0.5 <= review_threshold <= 1.0:
        raise ValueError(f"review_threshold must be in [0.5, 1], got {review_threshold}")
    if classification.confidence >= review_threshold:
        return Triage.AUTO_ACCEPT
    return Triage.REVIEW_QUEUE
