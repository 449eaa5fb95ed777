"""Model and prompt lifecycle: evaluation on gold splits, promotion gates,
retraining triggers, deterministic A/B assignment, and few-shot experiments.

Promotion reads only VALIDATION reports; the TEST split is evaluated at most
once per deployed version, recorded at deployment time. Unparseable prompt
outputs are scored as errors so a prompt cannot win by dodging answers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional, Sequence, Union

from .classify import (
    CompletionClient,
    ModelArtifact,
    PromptTemplate,
    SelectionStrategy,
    classify_p,
    predict_ft,
)
from .drift import DriftReport
from .errors import (
    EmptySplit,
    InsufficientTrainExamples,
    InvalidTransition,
    SnapshotMismatch,
    Unparseable,
    UnknownVersion,
)
from .goldset import GoldExample
from .labels import Label, Pathway, Split
from .textproc import fnv1a_str

PROMOTE = "PROMOTE"
REJECT = "REJECT"


@dataclass(frozen=True)
class EvalReport:
    snapshot_id: str
    split: Split
    tp: int
    fp: int
    fn: int
    tn: int
    accuracy: float
    precision: float
    recall: float
    f1: float
    unparseable_count: int = 0

    @classmethod
    def from_counts(
        cls,
        snapshot_id: str,
        split: Split,
        tp: int,
        fp: int,
        fn: int,
        tn: int,
        unparseable_count: int = 0,
    ) -> "EvalReport":
        total = tp + fp + fn + tn
        if total == 0:
            raise EmptySplit("evaluation over zero examples")
        # 0/0 convention: precision and recall are 0 when their denominator is 0
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        return cls(
            snapshot_id=snapshot_id,
            split=split,
            tp=tp,
            fp=fp,
            fn=fn,
            tn=tn,
            accuracy=(tp + tn) / total,
            precision=precision,
            recall=recall,
            f1=f1,
            unparseable_count=unparseable_count,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "snapshot_id": self.snapshot_id,
            "split": self.split.value,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "tn": self.tn,
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "unparseable_count": self.unparseable_count,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EvalReport":
        return cls(
            snapshot_id=d["snapshot_id"],
            split=Split(d["split"]),
            tp=int(d["tp"]),
            fp=int(d["fp"]),
            fn=int(d["fn"]),
            tn=int(d["tn"]),
            accuracy=float(d["accuracy"]),
            precision=float(d["precision"]),
            recall=float(d["recall"]),
            f1=float(d["f1"]),
            unparseable_count=int(d.get("unparseable_count", 0)),
        )


@dataclass(frozen=True)
class GovernanceEntry:
    actor: str
    action: str
    rationale: str
    at: int

    def to_dict(self) -> dict[str, Any]:
        return {"actor": self.actor, "action": self.action, "rationale": self.rationale, "at": self.at}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "GovernanceEntry":
        return cls(actor=d["actor"], action=d["action"], rationale=d["rationale"], at=int(d["at"]))


CANDIDATE = "CANDIDATE"
VALIDATED = "VALIDATED"
DEPLOYED = "DEPLOYED"
RETIRED = "RETIRED"

_ALLOWED_TRANSITIONS = {
    CANDIDATE: {VALIDATED, RETIRED, DEPLOYED},  # direct DEPLOYED only via HOTFIX
    VALIDATED: {DEPLOYED, RETIRED},
    DEPLOYED: {RETIRED},
    RETIRED: set(),
}


@dataclass
class VersionRecord:
    """A model or prompt version with its status, eval history, and the
    governance log every deployment event must append to."""

    version_id: str
    pathway: Pathway
    payload: Union[ModelArtifact, PromptTemplate]
    status: str = CANDIDATE
    evals: list[EvalReport] = field(default_factory=list)
    governance_log: list[GovernanceEntry] = field(default_factory=list)
    created_from_snapshot: str = ""
    created_at: int = 0
    review_after: Optional[int] = None  # HOTFIX monitoring window deadline

    def latest_eval(self, split: Split, snapshot_id: Optional[str] = None) -> Optional[EvalReport]:
        for report in reversed(self.evals):
            if report.split is split and (snapshot_id is None or report.snapshot_id == snapshot_id):
                return report
        return None

    def test_eval_count(self) -> int:
        return sum(1 for e in self.governance_log if e.action == "eval:TEST")

    def to_dict(self) -> dict[str, Any]:
        return {
            "version_id": self.version_id,
            "pathway": self.pathway.value,
            "payload": self.payload.to_dict(),
            "status": self.status,
            "evals": [e.to_dict() for e in self.evals],
            "governance_log": [g.to_dict() for g in self.governance_log],
            "created_from_snapshot": self.created_from_snapshot,
            "created_at": self.created_at,
            "review_after": self.review_after,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "VersionRecord":
        pathway = Pathway(d["pathway"])
        payload: Union[ModelArtifact, PromptTemplate]
        if pathway is Pathway.FT:
            payload = ModelArtifact.from_dict(d["payload"])
        else:
            payload = PromptTemplate.from_dict(d["payload"])
        return cls(
            version_id=d["version_id"],
            pathway=pathway,
            payload=payload,
            status=d["status"],
            evals=[EvalReport.from_dict(e) for e in d["evals"]],
            governance_log=[GovernanceEntry.from_dict(g) for g in d["governance_log"]],
            created_from_snapshot=d.get("created_from_snapshot", ""),
            created_at=int(d.get("created_at", 0)),
            review_after=d.get("review_after"),
        )


@dataclass(frozen=True)
class RolloutPolicy:
    variant_a: str
    variant_b: str
    fraction_b: float  # in [0, 1]
    key_basis: str  # MESSAGE | USER
    started_at: int
    review_after: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "variant_a": self.variant_a,
            "variant_b": self.variant_b,
            "fraction_b": self.fraction_b,
            "key_basis": self.key_basis,
            "started_at": self.started_at,
            "review_after": self.review_after,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RolloutPolicy":
        return cls(
            variant_a=d["variant_a"],
            variant_b=d["variant_b"],
            fraction_b=float(d["fraction_b"]),
            key_basis=d["key_basis"],
            started_at=int(d["started_at"]),
            review_after=int(d["review_after"]),
        )


def assign_variant(key: str, policy: RolloutPolicy) -> str:
    """Deterministic hash-split traffic assignment.

    Growing fraction_b keeps every key that was in B inside B.
    """
    h = fnv1a_str(key) % 10000
    return policy.variant_b if h < 10000 * policy.fraction_b else policy.variant_a


def promotion_gate(
    candidate: EvalReport, incumbent: Optional[EvalReport], margin: float = 0.0
) -> str:
    """PROMOTE iff the candidate's validation F1 beats the incumbent's by at
    least `margin`. A missing incumbent (bootstrap) always promotes."""
    if candidate.split is not Split.VALIDATION:
        raise SnapshotMismatch("promotion reads VALIDATION reports only")
    if incumbent is None:
        return PROMOTE
    if incumbent.split is not Split.VALIDATION:
        raise SnapshotMismatch("promotion reads VALIDATION reports only")
    if candidate.snapshot_id != incumbent.snapshot_id:
        raise SnapshotMismatch(
            f"reports from different snapshots: {candidate.snapshot_id} vs {incumbent.snapshot_id}"
        )
    return PROMOTE if candidate.f1 >= incumbent.f1 + margin else REJECT


def retrain_trigger(
    latest: Optional[DriftReport],
    new_gold_since_training: int,
    schedule_due: bool,
    min_new_gold: int,
) -> bool:
    """True when drift fired, enough new gold accumulated, or the schedule is due."""
    return bool(
        (latest is not None and latest.triggered)
        or new_gold_since_training >= min_new_gold
        or schedule_due
    )


def evaluate_examples(
    version: VersionRecord,
    examples: Sequence[GoldExample],
    snapshot_id: str,
    split: Split,
    train_examples: Sequence[GoldExample] = (),
    client: Optional[CompletionClient] = None,
    default_confidence: float = 0.75,
) -> EvalReport:
    """Classify every example in the split and score against gold with CT as
    the positive class. Unparseable prompt outputs count as errors: the
    prediction is scored as the negation of gold (pessimistic)."""
    if not examples:
        raise EmptySplit(f"{split.value} split of snapshot {snapshot_id} is empty")
    tp = fp = fn = tn = 0
    unparseable = 0
    for example in examples:
        if version.pathway is Pathway.FT:
            assert isinstance(version.payload, ModelArtifact)
            predicted = predict_ft(version.payload, example.text).label
        else:
            assert isinstance(version.payload, PromptTemplate)
            if client is None:
                raise EmptySplit("prompt evaluation requires a completion client")
            try:
                predicted = classify_p(
                    _eval_message(example),
                    version.payload,
                    client,
                    train_examples,
                    version_id=version.version_id,
                    default_confidence=default_confidence,
                ).label
            except Unparseable:
                unparseable += 1
                predicted = example.label.other()
        gold = example.label
        if gold is Label.CT and predicted is Label.CT:
            tp += 1
        elif gold is Label.CT:
            fn += 1
        elif predicted is Label.CT:
            fp += 1
        else:
            tn += 1
    return EvalReport.from_counts(
        snapshot_id, split, tp, fp, fn, tn, unparseable_count=unparseable
    )


def _eval_message(example: GoldExample):
    from .ingest import Message

    return Message(
        channel_id=example.channel_id,
        message_id=example.message_id,
        posted_at=example.created_at,
        text=example.text,
    )


@dataclass(frozen=True)
class ExperimentSpec:
    """Grid of (k, strategy) cells for few-shot prompt experiments, evaluated
    on the VALIDATION split only."""

    k_values: tuple[int, ...]
    strategies: tuple[SelectionStrategy, ...]
    seed: int
    snapshot_id: str
    template_text: str

    def validate(self) -> None:
        if not self.k_values or not self.strategies:
            raise ValueError("experiment grids must be non-empty")

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ExperimentSpec":
        return cls(
            k_values=tuple(int(k) for k in d["k_values"]),
            strategies=tuple(SelectionStrategy(s) for s in d["strategies"]),
            seed=int(d["seed"]),
            snapshot_id=d["snapshot_id"],
            template_text=d["template_text"],
        )


@dataclass(frozen=True)
class ExperimentCell:
    k: int
    strategy: SelectionStrategy
    report: EvalReport

    def to_dict(self) -> dict[str, Any]:
        return {"k": self.k, "strategy": self.strategy.value, "report": self.report.to_dict()}


def fewshot_experiment(
    spec: ExperimentSpec,
    train_examples: Sequence[GoldExample],
    validation_examples: Sequence[GoldExample],
    client: CompletionClient,
    default_confidence: float = 0.75,
) -> list[ExperimentCell]:
    """Evaluate every grid cell on the validation split and rank the results.

    k=0 is strategy-independent, so those cells collapse into one. Results
    sort by F1 descending, ties broken by smaller k then strategy name.
    Deterministic given the spec and the client's script.
    """
    spec.validate()
    if SelectionStrategy.CLASS_BALANCED in spec.strategies:
        per_class = {Label.CT: 0, Label.NOT_CT: 0}
        for example in train_examples:
            per_class[example.label] += 1
        need = max(spec.k_values)
        if min(per_class.values()) < need:
            raise InsufficientTrainExamples(
                f"CLASS_BALANCED grid needs {need} per class, have {per_class}"
            )
    ordered_strategies = sorted(set(spec.strategies), key=lambda s: s.value)
    cells: list[tuple[int, SelectionStrategy]] = []
    for k in sorted(set(spec.k_values)):
        if k == 0:
            cells.append((0, ordered_strategies[0]))
        else:
            cells.extend((k, strategy) for strategy in ordered_strategies)
    results = []
    for k, strategy in cells:
        template = PromptTemplate(
            template_text=spec.template_text,
            k_shot=k,
            selection_strategy=strategy,
            selection_seed=spec.seed,
        )
        version = VersionRecord(
            version_id=f"experiment:k={k}:{strategy.value}",
            pathway=Pathway.P,
            payload=template,
        )
        report = evaluate_examples(
            version,
            validation_examples,
            spec.snapshot_id,
            Split.VALIDATION,
            train_examples=train_examples,
            client=client,
            default_confidence=default_confidence,
        )
        results.append(ExperimentCell(k=k, strategy=strategy, report=report))
    results.sort(key=lambda c: (-c.report.f1, c.k, c.strategy.value))
    return results


class VersionRegistry:
    """All version records plus the per-pathway deployment pointers and the
    active rollout policy. Mutations happen only through Store.apply."""

    def __init__(self) -> None:
        self.versions: dict[str, VersionRecord] = {}
        self.deployed: dict[Pathway, Optional[str]] = {Pathway.FT: None, Pathway.P: None}
        self.rollout: Optional[RolloutPolicy] = None
        self._counters = {Pathway.FT: 0, Pathway.P: 0}

    def next_version_id(self, pathway: Pathway) -> str:
        prefix = "ft" if pathway is Pathway.FT else "p"
        return f"{prefix}-{self._counters[pathway] + 1:04d}"

    def add(self, record: VersionRecord) -> None:
        if record.version_id in self.versions:
            raise ValueError(f"duplicate version id {record.version_id}")
        self.versions[record.version_id] = record
        self._counters[record.pathway] += 1

    def get(self, version_id: str) -> VersionRecord:
        if version_id not in self.versions:
            raise UnknownVersion(version_id)
        return self.versions[version_id]

    def deployed_version(self, pathway: Pathway) -> Optional[VersionRecord]:
        vid = self.deployed.get(pathway)
        return self.versions[vid] if vid else None

    def transition(self, version_id: str, new_status: str, entry: GovernanceEntry) -> VersionRecord:
        record = self.get(version_id)
        if new_status not in _ALLOWED_TRANSITIONS.get(record.status, set()):
            raise InvalidTransition(f"{record.status} -> {new_status} for {version_id}")
        record.status = new_status
        record.governance_log.append(entry)
        if new_status == DEPLOYED:
            record_eval_ok = bool(record.evals) or entry.action.startswith("HOTFIX")
            if not record_eval_ok:
                raise InvalidTransition(f"{version_id} has no eval and is not a HOTFIX")
            self.deployed[record.pathway] = version_id
        elif new_status == RETIRED and self.deployed.get(record.pathway) == version_id:
            self.deployed[record.pathway] = None
        return record

    def attach_eval(self, version_id: str, report: EvalReport, entry: GovernanceEntry) -> None:
        record = self.get(version_id)
        record.evals.append(report)
        record.governance_log.append(entry)
