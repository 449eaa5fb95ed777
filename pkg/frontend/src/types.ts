// Wire types for the monitoring service HTTP API.

export type Label = "CT" | "NOT_CT";
export type Pathway = "FT" | "P";

export interface Classification {
  channel_id: string;
  message_id: number;
  label: Label;
  confidence: number;
  pathway: Pathway;
  version_id: string;
  classified_at: number;
}

export interface Message {
  channel_id: string;
  message_id: number;
  posted_at: number;
  text: string;
  media_flag: boolean;
  ingest_seq: number;
}

export interface MyFeedback {
  kind: "AGREE" | "DISAGREE" | "RELABEL";
  label: Label;
}

export interface FeedItem {
  message: Message;
  classification: Classification | null;
  in_review_queue: boolean;
  mine?: MyFeedback | null;
}

export interface FeedPage {
  items: FeedItem[];
  page: number;
  page_size: number;
}

export type ExplicitKind = "AGREE" | "DISAGREE" | "RELABEL";
export type ImplicitKind = "IMPRESSION" | "SCROLL_PAST" | "CLICK" | "DWELL";

export interface FeedbackRequest {
  user_id: string;
  channel_id: string;
  message_id: number;
  kind: ExplicitKind;
  label?: Label;
  displayed_version?: string;
}

export interface ImplicitEvent {
  user_id: string;
  channel_id: string;
  message_id: number;
  kind: ImplicitKind;
  dwell_seconds?: number;
  displayed_version?: string;
}

export interface Conflict {
  conflict_id: number;
  channel_id: string;
  message_id: number;
  positions: Record<string, Label>;
  status: string;
  text: string;
}

export interface RatingItem {
  message: Message;
  classification: Classification | null;
}

export interface DriftReport {
  window_from: number;
  window_to: number;
  message_count: number;
  jsd: number;
  oov_rate: number;
  tau_jsd: number;
  tau_oov: number;
  triggered: boolean;
  computed_at: number;
}

export interface EvalReport {
  snapshot_id: string;
  split: string;
  tp: number;
  fp: number;
  fn: number;
  tn: number;
  accuracy: number;
  precision: number;
  recall: number;
  f1: number;
  unparseable_count: number;
}

export interface GovernanceEntry {
  actor: string;
  action: string;
  rationale: string;
  at: number;
}

export interface VersionSummary {
  version_id: string;
  pathway: Pathway;
  status: string;
  created_at: number;
  created_from_snapshot: string;
  review_after: number | null;
  validation_f1: number | null;
  evals: EvalReport[];
  governance_log: GovernanceEntry[];
}

export interface RolloutPolicy {
  variant_a: string;
  variant_b: string;
  fraction_b: number;
  key_basis: "MESSAGE" | "USER";
  started_at: number;
  review_after: number;
}

export interface Metrics {
  messages: number;
  feedback: { total: number; by_kind: Record<string, number> };
  conflicts: { open: number; total: number };
  gold: {
    live: number;
    by_split: Record<string, number>;
    add_count: number;
    new_since_training: number;
    snapshots: string[];
  };
  drift: DriftReport[];
  versions: VersionSummary[];
  deployed: Record<string, string | null>;
  rollout: RolloutPolicy | null;
  review_queue: number;
  unparseable_live: Record<string, number>;
  pending_hotfix_evaluations: string[];
  log_seq: number;
}

export interface PublicConfig {
  implicit_tracking: boolean;
  review_threshold: number;
  serving_pathway: Pathway;
  weights: Record<string, number>;
}
