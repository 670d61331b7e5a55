// Wire types for the listenloop JSON API. The server is the single source
// of truth; nothing here is authoritative client-side.

export interface OntologyClass {
  class_id: number;
  name: string;
  origin: string;
  active: boolean;
}

export interface OntologyPayload {
  classes: OntologyClass[];
  doubt_class_id: number;
}

export interface WorklistItem {
  audio_id: string;
  rank: number;
  filename: string;
  audio_url: string;
  duration: number | null;
  agreement: number;
}

export interface WorklistPayload {
  iteration_id: string;
  labeler_id: string;
  items: WorklistItem[];
}

export interface AnnotationChunk {
  class_id: number;
  onset: number;
  offset: number;
}

export interface AnnotationResponse {
  audio_id: string;
  stored: number;
  labeler_count: number;
  agreement: number;
}

export interface IterationSummary {
  iteration_id: string;
  seq: number;
  node_id: string;
  window_start: string;
  window_end: string;
  s_w: number;
  s_wm: number;
  s_wnh: number;
  labeled_pct: number;
  n_ds: number;
  processed_sets: number[];
  medoid_count: number;
  path: string;
  proposal_count: number;
  provenance_counts: Record<string, number>;
}

export interface IterationStatus {
  iteration_id: string;
  seq: number;
  node_id: string;
  window_start: string;
  window_end: string;
  audio_count: number;
  labeled_pct: number;
  n_ds: number;
  path: string;
  proposal_count: number;
  promoted_count: number;
}

export interface ConsensusResult {
  iteration_id: string;
  outcomes: number;
  promoted: number;
  consensus_yield: number;
}

export type ProjectionRole = "medoid" | "proposed" | "discarded";

export interface ProjectionPoint {
  audio_id: string;
  x: number;
  y: number;
  role: ProjectionRole;
  top1_class: number;
}

export interface ProjectionPayload {
  iteration_id: string;
  points: ProjectionPoint[];
}

export interface HistogramEntry {
  class_id: number;
  name: string;
  count: number;
}

export interface HistogramPayload {
  entries: HistogramEntry[];
}

export interface DoubtItem {
  chunk_id: number;
  audio_id: string;
  onset: number;
  offset: number;
  audio_url: string;
}

export interface DoubtPayload {
  labeler_id: string;
  items: DoubtItem[];
}

export interface DoubtResolution {
  chunk_id: number;
  audio_id: string;
  class_id: number;
  agreement: number | null;
  label: number | null;
}

export interface SuggestionResult {
  suggestion_id: number;
  name: string;
  status: string;
  class_id: number | null;
  available_from_seq: number | null;
}
