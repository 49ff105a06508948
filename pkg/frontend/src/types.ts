/**
 * Wire types for the pair-ranking study service.
 *
 * These mirror the served payloads exactly. There is deliberately no field
 * here for iteration indices, Q vectors, judge reasoning, or the true pair
 * orientation: the client cannot display what it never receives.
 */

export type Choice = "First" | "Second";

export interface HistoryTurn {
  role: "coach" | "client";
  text: string;
}

export interface RatingTaskPayload {
  task_id: string;
  group_label: string;
  persona: Record<string, unknown>;
  history: HistoryTurn[];
  candidate_first: string;
  candidate_second: string;
}

export interface Progress {
  answered: number;
  total: number;
}

export interface NextResponse {
  done: boolean;
  task?: RatingTaskPayload;
  progress: Progress;
}

export interface RankResponse {
  ok: boolean;
  progress: Progress;
}

export interface GroupStats {
  label: string;
  agreed: number;
  total: number;
  pct: number;
  top_half_agreed: number;
  top_half_total: number;
  top_half_pct: number;
}

export interface StatsResponse {
  groups: GroupStats[];
  agreed: number;
  total: number;
  overall_pct: number;
  top_half_agreed: number;
  top_half_total: number;
  top_half_pct: number;
  complete: boolean;
}
