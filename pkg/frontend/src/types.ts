// Client-side mirrors of the REST payloads. The client never mutates server
// state except through the documented endpoints.

export const RESEARCH_PHASES = [
  "idea_generation",
  "experiment_design",
  "code_generation",
  "execution",
  "visualization",
  "interpretation",
] as const;

export type ResearchPhase = (typeof RESEARCH_PHASES)[number];

export type AutonomyLevel = 0 | 1 | 2 | 3;

export const AUTONOMY_LABELS: Record<AutonomyLevel, string> = {
  0: "manual",
  1: "propose",
  2: "auto + review",
  3: "auto",
};

export type Policy = Record<string, number>;

export type ActionState =
  | "pending"
  | "approved"
  | "rejected"
  | "executed"
  | "flagged_for_review"
  | "failed";

export interface ActionView {
  action_id: string;
  kind: string;
  payload: Record<string, unknown>;
  phase: ResearchPhase;
  state: ActionState;
  note: string | null;
  result_ref: Record<string, string> | null;
  error: string | null;
}

export interface MessageView {
  role: "human" | "assistant" | "system";
  content: string;
  phase: ResearchPhase;
}

export interface SessionState {
  session_id: string;
  policy: Policy;
  messages: MessageView[];
  actions: Record<string, ActionView>;
  artifact_ids: string[];
}

export interface SendResult {
  reply: string;
  pending_actions: ActionView[];
}

export interface EpochRecord {
  epoch: number;
  train_loss: number;
  train_acc: number;
  val_loss: number;
  val_acc: number;
}

export interface RunView {
  run_id: string;
  status: "queued" | "running" | "finished" | "failed" | "stopped";
  subject_id: string | null;
  metrics: EpochRecord[];
  best_epoch: number | null;
  best_val_acc: number | null;
  eval_accuracy: number | null;
  error: string | null;
}

export interface DatasetView {
  id: string;
  subject_id?: string;
  session?: string;
  sampling_rate_hz?: number;
  n_channels?: number;
  n_samples?: number;
  validation?: { pass: boolean; [key: string]: unknown };
  error?: string;
}

export interface FigureMeta {
  figure_id: string;
  kind: string;
}
