/** Wire types mirroring the label-service JSON schemas. */

export type Label = "kiln" | "no_kiln";

export interface ChipTile {
  chip_id: string;
  row: number;
  col: number;
  image_url: string;
}

export interface BatchPayload {
  batch_id: string;
  chips: ChipTile[];
  already_submitted: boolean;
}

export interface NextBatchResponse {
  batch: BatchPayload | null;
  instructions: string;
}

export interface ConflictChip {
  chip_id: string;
  /** annotator id -> the label that annotator submitted */
  labels: Record<string, string>;
  image_url: string;
}

export interface ConflictBatch {
  batch_id: string;
  chips: ConflictChip[];
}

export interface ConflictsResponse {
  conflicts: ConflictBatch[];
}

export interface SubmitAck {
  batch_id: string;
  status: string;
}

export interface Stats {
  batches: Record<string, number>;
  total_batches: number;
  submitted_by: Record<string, number>;
  chips_finalized: number;
  open_conflicts: number;
}
