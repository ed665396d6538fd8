/**
 * Local toggle state for one served batch.
 *
 * Every chip starts at no_kiln (positives are rare, so most batches submit
 * with few or zero clicks) and each toggle flips kiln <-> no_kiln. The
 * submit payload is always exactly the 25 served chips in served order;
 * there is no way to label a chip the service did not send.
 */

import type { BatchPayload, ChipTile, Label } from "./types.js";

export const BATCH_SIZE = 25;

export class BatchToggles {
  readonly batchId: string;
  readonly chips: readonly ChipTile[];
  private readonly state: Map<string, Label>;

  constructor(batch: BatchPayload) {
    if (batch.chips.length !== BATCH_SIZE) {
      throw new Error(
        `batch ${batch.batch_id} has ${batch.chips.length} chips, ` +
          `expected ${BATCH_SIZE}`,
      );
    }
    this.batchId = batch.batch_id;
    this.chips = batch.chips;
    this.state = new Map(batch.chips.map((chip) => [chip.chip_id, "no_kiln"]));
  }

  label(chipId: string): Label {
    const current = this.state.get(chipId);
    if (current === undefined) {
      throw new Error(`chip ${chipId} is not in batch ${this.batchId}`);
    }
    return current;
  }

  toggle(chipId: string): Label {
    const next: Label = this.label(chipId) === "kiln" ? "no_kiln" : "kiln";
    this.state.set(chipId, next);
    return next;
  }

  kilnCount(): number {
    let count = 0;
    for (const label of this.state.values()) {
      if (label === "kiln") count += 1;
    }
    return count;
  }

  /** POST body for /api/batches/{id}/labels: 25 labels in served order. */
  labels(): Label[] {
    return this.chips.map((chip) => this.label(chip.chip_id));
  }
}
