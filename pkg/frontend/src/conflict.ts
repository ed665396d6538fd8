/**
 * Moderator decision state for one conflicted batch. The resolution
 * payload requires a decision for every disputed chip and never mentions
 * a chip outside the served conflict set.
 */

import type { ConflictBatch, ConflictChip, Label } from "./types.js";

export class ConflictDecisions {
  readonly batchId: string;
  readonly chips: readonly ConflictChip[];
  private readonly state: Map<string, Label | null>;

  constructor(conflict: ConflictBatch) {
    if (conflict.chips.length === 0) {
      throw new Error(`conflict ${conflict.batch_id} lists no chips`);
    }
    this.batchId = conflict.batch_id;
    this.chips = conflict.chips;
    this.state = new Map(conflict.chips.map((chip) => [chip.chip_id, null]));
  }

  decide(chipId: string, label: Label): void {
    if (!this.state.has(chipId)) {
      throw new Error(`chip ${chipId} is not in conflict ${this.batchId}`);
    }
    this.state.set(chipId, label);
  }

  decision(chipId: string): Label | null {
    const current = this.state.get(chipId);
    if (current === undefined) {
      throw new Error(`chip ${chipId} is not in conflict ${this.batchId}`);
    }
    return current;
  }

  remaining(): number {
    let undecided = 0;
    for (const label of this.state.values()) {
      if (label === null) undecided += 1;
    }
    return undecided;
  }

  complete(): boolean {
    return this.remaining() === 0;
  }

  /** POST body for /api/conflicts/{id}/resolution; keys are exactly the
   * disputed chip ids. Throws while any chip is still undecided. */
  payload(): Record<string, Label> {
    const undecided = this.remaining();
    if (undecided > 0) {
      throw new Error(`${undecided} chip(s) still undecided`);
    }
    const decisions: Record<string, Label> = {};
    for (const chip of this.chips) {
      decisions[chip.chip_id] = this.state.get(chip.chip_id) as Label;
    }
    return decisions;
  }
}
