/**
 * DOM wiring for the two flows.
 *
 * The served batch is the single source of truth: nothing is persisted
 * client-side, a rejected submission keeps the local toggles on screen,
 * and a stale submission (409) throws the batch away and re-fetches.
 */

import { ApiError, LabelServiceClient } from "./api.js";
import { BATCH_SIZE, BatchToggles } from "./batch.js";
import { ConflictDecisions } from "./conflict.js";
import { handleKey, initialKeyState, type KeyState } from "./keyboard.js";
import type { BatchPayload, ConflictBatch, Label } from "./types.js";

export class AnnotatorFlow {
  private readonly root: HTMLElement;
  private readonly client: LabelServiceClient;
  private toggles: BatchToggles | null = null;
  private keys: KeyState = initialKeyState();
  private alreadySubmitted = false;
  private busy = false;
  private tiles: HTMLElement[] = [];
  private statusEl: HTMLElement | null = null;
  private countEl: HTMLElement | null = null;
  private progressEl: HTMLElement | null = null;
  private submitBtn: HTMLButtonElement | null = null;

  constructor(root: HTMLElement, client: LabelServiceClient) {
    this.root = root;
    this.client = client;
    document.addEventListener("keydown", this.onKeydown);
  }

  dispose(): void {
    document.removeEventListener("keydown", this.onKeydown);
  }

  async start(): Promise<void> {
    let doc;
    try {
      doc = await this.client.nextBatch();
    } catch (err) {
      this.renderFatal(describeError(err));
      return;
    }
    if (doc.batch === null) {
      this.toggles = null;
      this.renderDone();
      await this.refreshProgress();
      return;
    }
    this.toggles = new BatchToggles(doc.batch);
    this.alreadySubmitted = doc.batch.already_submitted;
    this.keys = initialKeyState();
    this.renderBatch(doc.batch, doc.instructions);
    await this.refreshProgress();
  }

  // -- rendering ---------------------------------------------------------

  private renderBatch(batch: BatchPayload, instructions: string): void {
    this.root.replaceChildren();
    this.root.appendChild(this.header(`batch ${batch.batch_id}`));
    this.root.appendChild(el("p", "instructions", instructions));
    this.statusEl = el("div", "status");
    this.statusEl.setAttribute("aria-live", "polite");
    this.root.appendChild(this.statusEl);

    const grid = el("div", "grid");
    this.tiles = batch.chips.map((chip, i) => {
      const tile = el("div", "chip");
      tile.dataset.index = String(i);
      tile.dataset.chip = chip.chip_id;
      tile.setAttribute("role", "button");
      tile.setAttribute("aria-pressed", "false");
      const img = el("img");
      img.src = chip.image_url;
      img.alt = chip.chip_id;
      img.draggable = false;
      tile.appendChild(img);
      tile.appendChild(el("span", "badge", String(i + 1)));
      tile.addEventListener("click", () => {
        this.applyFocus(i);
        this.keys = { focus: i, buffer: "" };
        this.toggleChip(i);
      });
      grid.appendChild(tile);
      return tile;
    });
    this.root.appendChild(grid);

    const footer = el("div", "footer");
    this.countEl = el("span", "count", `0 kiln / ${BATCH_SIZE}`);
    footer.appendChild(this.countEl);
    this.submitBtn = el("button", "submit", "Submit batch");
    this.submitBtn.addEventListener("click", () => void this.submit());
    footer.appendChild(this.submitBtn);
    footer.appendChild(
      el("span", "hint", "digits focus a chip, space toggles, enter submits"),
    );
    this.root.appendChild(footer);

    this.applyFocus(0);
    if (this.alreadySubmitted) {
      this.submitBtn.disabled = true;
      this.setStatus("already submitted; waiting on the second annotator");
    }
  }

  private renderDone(): void {
    this.root.replaceChildren();
    this.root.appendChild(this.header("done"));
    this.statusEl = el("div", "status");
    this.root.appendChild(this.statusEl);
    this.root.appendChild(
      el("p", "done", "All batches are labeled. Nothing left to assign."),
    );
    this.tiles = [];
    this.submitBtn = null;
  }

  private renderFatal(message: string): void {
    this.root.replaceChildren();
    this.root.appendChild(this.header("error"));
    const status = el("div", "status error", message);
    this.root.appendChild(status);
    this.statusEl = status;
    const retry = el("button", "retry", "Retry");
    retry.addEventListener("click", () => void this.start());
    this.root.appendChild(retry);
    this.toggles = null;
    this.tiles = [];
  }

  private header(note: string): HTMLElement {
    const head = el("header");
    head.appendChild(el("h1", undefined, "kiln-watch labeling"));
    head.appendChild(el("span", "note", note));
    this.progressEl = el("span", "progress");
    head.appendChild(this.progressEl);
    return head;
  }

  private async refreshProgress(): Promise<void> {
    if (this.progressEl === null) return;
    try {
      const stats = await this.client.stats();
      const done = (stats.batches["agreed"] ?? 0) + (stats.batches["resolved"] ?? 0);
      this.progressEl.textContent =
        `${done} of ${stats.total_batches} batches finalized, ` +
        `${stats.chips_finalized} chips labeled`;
    } catch {
      // progress is decoration; the flow works without it
    }
  }

  // -- interaction -------------------------------------------------------

  private readonly onKeydown = (event: KeyboardEvent): void => {
    if (this.toggles === null) return;
    if (isFormTarget(event.target)) return;
    const [next, action] = handleKey(this.keys, event.key);
    this.keys = next;
    if (action.kind === "none") return;
    event.preventDefault();
    if (action.kind === "focus") {
      this.applyFocus(action.index);
    } else if (action.kind === "toggle") {
      this.applyFocus(action.index);
      this.toggleChip(action.index);
    } else {
      void this.submit();
    }
  };

  private applyFocus(index: number): void {
    for (const tile of this.tiles) tile.classList.remove("focused");
    const tile = this.tiles[index];
    if (tile === undefined) return;
    tile.classList.add("focused");
    if (typeof tile.scrollIntoView === "function") {
      tile.scrollIntoView({ block: "nearest" });
    }
  }

  private toggleChip(index: number): void {
    if (this.toggles === null) return;
    const chip = this.toggles.chips[index];
    if (chip === undefined) return;
    const label = this.toggles.toggle(chip.chip_id);
    const tile = this.tiles[index];
    tile.classList.toggle("kiln", label === "kiln");
    tile.setAttribute("aria-pressed", label === "kiln" ? "true" : "false");
    if (this.countEl !== null) {
      this.countEl.textContent =
        `${this.toggles.kilnCount()} kiln / ${BATCH_SIZE}`;
    }
  }

  private async submit(): Promise<void> {
    if (this.toggles === null || this.busy) return;
    if (this.alreadySubmitted) {
      this.setStatus("already submitted; waiting on the second annotator");
      return;
    }
    this.busy = true;
    try {
      const ack = await this.client.submitLabels(
        this.toggles.batchId,
        this.toggles.labels(),
      );
      await this.start();
      this.setStatus(`batch ${ack.batch_id} submitted (${ack.status})`);
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        // someone else finished this batch first; drop it and re-fetch
        await this.start();
        this.setStatus(`submission rejected: ${err.detail}`, true);
      } else {
        this.setStatus(describeError(err), true);
      }
    } finally {
      this.busy = false;
    }
  }

  private setStatus(message: string, isError = false): void {
    if (this.statusEl === null) return;
    this.statusEl.textContent = message;
    this.statusEl.classList.toggle("error", isError);
  }
}

export class ModeratorFlow {
  private readonly root: HTMLElement;
  private readonly client: LabelServiceClient;
  private decisions: ConflictDecisions | null = null;
  private busy = false;
  private statusEl: HTMLElement | null = null;
  private submitBtn: HTMLButtonElement | null = null;
  private remainingEl: HTMLElement | null = null;

  constructor(root: HTMLElement, client: LabelServiceClient) {
    this.root = root;
    this.client = client;
  }

  async start(): Promise<void> {
    let doc;
    try {
      doc = await this.client.conflicts();
    } catch (err) {
      this.renderFatal(describeError(err));
      return;
    }
    if (doc.conflicts.length === 0) {
      this.decisions = null;
      this.renderEmpty();
      return;
    }
    this.decisions = new ConflictDecisions(doc.conflicts[0]);
    this.renderConflict(doc.conflicts[0], doc.conflicts.length);
  }

  private renderConflict(conflict: ConflictBatch, open: number): void {
    this.root.replaceChildren();
    const head = el("header");
    head.appendChild(el("h1", undefined, "kiln-watch conflict review"));
    head.appendChild(
      el("span", "note", `batch ${conflict.batch_id} (${open} open)`),
    );
    this.root.appendChild(head);
    this.statusEl = el("div", "status");
    this.statusEl.setAttribute("aria-live", "polite");
    this.root.appendChild(this.statusEl);

    const list = el("div", "conflicts");
    for (const chip of conflict.chips) {
      const row = el("div", "conflict-chip");
      row.dataset.chip = chip.chip_id;
      const img = el("img");
      img.src = chip.image_url;
      img.alt = chip.chip_id;
      row.appendChild(img);

      const who = el("div", "who");
      for (const [annotator, label] of Object.entries(chip.labels)) {
        who.appendChild(el("div", "vote", `${annotator}: ${label}`));
      }
      row.appendChild(who);

      const decide = el("div", "decide");
      for (const label of ["kiln", "no_kiln"] as Label[]) {
        const btn = el("button", "decision", label);
        btn.dataset.label = label;
        btn.setAttribute("aria-pressed", "false");
        btn.addEventListener("click", () => this.decide(row, chip.chip_id, label));
        decide.appendChild(btn);
      }
      row.appendChild(decide);
      list.appendChild(row);
    }
    this.root.appendChild(list);

    const footer = el("div", "footer");
    this.remainingEl = el(
      "span",
      "count",
      `0 of ${conflict.chips.length} decided`,
    );
    footer.appendChild(this.remainingEl);
    this.submitBtn = el("button", "submit", "Submit decisions");
    this.submitBtn.disabled = true;
    this.submitBtn.addEventListener("click", () => void this.submit());
    footer.appendChild(this.submitBtn);
    this.root.appendChild(footer);
  }

  private renderEmpty(): void {
    this.root.replaceChildren();
    const head = el("header");
    head.appendChild(el("h1", undefined, "kiln-watch conflict review"));
    this.root.appendChild(head);
    this.statusEl = el("div", "status");
    this.root.appendChild(this.statusEl);
    this.root.appendChild(
      el("p", "done", "No open conflicts. Check back after more submissions."),
    );
    this.submitBtn = null;
  }

  private renderFatal(message: string): void {
    this.root.replaceChildren();
    const head = el("header");
    head.appendChild(el("h1", undefined, "kiln-watch conflict review"));
    this.root.appendChild(head);
    const status = el("div", "status error", message);
    this.root.appendChild(status);
    this.statusEl = status;
    const retry = el("button", "retry", "Retry");
    retry.addEventListener("click", () => void this.start());
    this.root.appendChild(retry);
    this.decisions = null;
  }

  private decide(row: HTMLElement, chipId: string, label: Label): void {
    if (this.decisions === null) return;
    this.decisions.decide(chipId, label);
    for (const btn of row.querySelectorAll<HTMLButtonElement>("button.decision")) {
      const chosen = btn.dataset.label === label;
      btn.classList.toggle("chosen", chosen);
      btn.setAttribute("aria-pressed", chosen ? "true" : "false");
    }
    const total = this.decisions.chips.length;
    const decided = total - this.decisions.remaining();
    if (this.remainingEl !== null) {
      this.remainingEl.textContent = `${decided} of ${total} decided`;
    }
    if (this.submitBtn !== null) {
      this.submitBtn.disabled = !this.decisions.complete();
    }
  }

  private async submit(): Promise<void> {
    if (this.decisions === null || this.busy) return;
    if (!this.decisions.complete()) {
      this.setStatus(
        `${this.decisions.remaining()} chip(s) still undecided`, true);
      return;
    }
    this.busy = true;
    try {
      const ack = await this.client.resolveConflict(
        this.decisions.batchId,
        this.decisions.payload(),
      );
      await this.start();
      this.setStatus(`batch ${ack.batch_id} resolved (${ack.status})`);
    } catch (err) {
      if (err instanceof ApiError && (err.status === 404 || err.status === 409)) {
        // resolved elsewhere in the meantime; refresh the queue
        await this.start();
        this.setStatus(`resolution rejected: ${err.detail}`, true);
      } else {
        this.setStatus(describeError(err), true);
      }
    } finally {
      this.busy = false;
    }
  }

  private setStatus(message: string, isError = false): void {
    if (this.statusEl === null) return;
    this.statusEl.textContent = message;
    this.statusEl.classList.toggle("error", isError);
  }
}

export function initApp(
  root: HTMLElement,
  client: LabelServiceClient,
  role?: string | null,
): AnnotatorFlow | ModeratorFlow | null {
  if (role === "annotator") {
    const flow = new AnnotatorFlow(root, client);
    void flow.start();
    return flow;
  }
  if (role === "moderator") {
    const flow = new ModeratorFlow(root, client);
    void flow.start();
    return flow;
  }
  renderLanding(root, client);
  return null;
}

function renderLanding(root: HTMLElement, client: LabelServiceClient): void {
  root.replaceChildren();
  const head = el("header");
  head.appendChild(el("h1", undefined, "kiln-watch labeling"));
  root.appendChild(head);
  root.appendChild(el("p", undefined, "Pick your role to start."));
  const annotate = el("button", "role", "Label batches");
  annotate.addEventListener("click", () => {
    void new AnnotatorFlow(root, client).start();
  });
  const moderate = el("button", "role", "Resolve conflicts");
  moderate.addEventListener("click", () => {
    void new ModeratorFlow(root, client).start();
  });
  root.appendChild(annotate);
  root.appendChild(moderate);
}

function isFormTarget(target: EventTarget | null): boolean {
  return (
    target instanceof HTMLInputElement ||
    target instanceof HTMLTextAreaElement ||
    target instanceof HTMLSelectElement ||
    target instanceof HTMLButtonElement ||
    (target instanceof HTMLElement && target.isContentEditable)
  );
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) {
    return `service error ${err.status}: ${err.detail}`;
  }
  if (err instanceof Error) return err.message;
  return String(err);
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className !== undefined) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}
