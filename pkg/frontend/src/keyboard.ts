/**
 * Keyboard labeling over the 5x5 grid, as a pure reducer so the flows and
 * the tests share one set of rules.
 *
 * Digits accumulate into a chip number: "7" focuses chip 7, and a
 * following digit extends the number while it still lands in 1..25, so
 * "2" then "5" walks the focus from chip 2 to chip 25. A digit that
 * cannot extend the buffer starts a fresh number ("2" "6" ends on chip
 * 6). Arrows move focus one cell and stop at the grid edge, Space toggles
 * the focused chip, Enter submits the batch, Escape drops a half-typed
 * number.
 */

import { BATCH_SIZE } from "./batch.js";

export const GRID_SIDE = 5;

export interface KeyState {
  /** 0-based index of the focused chip */
  focus: number;
  /** pending digits, "" when none */
  buffer: string;
}

export type KeyAction =
  | { kind: "focus"; index: number }
  | { kind: "toggle"; index: number }
  | { kind: "submit" }
  | { kind: "none" };

export function initialKeyState(): KeyState {
  return { focus: 0, buffer: "" };
}

export function handleKey(state: KeyState, key: string): [KeyState, KeyAction] {
  if (key.length === 1 && key >= "0" && key <= "9") {
    const extended = parseInt(state.buffer + key, 10);
    if (extended >= 1 && extended <= BATCH_SIZE) {
      const buffer = state.buffer + key;
      return [{ focus: extended - 1, buffer }, { kind: "focus", index: extended - 1 }];
    }
    const alone = parseInt(key, 10);
    if (alone >= 1) {
      return [{ focus: alone - 1, buffer: key }, { kind: "focus", index: alone - 1 }];
    }
    // a bare "0" names no chip
    return [{ focus: state.focus, buffer: "" }, { kind: "none" }];
  }

  const row = Math.floor(state.focus / GRID_SIDE);
  const col = state.focus % GRID_SIDE;
  switch (key) {
    case "ArrowLeft":
      return moved(col > 0 ? state.focus - 1 : state.focus);
    case "ArrowRight":
      return moved(col < GRID_SIDE - 1 ? state.focus + 1 : state.focus);
    case "ArrowUp":
      return moved(row > 0 ? state.focus - GRID_SIDE : state.focus);
    case "ArrowDown":
      return moved(row < GRID_SIDE - 1 ? state.focus + GRID_SIDE : state.focus);
    case " ":
      return [{ focus: state.focus, buffer: "" }, { kind: "toggle", index: state.focus }];
    case "Enter":
      return [{ focus: state.focus, buffer: "" }, { kind: "submit" }];
    default:
      return [{ focus: state.focus, buffer: "" }, { kind: "none" }];
  }
}

function moved(index: number): [KeyState, KeyAction] {
  return [{ focus: index, buffer: "" }, { kind: "focus", index }];
}
