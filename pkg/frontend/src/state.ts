// View state and its pure transitions.

import type { Axis, PromptKind, SessionSummary, Vec3 } from './types';

export interface ViewState {
  sessionId: string;
  dims: Vec3;
  cursors: Vec3; // slice index per axis
  windowCenter: number;
  windowWidth: number;
  showWorking: boolean;
  showCommitted: boolean;
  showUncertainty: boolean;
  promptKind: PromptKind;
  lastRevision: number;
  mutationInFlight: boolean;
}

export function initialViewState(summary: SessionSummary): ViewState {
  const [lo, hi] = summary.intensity_range;
  return {
    sessionId: summary.id,
    dims: summary.dims,
    cursors: [
      Math.floor(summary.dims[0] / 2),
      Math.floor(summary.dims[1] / 2),
      Math.floor(summary.dims[2] / 2),
    ],
    windowCenter: (lo + hi) / 2,
    windowWidth: Math.max(hi - lo, 1e-9),
    showWorking: true,
    showCommitted: true,
    showUncertainty: false,
    promptKind: 'include',
    lastRevision: summary.revision,
    mutationInFlight: false,
  };
}

export function withCursor(state: ViewState, axis: Axis, value: number): ViewState {
  const clamped = Math.min(Math.max(Math.round(value), 0), state.dims[axis] - 1);
  const cursors: Vec3 = [...state.cursors];
  cursors[axis] = clamped;
  return { ...state, cursors };
}

export function canMutate(state: ViewState): boolean {
  return !state.mutationInFlight;
}

export function observeRevision(state: ViewState, revision: number): ViewState {
  // the displayed revision never exceeds the server's
  return revision > state.lastRevision ? { ...state, lastRevision: revision } : state;
}
