// Pure view-model for the control panel: every flag is derived from the
// session summary plus view state, so enable/disable rules are testable.

import type { SessionSummary } from './types';
import type { ViewState } from './state';

export interface ControlsModel {
  backends: { name: string; active: boolean }[];
  addMaskDisabled: boolean;
  uncertaintyDisabled: boolean;
  deleteDisabled: boolean;
  exports: { maskId: string; label: string; href: string; filename: string }[];
}

export function controlsModel(
  summary: SessionSummary,
  state: ViewState,
  backendNames: string[],
): ControlsModel {
  const busy = state.mutationInFlight;
  return {
    backends: backendNames.map((name) => ({
      name,
      active: name === summary.backend.name,
    })),
    addMaskDisabled: busy || !summary.has_working_mask,
    uncertaintyDisabled: busy || !summary.has_working_mask,
    deleteDisabled: busy,
    exports: summary.masks.map((m) => ({
      maskId: m.id,
      label: m.label,
      href: `/sessions/${summary.id}/export/${m.id}`,
      filename: `${m.label}.nii.gz`,
    })),
  };
}
