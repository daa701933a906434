// Typed client for the segmentation service.

import type {
  Axis,
  BackendInfo,
  MutationSummary,
  OverlayResponse,
  PromptKind,
  PromptListing,
  SessionSummary,
  SliceResponse,
  Vec3,
} from './types';

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    detail: string,
  ) {
    super(`${code}: ${detail}`);
  }
}

async function parse<T>(resp: Response): Promise<T> {
  if (!resp.ok) {
    let code = `HTTP${resp.status}`;
    let detail = resp.statusText;
    try {
      const body = await resp.json();
      code = body.error ?? code;
      detail = body.detail ?? detail;
    } catch {
      // non-JSON error body: keep the status text
    }
    throw new ApiError(resp.status, code, detail);
  }
  return (await resp.json()) as T;
}

export class Client {
  constructor(private baseUrl: string = '') {}

  private url(path: string): string {
    return `${this.baseUrl}${path}`;
  }

  async listBackends(): Promise<BackendInfo[]> {
    return parse(await fetch(this.url('/backends')));
  }

  async createSession(volume: ArrayBuffer | Uint8Array, backend: string): Promise<SessionSummary> {
    const body = volume instanceof Uint8Array
      ? volume.slice().buffer as ArrayBuffer
      : volume;
    const resp = await fetch(this.url(`/sessions?backend=${encodeURIComponent(backend)}`), {
      method: 'POST',
      headers: { 'Content-Type': 'application/octet-stream' },
      body,
    });
    return parse(resp);
  }

  async summary(sessionId: string): Promise<SessionSummary> {
    return parse(await fetch(this.url(`/sessions/${sessionId}`)));
  }

  async prompts(sessionId: string): Promise<PromptListing> {
    return parse(await fetch(this.url(`/sessions/${sessionId}/prompts`)));
  }

  async slice(
    sessionId: string,
    axis: Axis,
    index: number,
    wc?: number,
    ww?: number,
  ): Promise<SliceResponse> {
    const params = new URLSearchParams({ axis: String(axis), index: String(index) });
    if (wc !== undefined) params.set('wc', String(wc));
    if (ww !== undefined) params.set('ww', String(ww));
    return parse(await fetch(this.url(`/sessions/${sessionId}/slice?${params}`)));
  }

  async overlay(
    sessionId: string,
    axis: Axis,
    index: number,
    uncertainty: boolean,
  ): Promise<OverlayResponse> {
    const params = new URLSearchParams({
      axis: String(axis),
      index: String(index),
      uncertainty: uncertainty ? '1' : '0',
    });
    return parse(await fetch(this.url(`/sessions/${sessionId}/overlay?${params}`)));
  }

  async addPrompt(sessionId: string, point: Vec3, kind: PromptKind): Promise<MutationSummary> {
    const resp = await fetch(this.url(`/sessions/${sessionId}/prompts`), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ point, kind }),
    });
    return parse(resp);
  }

  async removePrompt(sessionId: string, kind: PromptKind, index: number): Promise<MutationSummary> {
    const resp = await fetch(this.url(`/sessions/${sessionId}/prompts/${kind}/${index}`), {
      method: 'DELETE',
    });
    return parse(resp);
  }

  async commitMask(sessionId: string, label: string, threshold?: number): Promise<{ mask_id: string; revision: number }> {
    const resp = await fetch(this.url(`/sessions/${sessionId}/masks`), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ label, threshold: threshold ?? null }),
    });
    return parse(resp);
  }

  async switchBackend(sessionId: string, name: string): Promise<{ revision: number; backend: string }> {
    const resp = await fetch(this.url(`/sessions/${sessionId}/backend`), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ name }),
    });
    return parse(resp);
  }

  async runUncertainty(sessionId: string, runs: number, seed = 0): Promise<{ revision: number }> {
    const resp = await fetch(this.url(`/sessions/${sessionId}/uncertainty`), {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ runs, seed }),
    });
    return parse(resp);
  }

  exportUrl(sessionId: string, maskId: string): string {
    return this.url(`/sessions/${sessionId}/export/${maskId}`);
  }
}
