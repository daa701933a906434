// DOM shell: three orthogonal slice views with click-to-prompt, overlay
// toggles, backend selection, mask management and uncertainty runs. All
// geometry/compositing rules live in the pure modules; this file only moves
// data between the client and the canvases.

import { Client, ApiError } from './api';
import { voxelToRas } from './affine';
import { controlsModel } from './controls';
import { compositeSlice } from './overlay';
import { decodeBase64, pixelToVoxel, sliceGeometry, unpackBits } from './slices';
import { canMutate, initialViewState, observeRevision, withCursor, ViewState } from './state';
import type { Axis, SessionSummary } from './types';

const POLL_INTERVAL_MS = 250;
const AXES: Axis[] = [0, 1, 2];

export class App {
  private client: Client;
  private state: ViewState | null = null;
  private summary: SessionSummary | null = null;
  private backendNames: string[] = [];
  private pollTimer: number | null = null;
  private root: HTMLElement;

  constructor(root: HTMLElement, client?: Client) {
    this.root = root;
    this.client = client ?? new Client('');
    this.renderShell();
  }

  private el<T extends HTMLElement>(selector: string): T {
    const node = this.root.querySelector(selector);
    if (!node) throw new Error(`missing element ${selector}`);
    return node as T;
  }

  private renderShell(): void {
    this.root.innerHTML = `
      <header>
        <h1>voxelprompt</h1>
        <label class="upload">Load volume (.nii/.nii.gz)
          <input type="file" id="volume-input" accept=".nii,.gz">
        </label>
        <fieldset id="backend-picker"><legend>Model</legend></fieldset>
      </header>
      <main>
        <section id="views">
          ${AXES.map(
            (a) => `
            <figure class="view" data-axis="${a}">
              <canvas width="10" height="10"></canvas>
              <figcaption>
                axis ${a}
                <input type="range" class="cursor" min="0" value="0">
                <span class="idx"></span>
              </figcaption>
            </figure>`,
          ).join('')}
        </section>
        <aside id="panel">
          <fieldset>
            <legend>Prompting</legend>
            <label><input type="radio" name="kind" value="include" checked> include</label>
            <label><input type="radio" name="kind" value="exclude"> exclude</label>
            <ul id="prompt-list"></ul>
          </fieldset>
          <fieldset>
            <legend>Overlays</legend>
            <label><input type="checkbox" id="toggle-working" checked> working mask</label>
            <label><input type="checkbox" id="toggle-committed" checked> committed masks</label>
            <label><input type="checkbox" id="toggle-uncertainty"> uncertainty</label>
          </fieldset>
          <fieldset>
            <legend>Masks</legend>
            <input id="mask-label" placeholder="label" value="mask">
            <button id="add-mask" disabled>add mask</button>
            <ul id="mask-list"></ul>
          </fieldset>
          <fieldset>
            <legend>Uncertainty</legend>
            <label>N <input id="ensemble-runs" type="number" min="2" value="5"></label>
            <button id="run-uncertainty" disabled>estimate</button>
          </fieldset>
          <p id="notice"></p>
        </aside>
      </main>`;

    this.el<HTMLInputElement>('#volume-input').addEventListener('change', (ev) => {
      const input = ev.target as HTMLInputElement;
      if (input.files && input.files[0]) void this.uploadVolume(input.files[0]);
    });
    this.el<HTMLButtonElement>('#add-mask').addEventListener('click', () => void this.addMask());
    this.el<HTMLButtonElement>('#run-uncertainty').addEventListener('click', () => void this.runUncertainty());
    for (const radio of this.root.querySelectorAll<HTMLInputElement>('input[name="kind"]')) {
      radio.addEventListener('change', () => {
        if (this.state) this.state.promptKind = radio.value as 'include' | 'exclude';
      });
    }
    for (const toggle of ['working', 'committed', 'uncertainty']) {
      this.el<HTMLInputElement>(`#toggle-${toggle}`).addEventListener('change', () => void this.redraw());
    }
    for (const figure of this.root.querySelectorAll<HTMLElement>('.view')) {
      const axis = Number(figure.dataset.axis) as Axis;
      figure.querySelector('canvas')!.addEventListener('click', (ev) => {
        void this.clickToPrompt(axis, ev as MouseEvent);
      });
      figure.querySelector<HTMLInputElement>('.cursor')!.addEventListener('input', (ev) => {
        if (!this.state) return;
        this.state = withCursor(this.state, axis, Number((ev.target as HTMLInputElement).value));
        void this.redraw();
      });
    }
  }

  private notice(text: string): void {
    this.el<HTMLElement>('#notice').textContent = text;
  }

  async uploadVolume(file: File): Promise<void> {
    try {
      const backends = await this.client.listBackends();
      this.backendNames = backends.map((b) => b.name);
      const raw = await file.arrayBuffer();
      this.summary = await this.client.createSession(raw, this.backendNames[0]);
      this.state = initialViewState(this.summary);
      this.renderBackendPicker();
      this.startPolling();
      await this.refresh(true);
      this.notice(`session ${this.summary.id.slice(0, 8)} open`);
    } catch (err) {
      this.notice(err instanceof Error ? err.message : String(err));
    }
  }

  private renderBackendPicker(): void {
    const picker = this.el<HTMLElement>('#backend-picker');
    picker.innerHTML = '<legend>Model</legend>';
    for (const name of this.backendNames) {
      const label = document.createElement('label');
      const radio = document.createElement('input');
      radio.type = 'radio';
      radio.name = 'backend';
      radio.value = name;
      radio.checked = this.summary?.backend.name === name;
      radio.addEventListener('change', () => void this.switchBackend(name));
      label.append(radio, ` ${name}`);
      picker.append(label);
    }
  }

  private startPolling(): void {
    if (this.pollTimer !== null) window.clearInterval(this.pollTimer);
    this.pollTimer = window.setInterval(() => void this.poll(), POLL_INTERVAL_MS);
  }

  private async poll(): Promise<void> {
    if (!this.state || !this.summary) return;
    try {
      const summary = await this.client.summary(this.state.sessionId);
      if (summary.revision > this.state.lastRevision) {
        this.summary = summary;
        this.state = observeRevision(this.state, summary.revision);
        await this.refresh(false);
      }
    } catch {
      // transient poll failures are retried on the next tick
    }
  }

  private async clickToPrompt(axis: Axis, ev: MouseEvent): Promise<void> {
    if (!this.state || !this.summary || !canMutate(this.state)) return;
    const canvas = ev.currentTarget as HTMLCanvasElement;
    const rect = canvas.getBoundingClientRect();
    const x = Math.floor(((ev.clientX - rect.left) / rect.width) * canvas.width);
    const y = Math.floor(((ev.clientY - rect.top) / rect.height) * canvas.height);
    const voxel = pixelToVoxel(this.state.dims, axis, this.state.cursors[axis], x, y);
    if (voxel === null) return; // outside the image rectangle
    const ras = voxelToRas(this.summary.affine, voxel);
    this.state.mutationInFlight = true;
    this.syncControls();
    try {
      const result = await this.client.addPrompt(this.state.sessionId, ras, this.state.promptKind);
      this.state = observeRevision(this.state, result.revision);
      this.summary = await this.client.summary(this.state.sessionId);
      await this.refresh(false);
    } catch (err) {
      this.reportMutationError(err);
    } finally {
      if (this.state) this.state.mutationInFlight = false;
      this.syncControls();
    }
  }

  private reportMutationError(err: unknown): void {
    if (err instanceof ApiError && err.status === 409) {
      this.notice('session changed elsewhere; refreshed, please retry');
      void this.refresh(false);
    } else {
      this.notice(err instanceof Error ? err.message : String(err));
    }
  }

  private async switchBackend(name: string): Promise<void> {
    if (!this.state || !canMutate(this.state)) return;
    if (this.summary && this.summary.include_count + this.summary.exclude_count > 0) {
      if (!window.confirm('Switching models clears the prompt list. Continue?')) {
        this.renderBackendPicker();
        return;
      }
    }
    this.state.mutationInFlight = true;
    try {
      const result = await this.client.switchBackend(this.state.sessionId, name);
      this.state = observeRevision(this.state, result.revision);
      this.summary = await this.client.summary(this.state.sessionId);
      await this.refresh(false);
    } catch (err) {
      this.reportMutationError(err);
    } finally {
      this.state.mutationInFlight = false;
      this.syncControls();
    }
  }

  private async addMask(): Promise<void> {
    if (!this.state || !canMutate(this.state)) return;
    const label = this.el<HTMLInputElement>('#mask-label').value || 'mask';
    this.state.mutationInFlight = true;
    try {
      const result = await this.client.commitMask(this.state.sessionId, label);
      this.state = observeRevision(this.state, result.revision);
      this.summary = await this.client.summary(this.state.sessionId);
      await this.refresh(false);
    } catch (err) {
      this.reportMutationError(err);
    } finally {
      this.state.mutationInFlight = false;
      this.syncControls();
    }
  }

  private async runUncertainty(): Promise<void> {
    if (!this.state || !canMutate(this.state)) return;
    const runs = Number(this.el<HTMLInputElement>('#ensemble-runs').value) || 5;
    this.state.mutationInFlight = true;
    this.notice('estimating uncertainty ...');
    try {
      const result = await this.client.runUncertainty(this.state.sessionId, runs);
      this.state = observeRevision(this.state, result.revision);
      this.el<HTMLInputElement>('#toggle-uncertainty').checked = true;
      this.summary = await this.client.summary(this.state.sessionId);
      await this.refresh(false);
      this.notice('uncertainty ready');
    } catch (err) {
      this.reportMutationError(err);
    } finally {
      this.state.mutationInFlight = false;
      this.syncControls();
    }
  }

  private async deletePrompt(kind: 'include' | 'exclude', index: number): Promise<void> {
    if (!this.state || !canMutate(this.state)) return;
    this.state.mutationInFlight = true;
    try {
      const result = await this.client.removePrompt(this.state.sessionId, kind, index);
      this.state = observeRevision(this.state, result.revision);
      this.summary = await this.client.summary(this.state.sessionId);
      await this.refresh(false);
    } catch (err) {
      this.reportMutationError(err);
    } finally {
      this.state.mutationInFlight = false;
      this.syncControls();
    }
  }

  private syncControls(): void {
    if (!this.state || !this.summary) return;
    const model = controlsModel(this.summary, this.state, this.backendNames);
    this.el<HTMLButtonElement>('#add-mask').disabled = model.addMaskDisabled;
    this.el<HTMLButtonElement>('#run-uncertainty').disabled = model.uncertaintyDisabled;

    const maskList = this.el<HTMLElement>('#mask-list');
    maskList.innerHTML = '';
    for (const entry of model.exports) {
      const item = document.createElement('li');
      const link = document.createElement('a');
      link.href = this.client.exportUrl(this.summary.id, entry.maskId);
      link.download = entry.filename;
      link.textContent = `${entry.label} (.nii.gz)`;
      item.append(link);
      maskList.append(item);
    }
  }

  private async renderPromptList(): Promise<void> {
    if (!this.state) return;
    const listing = await this.client.prompts(this.state.sessionId);
    const list = this.el<HTMLElement>('#prompt-list');
    list.innerHTML = '';
    for (const kind of ['include', 'exclude'] as const) {
      listing[kind].forEach((p, i) => {
        const item = document.createElement('li');
        item.textContent = `${kind} @ (${p.voxel.join(', ')}) `;
        const del = document.createElement('button');
        del.textContent = 'x';
        del.addEventListener('click', () => void this.deletePrompt(kind, i));
        item.append(del);
        list.append(item);
      });
    }
  }

  private async redraw(): Promise<void> {
    await this.refresh(false);
  }

  private async refresh(resize: boolean): Promise<void> {
    if (!this.state || !this.summary) return;
    this.syncControls();
    await this.renderPromptList();
    const showUncertainty = this.el<HTMLInputElement>('#toggle-uncertainty').checked;
    for (const figure of this.root.querySelectorAll<HTMLElement>('.view')) {
      const axis = Number(figure.dataset.axis) as Axis;
      const index = this.state.cursors[axis];
      const geom = sliceGeometry(this.state.dims, axis);
      const canvas = figure.querySelector('canvas')!;
      if (resize) {
        canvas.width = geom.width;
        canvas.height = geom.height;
        const slider = figure.querySelector<HTMLInputElement>('.cursor')!;
        slider.max = String(this.state.dims[axis] - 1);
        slider.value = String(index);
      }
      figure.querySelector('.idx')!.textContent = `${index}`;

      const [slice, overlay] = await Promise.all([
        this.client.slice(this.state.sessionId, axis, index),
        this.client.overlay(this.state.sessionId, axis, index, showUncertainty),
      ]);
      const pixelCount = geom.width * geom.height;
      const result = compositeSlice({
        baseGray: decodeBase64(slice.pixels),
        width: geom.width,
        height: geom.height,
        workingBits: overlay.working_mask
          ? unpackBits(decodeBase64(overlay.working_mask), pixelCount)
          : null,
        committed: overlay.committed_masks.map((m, i) => ({
          bits: unpackBits(decodeBase64(m.bits), pixelCount),
          colorIndex: i,
        })),
        uncertaintyBytes: overlay.uncertainty ? decodeBase64(overlay.uncertainty) : null,
        showWorking: this.el<HTMLInputElement>('#toggle-working').checked,
        showCommitted: this.el<HTMLInputElement>('#toggle-committed').checked,
        showUncertainty,
      });
      const ctx = canvas.getContext('2d')!;
      const frame = ctx.createImageData(geom.width, geom.height);
      frame.data.set(result.image);
      ctx.putImageData(frame, 0, 0);
    }
  }
}
