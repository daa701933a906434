// Drives the real Python service: for random clicks on random slices the
// voxel the client derives locally must equal the voxel the server reports
// for the posted physical-space point.

import { ChildProcess, spawn } from 'node:child_process';
import { readFileSync } from 'node:fs';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { Client } from '../src/api';
import { voxelToRas } from '../src/affine';
import { pixelToVoxel, sliceGeometry } from '../src/slices';
import type { Axis, SessionSummary } from '../src/types';

const PORT = 18734;
const BASE = `http://127.0.0.1:${PORT}`;
const FIXTURE = join(dirname(fileURLToPath(import.meta.url)), 'fixtures', 'volume.nii.gz');

const SERVER_SCRIPT = `
import uvicorn
from voxelprompt.config import BackendSpec, ServiceConfig
from voxelprompt.service import create_app

app = create_app(ServiceConfig(backends=(BackendSpec("tiny", (32, 32, 24), 4, "3d"),)))
uvicorn.run(app, host="127.0.0.1", port=${PORT}, log_level="warning")
`;

let server: ChildProcess;

// deterministic PRNG so failures are reproducible
function mulberry32(seed: number): () => number {
  let a = seed;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

async function waitForServer(timeoutMs: number): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    try {
      const resp = await fetch(`${BASE}/backends`);
      if (resp.ok) return;
    } catch (err) {
      lastError = err;
    }
    await new Promise((r) => setTimeout(r, 200));
  }
  throw new Error(`service did not come up on ${BASE}: ${lastError}`);
}

beforeAll(async () => {
  server = spawn('python3', ['-c', SERVER_SCRIPT], { stdio: ['ignore', 'pipe', 'pipe'] });
  server.stderr?.on('data', () => {});
  await waitForServer(20000);
}, 30000);

afterAll(() => {
  server?.kill();
});

describe('coordinate fidelity against the live service', () => {
  it('client-computed voxels match server-reported prompt voxels for 20 random clicks', async () => {
    const client = new Client(BASE);
    const volume = readFileSync(FIXTURE);
    const summary: SessionSummary = await client.createSession(
      volume.buffer.slice(volume.byteOffset, volume.byteOffset + volume.byteLength) as ArrayBuffer,
      'tiny',
    );
    expect(summary.dims).toEqual([32, 32, 24]);

    const rand = mulberry32(0xc0ffee);
    for (let click = 0; click < 20; click++) {
      const axis = Math.floor(rand() * 3) as Axis;
      const index = Math.floor(rand() * summary.dims[axis]);
      const geom = sliceGeometry(summary.dims, axis);
      const x = Math.floor(rand() * geom.width);
      const y = Math.floor(rand() * geom.height);

      const voxel = pixelToVoxel(summary.dims, axis, index, x, y);
      expect(voxel).not.toBeNull();
      const ras = voxelToRas(summary.affine, voxel!);
      const kind = click === 0 ? 'include' : rand() < 0.7 ? 'include' : 'exclude';
      const result = await client.addPrompt(summary.id, ras, kind);
      expect(result.voxel).toEqual(voxel);
    }

    const listing = await client.prompts(summary.id);
    expect(listing.include.length + listing.exclude.length).toBe(20);
  }, 60000);

  it('posted RAS equals voxel coordinates for an identity-affine volume', async () => {
    // the fixture has a rotated anisotropic affine, so verify the identity
    // case directly through the math helpers
    const eye = [
      [1, 0, 0, 0],
      [0, 1, 0, 0],
      [0, 0, 1, 0],
      [0, 0, 0, 1],
    ];
    const voxel = pixelToVoxel([32, 32, 24], 2, 12, 16, 16)!;
    expect(voxelToRas(eye, voxel)).toEqual([16, 16, 12]);
  });
});
