// Slice-plane geometry shared with the server: for axis a the remaining
// axes in ascending order are (u, v); payloads are row-major with columns
// along u and rows along v, so byte (y * width + x) is voxel with
// coord[u] = x, coord[v] = y, coord[a] = slice index.

import type { Axis, Vec3 } from './types';

export interface SliceGeometry {
  axisU: number;
  axisV: number;
  width: number;
  height: number;
}

export function sliceGeometry(dims: Vec3, axis: Axis): SliceGeometry {
  const rest = [0, 1, 2].filter((a) => a !== axis);
  return {
    axisU: rest[0],
    axisV: rest[1],
    width: dims[rest[0]],
    height: dims[rest[1]],
  };
}

export function pixelToVoxel(dims: Vec3, axis: Axis, index: number, x: number, y: number): Vec3 | null {
  const geom = sliceGeometry(dims, axis);
  if (x < 0 || y < 0 || x >= geom.width || y >= geom.height) {
    return null; // outside the image rectangle: no request should be sent
  }
  const voxel: Vec3 = [0, 0, 0];
  voxel[geom.axisU] = Math.floor(x);
  voxel[geom.axisV] = Math.floor(y);
  voxel[axis] = index;
  return voxel;
}

export function voxelToPixel(dims: Vec3, axis: Axis, voxel: Vec3): { x: number; y: number; index: number } {
  const geom = sliceGeometry(dims, axis);
  return { x: voxel[geom.axisU], y: voxel[geom.axisV], index: voxel[axis] };
}

export function decodeBase64(data: string): Uint8Array {
  const binary = atob(data);
  const out = new Uint8Array(binary.length);
  for (let i = 0; i < binary.length; i++) {
    out[i] = binary.charCodeAt(i);
  }
  return out;
}

// Unpack msb-first bit packing (numpy packbits convention) into 0/1 bytes.
export function unpackBits(packed: Uint8Array, count: number): Uint8Array {
  const out = new Uint8Array(count);
  for (let i = 0; i < count; i++) {
    const byte = packed[i >> 3];
    out[i] = (byte >> (7 - (i & 7))) & 1;
  }
  return out;
}
