// Voxel -> RAS conversion against the session affine. The server owns the
// inverse (RAS -> voxel with round-half-away-from-zero); the client only
// ever sends physical coordinates.

import type { Mat4, Vec3 } from './types';

export function voxelToRas(affine: Mat4, voxel: Vec3): Vec3 {
  const h = [voxel[0], voxel[1], voxel[2], 1];
  const out: number[] = [0, 0, 0];
  for (let r = 0; r < 3; r++) {
    let acc = 0;
    for (let c = 0; c < 4; c++) {
      acc += affine[r][c] * h[c];
    }
    out[r] = acc;
  }
  return [out[0], out[1], out[2]];
}
