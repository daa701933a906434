// Wire types mirroring the service's JSON responses.

export type Axis = 0 | 1 | 2;
export type PromptKind = 'include' | 'exclude';

export type Vec3 = [number, number, number];
export type Mat4 = number[][]; // row-major 4x4

export interface BackendInfo {
  name: string;
  input_dims: Vec3;
  stride: number;
  dimensionality: '3d' | '2d';
}

export interface MaskInfo {
  id: string;
  label: string;
}

export interface SessionSummary {
  id: string;
  revision: number;
  dims: Vec3;
  affine: Mat4;
  intensity_range: [number, number];
  backend: BackendInfo;
  include_count: number;
  exclude_count: number;
  has_working_mask: boolean;
  has_uncertainty: boolean;
  masks: MaskInfo[];
}

export interface SliceResponse {
  axis: Axis;
  index: number;
  width: number;
  height: number;
  window_center: number;
  window_width: number;
  pixels: string; // base64, 8-bit grayscale, row-major
  revision: number;
}

export interface CommittedLayer {
  id: string;
  label: string;
  bits: string; // base64 packed bits, msb-first
}

export interface OverlayResponse {
  axis: Axis;
  index: number;
  width: number;
  height: number;
  working_mask: string | null;
  committed_masks: CommittedLayer[];
  uncertainty: string | null;
  bit_order: 'msb-first';
  revision: number;
}

export interface MutationSummary {
  revision: number;
  foreground_voxels: number;
  changed_bbox: [Vec3, Vec3] | null;
  include_count: number;
  exclude_count: number;
  voxel: Vec3 | null;
}

export interface PromptEntry {
  ras: Vec3;
  voxel: Vec3;
}

export interface PromptListing {
  include: PromptEntry[];
  exclude: PromptEntry[];
}
