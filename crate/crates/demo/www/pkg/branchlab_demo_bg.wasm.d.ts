/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_boundaryrun_free: (a: number, b: number) => void;
export const __wbg_field_free: (a: number, b: number) => void;
export const __wbg_frequencyrun_free: (a: number, b: number) => void;
export const __wbg_obstaclerun_free: (a: number, b: number) => void;
export const boundaryrun_boundary: (a: number) => [number, number];
export const boundaryrun_extent: (a: number) => number;
export const boundaryrun_field: (a: number) => number;
export const boundaryrun_residuals: (a: number) => [number, number];
export const extend_boundary: (a: number, b: number, c: number, d: number) => [number, number, number];
export const field_nx: (a: number) => number;
export const field_ny: (a: number) => number;
export const field_values: (a: number) => [number, number];
export const frequency: (a: number, b: number, c: number, d: number) => [number, number, number];
export const frequencyrun_frequency: (a: number) => [number, number];
export const frequencyrun_l: (a: number) => number;
export const frequencyrun_m: (a: number) => number;
export const frequencyrun_mismatch: (a: number) => number;
export const frequencyrun_radii: (a: number) => [number, number];
export const frequencyrun_weiss: (a: number) => [number, number];
export const obstaclerun_field: (a: number) => number;
export const obstaclerun_intervals: (a: number) => [number, number];
export const obstaclerun_iterations: (a: number) => number;
export const obstaclerun_sup_error: (a: number) => number;
export const thin_obstacle: (a: number, b: number) => [number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;
