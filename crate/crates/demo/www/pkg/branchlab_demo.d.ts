/* tslint:disable */
/* eslint-disable */

export class BoundaryRun {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Recovered free boundary as `[x0, g0, f0, x1, g1, f1, ...]`.
     */
    boundary(): Float64Array;
    extent(): number;
    /**
     * `u` on `[-extent, extent]^2`, zero where the map could not be inverted.
     */
    field(): Field;
    /**
     * Laplacian, boundary, gradient and geometry residuals.
     */
    residuals(): Float64Array;
}

/**
 * A field on a uniform grid, row-major with the bottom row first.
 */
export class Field {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    nx(): number;
    ny(): number;
    values(): Float64Array;
}

export class FrequencyRun {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    frequency(): Float64Array;
    l(): number;
    m(): number;
    mismatch(): number;
    radii(): Float64Array;
    weiss(): Float64Array;
}

export class ObstacleRun {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    field(): Field;
    /**
     * Non-contact intervals on the slit as `[a0, b0, a1, b1, ...]`.
     */
    intervals(): Float64Array;
    iterations(): number;
    sup_error(): number;
}

/**
 * One-phase solution whose free boundary is the graph of `curve`, either a
 * name (`flat`, `catenary`, `parabola`) or whitespace separated Taylor
 * coefficients.
 */
export function extend_boundary(curve: string, n: number, extent: number): BoundaryRun;

/**
 * Frequency profile of the thin obstacle solution with data `Re z^exponent`.
 * With `exact` set the data itself is profiled and no solve is done.
 */
export function frequency(n: number, exponent: number, k: number, exact: boolean): FrequencyRun;

/**
 * Thin obstacle solve on the upper half-square with data `Re z^exponent`.
 */
export function thin_obstacle(n: number, exponent: number): ObstacleRun;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_boundaryrun_free: (a: number, b: number) => void;
    readonly __wbg_field_free: (a: number, b: number) => void;
    readonly __wbg_frequencyrun_free: (a: number, b: number) => void;
    readonly __wbg_obstaclerun_free: (a: number, b: number) => void;
    readonly boundaryrun_boundary: (a: number) => [number, number];
    readonly boundaryrun_extent: (a: number) => number;
    readonly boundaryrun_field: (a: number) => number;
    readonly boundaryrun_residuals: (a: number) => [number, number];
    readonly extend_boundary: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly field_nx: (a: number) => number;
    readonly field_ny: (a: number) => number;
    readonly field_values: (a: number) => [number, number];
    readonly frequency: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly frequencyrun_frequency: (a: number) => [number, number];
    readonly frequencyrun_l: (a: number) => number;
    readonly frequencyrun_m: (a: number) => number;
    readonly frequencyrun_mismatch: (a: number) => number;
    readonly frequencyrun_radii: (a: number) => [number, number];
    readonly frequencyrun_weiss: (a: number) => [number, number];
    readonly obstaclerun_field: (a: number) => number;
    readonly obstaclerun_intervals: (a: number) => [number, number];
    readonly obstaclerun_iterations: (a: number) => number;
    readonly obstaclerun_sup_error: (a: number) => number;
    readonly thin_obstacle: (a: number, b: number) => [number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
