/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Median worst-direction error, row-major over `kinds` (comma-separated)
     * then `sizes`.
     */
    error_curve(kinds: string, p: number, sizes: Float64Array, seeds: number): Float64Array;
    constructor(n: number, rare_fraction: number, sigma: number, seed: number);
    /**
     * `[x, y]` per point.
     */
    points(): Float64Array;
    /**
     * `[angle, full, coreset]` per direction for the last sample.
     */
    profile(steps: number): Float64Array;
    /**
     * Runs a sampler; returns `[x, y, weight, index]` per kept row, with the
     * rescaling undone so kept rows sit on the original points.
     */
    sample(kind: string, p: number, target: number, seed: number): Float64Array;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_error_curve: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly demo_new: (a: number, b: number, c: number, d: number) => number;
    readonly demo_points: (a: number) => [number, number];
    readonly demo_profile: (a: number, b: number) => [number, number];
    readonly demo_sample: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
