/* tslint:disable */
/* eslint-disable */

/**
 * Plans the cue ball velocity that leaves the object ball at `(tx, ty)`
 * and returns the resulting shot.
 */
export function plan_billiards(tx: number, ty: number, iters: number): string;

/**
 * Names of the planar presets, as a JSON array.
 */
export function planar_presets(): string;

/**
 * Simulates `steps` steps of a preset from the initial condition drawn with
 * `seed`. Negative `mu` or `restitution` keeps the preset's values;
 * otherwise they replace every class's coefficient.
 */
export function simulate_preset(name: string, seed: number, steps: number, mu: number, restitution: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly plan_billiards: (a: number, b: number, c: number) => [number, number, number, number];
    readonly planar_presets: () => [number, number];
    readonly simulate_preset: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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
