/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Surrogate β of the sensors `indices` on an `n × n` log grid.
     */
    betaMap(indices: Uint32Array, n: number): Float64Array;
    /**
     * Flattened `[x1, x2, ...]` library centres.
     */
    libraryCenters(): Float64Array;
    meshN(): number;
    constructor(mesh_n: number, grid_n: number);
    /**
     * Runs the greedy selection; returns the selection as JSON.
     */
    select(beta_target: number, k_max: number): string;
    /**
     * Nodal temperatures for conductivities `(theta1, theta2)` and flux
     * coefficients `m` (4 Legendre coefficients).
     */
    temperature(theta1: number, theta2: number, m: Float64Array): Float64Array;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_betaMap: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly demo_libraryCenters: (a: number) => [number, number];
    readonly demo_meshN: (a: number) => number;
    readonly demo_new: (a: number, b: number) => [number, number, number];
    readonly demo_select: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_temperature: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
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
