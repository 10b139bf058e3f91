/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Camera centers `x, y, z` of every frame; method 3 is ground truth.
     */
    centers(method: number): Float64Array;
    frames(): number;
    constructor(shot_type: string, frames: number, characters: number, size: number, seed: number);
    /**
     * Target mask with the silhouette outline of `method` drawn over it.
     * Methods: 0 start, 1 per-frame, 2 sequential. Before a solve only the
     * start is available.
     */
    overlay(method: number, frame: number): Uint8Array;
    /**
     * Replaces the starting path with a drifting copy of the true one.
     */
    perturb(rot_deg: number, trans: number, seed: number): void;
    size(): number;
    /**
     * Runs the raw start, per-frame and sequential methods. Returns
     * `[pa, iou, mpjpe]` per method in that order.
     */
    solve(iterations: number): Float64Array;
    /**
     * Character root positions `x, y` at frame `frame`.
     */
    subjects(frame: number): Float64Array;
    /**
     * Target mask of frame `frame` (1-based) as RGBA bytes.
     */
    target(frame: number): Uint8Array;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_centers: (a: number, b: number) => [number, number, number, number];
    readonly demo_frames: (a: number) => number;
    readonly demo_new: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly demo_overlay: (a: number, b: number, c: number) => [number, number, number, number];
    readonly demo_perturb: (a: number, b: number, c: number, d: number) => [number, number];
    readonly demo_size: (a: number) => number;
    readonly demo_solve: (a: number, b: number) => [number, number, number, number];
    readonly demo_subjects: (a: number, b: number) => [number, number, number, number];
    readonly demo_target: (a: number, b: number) => [number, number, number, number];
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
