/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    mesh_indices(): Uint32Array;
    mesh_normals(): Float32Array;
    mesh_vertices(): Float32Array;
    /**
     * Builds `scene` ("dam-break", "double-dam-break", "water-drop") at `res`
     * cells per axis, solved with `solver` ("jacobi", "gs", "rbgs", "pcg").
     */
    constructor(scene: string, res: number, solver: string);
    positions(): Float32Array;
    /**
     * Rebuilds the surface mesh and returns its triangle count.
     */
    remesh(per_cell: number): number;
    status(): string;
    step(steps: number): void;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_mesh_indices: (a: number) => [number, number];
    readonly demo_mesh_normals: (a: number) => [number, number];
    readonly demo_mesh_vertices: (a: number) => [number, number];
    readonly demo_new: (a: number, b: number, c: number, d: number, e: number) => [number, number, number];
    readonly demo_positions: (a: number) => [number, number];
    readonly demo_remesh: (a: number, b: number) => number;
    readonly demo_status: (a: number) => [number, number];
    readonly demo_step: (a: number, b: number) => [number, number];
    readonly __externref_table_alloc: () => number;
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
