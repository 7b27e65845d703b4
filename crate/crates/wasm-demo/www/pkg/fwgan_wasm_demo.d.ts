/* tslint:disable */
/* eslint-disable */

/**
 * Key-value complexity report.
 */
export function complexity(latent: number, hidden: number, conditional_layers: number, gru_density: number, fc_density: number): string;

/**
 * Spectral losses between the test signal and its degraded copy.
 */
export function losses(gain: number, noise: number): Float64Array;

/**
 * Spectrogram of the test signal after `degrade`.
 */
export function spectrogram(fft_size: number, gain: number, noise: number): Float64Array;

/**
 * Frequencies, LPC envelope (dB) and weighting response (dB).
 */
export function weighting_curves(gamma1: number, gamma2: number, f1: number, f2: number, points: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly complexity: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly losses: (a: number, b: number) => [number, number, number, number];
    readonly spectrogram: (a: number, b: number, c: number) => [number, number, number, number];
    readonly weighting_curves: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
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
