/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const complexity: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const losses: (a: number, b: number) => [number, number, number, number];
export const spectrogram: (a: number, b: number, c: number) => [number, number, number, number];
export const weighting_curves: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
