declare module 'jpeg-js' {
  export interface RawImageData {
    width: number;
    height: number;
    data: Uint8Array;
  }
  export function decode(buf: Uint8Array,
                         opts?: { useTArray?: boolean }): RawImageData;
  export function encode(img: { width: number; height: number; data: Uint8Array },
                         quality?: number): { width: number; height: number; data: Uint8Array };
}
