/** Writers for the routing engine's little-endian binary files.
 *
 * Layouts (all little-endian):
 *   embeddings  'XPRT', u32 version=1, u32 N, u32 d, N ids (u64), N*d float32
 *   task        'TASK', u32 version=1, u32 N, u32 C, N packed (u64 id, u32 label)
 *   probs       'PROB', u32 version=1, u32 N, u32 K, u8 kind, N*K float32
 *
 * The engine validates on read; these writers only refuse shapes that could
 * never validate.
 */

import { writeFileSync } from 'fs';

export const FNV64_OFFSET = 0xcbf29ce484222325n;
export const FNV64_PRIME = 0x100000001b3n;
const MASK64 = 0xffffffffffffffffn;

/** 64-bit FNV-1a over the UTF-8 bytes of a string. */
export function fnv1a64(text: string): bigint {
  let h = FNV64_OFFSET;
  for (const b of Buffer.from(text, 'utf8')) {
    h ^= BigInt(b);
    h = (h * FNV64_PRIME) & MASK64;
  }
  return h;
}

function header(magic: string, a: number, b: number): Buffer {
  const buf = Buffer.alloc(16);
  buf.write(magic, 0, 4, 'ascii');
  buf.writeUInt32LE(1, 4);
  buf.writeUInt32LE(a, 8);
  buf.writeUInt32LE(b, 12);
  return buf;
}

export function writeEmbeddings(path: string, ids: bigint[], rows: Float32Array[]): void {
  const n = rows.length;
  if (n < 1) throw new Error('embedding file needs at least one row');
  const d = rows[0].length;
  if (ids.length !== n) throw new Error('one example id per row required');
  const body = Buffer.alloc(n * 8 + n * d * 4);
  ids.forEach((id, i) => body.writeBigUInt64LE(id, i * 8));
  rows.forEach((row, i) => {
    if (row.length !== d) throw new Error(`row ${i} has width ${row.length}, expected ${d}`);
    for (let j = 0; j < d; j++) body.writeFloatLE(row[j], n * 8 + (i * d + j) * 4);
  });
  writeFileSync(path, Buffer.concat([header('XPRT', n, d), body]));
}

export function writeTask(path: string, ids: bigint[], labels: number[], numClasses: number): void {
  const n = ids.length;
  if (n < 1 || labels.length !== n) throw new Error('one label per example id required');
  const body = Buffer.alloc(n * 12);
  for (let i = 0; i < n; i++) {
    if (labels[i] < 0 || labels[i] >= numClasses) {
      throw new Error(`label ${labels[i]} at row ${i} outside [0, ${numClasses})`);
    }
    body.writeBigUInt64LE(ids[i], i * 12);
    body.writeUInt32LE(labels[i], i * 12 + 8);
  }
  writeFileSync(path, Buffer.concat([header('TASK', n, numClasses), body]));
}

export function writeProbs(path: string, rows: Float32Array[],
                           kind: 'categorical' | 'multilabel'): void {
  const n = rows.length;
  if (n < 1) throw new Error('probability file needs at least one row');
  const k = rows[0].length;
  const buf = Buffer.alloc(17 + n * k * 4);
  buf.write('PROB', 0, 4, 'ascii');
  buf.writeUInt32LE(1, 4);
  buf.writeUInt32LE(n, 8);
  buf.writeUInt32LE(k, 12);
  buf.writeUInt8(kind === 'categorical' ? 0 : 1, 16);
  rows.forEach((row, i) => {
    if (row.length !== k) throw new Error(`row ${i} has width ${row.length}, expected ${k}`);
    for (let j = 0; j < k; j++) buf.writeFloatLE(row[j], 17 + (i * k + j) * 4);
  });
  writeFileSync(path, buf);
}
