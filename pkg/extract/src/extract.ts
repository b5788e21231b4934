import { readFileSync, readdirSync, writeFileSync } from 'fs';
import * as path from 'path';
import { Backbone } from './backbone.js';
import { decodeImage, prepareInput } from './image.js';
import { fnv1a64, writeEmbeddings, writeProbs } from './formats.js';

export interface ExtractJob {
  model: string;     // registry identifier or checkpoint path
  inputDir: string;
  outPath: string;
  manifestPath?: string; // default: outPath + '.manifest.txt'
}

const IMAGE_EXT = new Set(['.png', '.jpg', '.jpeg']);

/** Relative posix paths of candidate images under dir, sorted for stable order. */
export function listImages(dir: string): string[] {
  const out: string[] = [];
  const walk = (rel: string) => {
    const abs = rel ? path.join(dir, rel) : dir;
    for (const ent of readdirSync(abs, { withFileTypes: true })) {
      const childRel = rel ? `${rel}/${ent.name}` : ent.name;
      if (ent.isDirectory()) walk(childRel);
      else if (IMAGE_EXT.has(path.extname(ent.name).toLowerCase())) out.push(childRel);
    }
  };
  walk('');
  return out.sort();
}

interface LoadedInputs {
  ids: bigint[];
  inputs: Float64Array[];
  skipped: string[];
}

/** Decode and prepare every usable image; ids are hashes of relative paths. */
export function loadInputs(dir: string): LoadedInputs {
  const ids: bigint[] = [];
  const inputs: Float64Array[] = [];
  const skipped: string[] = [];
  const seen = new Map<bigint, string>();
  for (const rel of listImages(dir)) {
    let input: Float64Array;
    try {
      input = prepareInput(decodeImage(readFileSync(path.join(dir, rel))));
    } catch (e) {
      console.warn(`skipping ${rel}: ${e instanceof Error ? e.message : e}`);
      skipped.push(rel);
      continue;
    }
    const id = fnv1a64(rel);
    const prior = seen.get(id);
    if (prior !== undefined) {
      throw new Error(`example id collision between ${prior} and ${rel}`);
    }
    seen.set(id, rel);
    ids.push(id);
    inputs.push(input);
  }
  if (ids.length === 0) throw new Error(`no usable images under ${dir}`);
  return { ids, inputs, skipped };
}

function writeManifest(job: ExtractJob, layer: string, n: number, d: number): void {
  const dest = job.manifestPath ?? `${job.outPath}.manifest.txt`;
  writeFileSync(dest, `model ${job.model}\nlayer ${layer}\nN ${n}\nd ${d}\n`);
}

export function extractEmbeddings(job: ExtractJob): { n: number; d: number } {
  const net = Backbone.fromIdentifier(job.model);
  const { ids, inputs } = loadInputs(job.inputDir);
  const rows = inputs.map(x => Float32Array.from(net.embed(x)));
  writeEmbeddings(job.outPath, ids, rows);
  writeManifest(job, 'pre_logit_pool', ids.length, net.spec.width);
  return { n: ids.length, d: net.spec.width };
}

export function extractProbs(job: ExtractJob): { n: number; k: number } {
  const net = Backbone.fromIdentifier(job.model);
  const { ids, inputs } = loadInputs(job.inputDir);
  const rows = inputs.map(x => Float32Array.from(net.predictProbs(net.embed(x))));
  writeProbs(job.outPath, rows, 'multilabel');
  writeManifest(job, 'sigmoid_head', ids.length, net.spec.classes);
  return { n: ids.length, k: net.spec.classes };
}
