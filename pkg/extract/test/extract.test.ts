import { afterEach, describe, expect, it, vi } from 'vitest';
import { spawnSync } from 'child_process';
import { mkdirSync, mkdtempSync, readFileSync, writeFileSync } from 'fs';
import { tmpdir } from 'os';
import * as path from 'path';
import { fileURLToPath } from 'url';
import { extractEmbeddings, extractProbs, listImages, loadInputs } from '../src/extract.js';
import { fnv1a64, writeTask } from '../src/formats.js';
import { solidPng } from './helpers.js';

const PYTHON = process.env.PYTHON ?? 'python3';

function toyFolder(): string {
  const dir = mkdtempSync(path.join(tmpdir(), 'imgs-'));
  writeFileSync(path.join(dir, 'red.png'), solidPng(32, [220, 30, 30]));
  writeFileSync(path.join(dir, 'green.png'), solidPng(32, [30, 220, 30]));
  mkdirSync(path.join(dir, 'sub'));
  writeFileSync(path.join(dir, 'sub', 'blue.png'), solidPng(48, [30, 30, 220]));
  return dir;
}

afterEach(() => vi.restoreAllMocks());

describe('listImages', () => {
  it('walks subdirectories and sorts relative paths', () => {
    const dir = toyFolder();
    writeFileSync(path.join(dir, 'notes.txt'), 'ignored');
    expect(listImages(dir)).toEqual(['green.png', 'red.png', 'sub/blue.png']);
  });
});

describe('loadInputs', () => {
  it('hashes relative paths into example ids', () => {
    const dir = toyFolder();
    const { ids } = loadInputs(dir);
    expect(ids).toEqual([fnv1a64('green.png'), fnv1a64('red.png'), fnv1a64('sub/blue.png')]);
  });

  it('skips undecodable images with a warning', () => {
    const warn = vi.spyOn(console, 'warn').mockImplementation(() => {});
    const dir = toyFolder();
    writeFileSync(path.join(dir, 'broken.png'), Buffer.from('this is no png'));
    const { ids, skipped } = loadInputs(dir);
    expect(ids.length).toBe(3);
    expect(skipped).toEqual(['broken.png']);
    expect(warn).toHaveBeenCalledWith(expect.stringContaining('skipping broken.png'));
  });

  it('fails when nothing is usable', () => {
    const dir = mkdtempSync(path.join(tmpdir(), 'imgs-'));
    writeFileSync(path.join(dir, 'junk.png'), Buffer.from('x'));
    vi.spyOn(console, 'warn').mockImplementation(() => {});
    expect(() => loadInputs(dir)).toThrow(/no usable images/);
  });
});

describe('extractEmbeddings', () => {
  it('writes one row per image plus a manifest', () => {
    const dir = toyFolder();
    const out = path.join(dir, 'expert_0.xprt');
    const { n, d } = extractEmbeddings({ model: 'seeded/patchnet-64', inputDir: dir, outPath: out });
    expect(n).toBe(3);
    expect(d).toBe(64);
    const buf = readFileSync(out);
    expect(buf.toString('ascii', 0, 4)).toBe('XPRT');
    expect(buf.readUInt32LE(8)).toBe(3);
    expect(buf.readUInt32LE(12)).toBe(64);
    expect(readFileSync(`${out}.manifest.txt`, 'utf8'))
      .toBe('model seeded/patchnet-64\nlayer pre_logit_pool\nN 3\nd 64\n');
  });

  it('gives the same image identical rows under different names', () => {
    const dir = mkdtempSync(path.join(tmpdir(), 'imgs-'));
    const png = solidPng(32, [128, 50, 90]);
    writeFileSync(path.join(dir, 'a.png'), png);
    writeFileSync(path.join(dir, 'b.png'), png);
    const out = path.join(dir, 'expert_1.xprt');
    extractEmbeddings({ model: 'seeded/patchnet-64', inputDir: dir, outPath: out });
    const buf = readFileSync(out);
    const rowBytes = 64 * 4;
    const base = 16 + 2 * 8;
    expect(buf.subarray(base, base + rowBytes))
      .toEqual(buf.subarray(base + rowBytes, base + 2 * rowBytes));
  });

  it('is byte-identical across runs', () => {
    const dir = toyFolder();
    const a = path.join(dir, 'run_0.xprt');
    const b = path.join(dir, 'run_1.xprt');
    extractEmbeddings({ model: 'seeded/patchnet-128', inputDir: dir, outPath: a });
    extractEmbeddings({ model: 'seeded/patchnet-128', inputDir: dir, outPath: b });
    expect(readFileSync(a)).toEqual(readFileSync(b));
  });
});

describe('extractProbs', () => {
  it('writes multilabel rows inside [0, 1]', () => {
    const dir = toyFolder();
    const out = path.join(dir, 'probs.prob');
    const { n, k } = extractProbs({ model: 'seeded/patchnet-64', inputDir: dir, outPath: out });
    expect(n).toBe(3);
    expect(k).toBe(16);
    const buf = readFileSync(out);
    expect(buf.readUInt8(16)).toBe(1);
    for (let i = 0; i < n * k; i++) {
      const v = buf.readFloatLE(17 + i * 4);
      expect(v).toBeGreaterThanOrEqual(0);
      expect(v).toBeLessThanOrEqual(1);
    }
    expect(readFileSync(`${out}.manifest.txt`, 'utf8'))
      .toBe('model seeded/patchnet-64\nlayer sigmoid_head\nN 3\nd 16\n');
  });
});

describe('cli', () => {
  const cliPath = fileURLToPath(new URL('../dist/cli.js', import.meta.url));

  it('extracts through the command line', () => {
    const dir = toyFolder();
    const out = path.join(dir, 'expert_2.xprt');
    const r = spawnSync('node', [cliPath, 'embed', '--model', 'seeded/patchnet-64',
                                 '--images', dir, '--out', out], { encoding: 'utf8' });
    expect(r.status).toBe(0);
    expect(r.stdout).toContain('wrote 3 x 64 embeddings');
    expect(readFileSync(out).readUInt32LE(8)).toBe(3);
  });

  it('reports unknown models on stderr', () => {
    const dir = toyFolder();
    const r = spawnSync('node', [cliPath, 'embed', '--model', 'seeded/zzz',
                                 '--images', dir, '--out', path.join(dir, 'x.xprt')],
                        { encoding: 'utf8' });
    expect(r.status).toBe(1);
    expect(r.stderr).toContain('unknown model identifier');
  });

  it('rejects missing flags with usage', () => {
    const r = spawnSync('node', [cliPath, 'embed'], { encoding: 'utf8' });
    expect(r.status).toBe(2);
    expect(r.stderr).toContain('--model, --images and --out are required');
  });
});

describe('engine integration', () => {
  it('emits files the engine validates and routes end to end', () => {
    const dir = toyFolder();
    const embDir = path.join(dir, 'emb');
    mkdirSync(embDir);
    extractEmbeddings({ model: 'seeded/patchnet-64', inputDir: dir,
                        outPath: path.join(embDir, 'expert_0.xprt') });
    extractEmbeddings({ model: 'seeded/patchnet-128', inputDir: dir,
                        outPath: path.join(embDir, 'expert_1.xprt') });
    const probsPath = path.join(dir, 'q.prob');
    extractProbs({ model: 'seeded/patchnet-64', inputDir: dir, outPath: probsPath });

    const ids = listImages(dir).filter(p => !p.startsWith('emb/')).map(fnv1a64);
    const taskPath = path.join(dir, 'toy.task');
    writeTask(taskPath, ids, [0, 1, 0], 2);

    const check = spawnSync(PYTHON, ['-c', [
      'import sys',
      'from expertroute.dataset_io import read_embeddings, read_probs, read_task',
      'read_embeddings(sys.argv[1]); read_embeddings(sys.argv[2])',
      'read_probs(sys.argv[3]); read_task(sys.argv[4])',
    ].join('\n'), path.join(embDir, 'expert_0.xprt'), path.join(embDir, 'expert_1.xprt'),
      probsPath, taskPath], { encoding: 'utf8' });
    expect(check.stderr).toBe('');
    expect(check.status).toBe(0);

    const selOut = path.join(dir, 'selection.txt');
    const sel = spawnSync(PYTHON, ['-m', 'expertroute.cli', '--quiet', 'select',
                                   '--method', 'knn', '--task', taskPath,
                                   '--embeddings-dir', embDir, '--out', selOut],
                          { encoding: 'utf8' });
    expect(sel.stderr).toBe('');
    expect(sel.status).toBe(0);
    const report = readFileSync(selOut, 'utf8');
    expect(report).toContain('method=knn');
    expect(report).toMatch(/chosen=[01]/);
  });
});
