import { describe, expect, it } from 'vitest';
import { mkdtempSync, writeFileSync } from 'fs';
import { tmpdir } from 'os';
import * as path from 'path';
import { Backbone, knownModels } from '../src/backbone.js';
import { INPUT_SIZE } from '../src/image.js';

function rampInput(): Float64Array {
  const out = new Float64Array(INPUT_SIZE * INPUT_SIZE * 3);
  for (let i = 0; i < out.length; i++) out[i] = ((i * 37) % 511) / 255 - 1;
  return out;
}

describe('seeded registry', () => {
  it('knows its identifiers and rejects others', () => {
    expect(knownModels()).toContain('seeded/patchnet-64');
    expect(() => Backbone.fromIdentifier('seeded/nope')).toThrow(/unknown model identifier/);
  });

  it('draws identical weights for the same identifier', () => {
    const a = Backbone.seeded('seeded/patchnet-64');
    const b = Backbone.seeded('seeded/patchnet-64');
    expect(Array.from(a.w1.slice(0, 16))).toEqual(Array.from(b.w1.slice(0, 16)));
    expect(Array.from(a.bp)).toEqual(Array.from(b.bp));
  });

  it('draws different weights for different identifiers', () => {
    const a = Backbone.seeded('seeded/patchnet-64');
    const b = Backbone.seeded('seeded/patchnet-128');
    expect(a.w1[0]).not.toBe(b.w1[0]);
  });
});

describe('embed', () => {
  it('returns the spec width, bounded by the tanh range', () => {
    const net = Backbone.seeded('seeded/patchnet-64');
    const pooled = net.embed(rampInput());
    expect(pooled.length).toBe(64);
    for (const v of pooled) expect(Math.abs(v)).toBeLessThanOrEqual(1);
  });

  it('is deterministic for the same input', () => {
    const net = Backbone.seeded('seeded/patchnet-64');
    const x = rampInput();
    expect(Array.from(net.embed(x))).toEqual(Array.from(net.embed(x)));
  });

  it('matches a straightforward patch-loop oracle', () => {
    // tiny custom net: 112px patches give a 2x2 grid
    const patch = 112;
    const inDim = patch * patch * 3;
    const width = 3;
    const w1 = new Float64Array(width * inDim);
    for (let i = 0; i < w1.length; i++) w1[i] = (((i * 13) % 7) - 3) * 1e-5;
    const b1 = Float64Array.of(0.01, -0.02, 0.03);
    const wp = new Float64Array(2 * width).fill(0.5);
    const bp = new Float64Array(2);
    const net = new Backbone({ name: 'tiny', patch, width, classes: 2 }, w1, b1, wp, bp);

    const x = rampInput();
    const want = new Float64Array(width);
    for (let py = 0; py < 2; py++) {
      for (let px = 0; px < 2; px++) {
        for (let f = 0; f < width; f++) {
          let acc = b1[f];
          let k = 0;
          for (let y = 0; y < patch; y++) {
            for (let xx = 0; xx < patch; xx++) {
              for (let c = 0; c < 3; c++) {
                const ax = px * patch + xx;
                const ay = py * patch + y;
                acc += w1[f * inDim + k++] * x[(ay * INPUT_SIZE + ax) * 3 + c];
              }
            }
          }
          want[f] += Math.tanh(acc) / 4;
        }
      }
    }
    const got = net.embed(x);
    for (let f = 0; f < width; f++) expect(got[f]).toBeCloseTo(want[f], 12);
  });

  it('rejects inputs of the wrong length', () => {
    const net = Backbone.seeded('seeded/patchnet-64');
    expect(() => net.embed(new Float64Array(10))).toThrow(/input length/);
  });
});

describe('predictProbs', () => {
  it('stays inside [0, 1]', () => {
    const net = Backbone.seeded('seeded/patchnet-128');
    const probs = net.predictProbs(net.embed(rampInput()));
    expect(probs.length).toBe(32);
    for (const p of probs) {
      expect(p).toBeGreaterThanOrEqual(0);
      expect(p).toBeLessThanOrEqual(1);
    }
  });
});

describe('checkpoints', () => {
  it('round-trips a seeded model through JSON', () => {
    const dir = mkdtempSync(path.join(tmpdir(), 'ckpt-'));
    const net = Backbone.seeded('seeded/patchnet-64');
    const file = path.join(dir, 'net.json');
    writeFileSync(file, JSON.stringify({
      name: net.spec.name, patch: net.spec.patch, width: net.spec.width,
      classes: net.spec.classes, w1: Array.from(net.w1), b1: Array.from(net.b1),
      wp: Array.from(net.wp), bp: Array.from(net.bp),
    }));
    const loaded = Backbone.fromIdentifier(file);
    const x = rampInput();
    expect(Array.from(loaded.embed(x))).toEqual(Array.from(net.embed(x)));
  });

  it('rejects malformed checkpoints', () => {
    const dir = mkdtempSync(path.join(tmpdir(), 'ckpt-'));
    const file = path.join(dir, 'bad.json');
    writeFileSync(file, JSON.stringify({ patch: 16, width: 0, classes: 2 }));
    expect(() => Backbone.fromCheckpoint(file)).toThrow(/bad width/);
  });
});
