import { describe, expect, it } from 'vitest';
import * as jpeg from 'jpeg-js';
import { INPUT_SIZE, centerCrop, decodeImage, prepareInput, resizeBilinear } from '../src/image.js';
import { makePng, solidPng } from './helpers.js';

describe('decodeImage', () => {
  it('reads PNG pixels back exactly', () => {
    const buf = makePng(2, 2, (x, y) => [x * 10, y * 20, 200]);
    const img = decodeImage(buf);
    expect(img.width).toBe(2);
    expect(img.height).toBe(2);
    expect(Array.from(img.data.slice(0, 3))).toEqual([0, 0, 200]);
    expect(Array.from(img.data.slice(9, 12))).toEqual([10, 20, 200]);
  });

  it('reads JPEG by signature, approximately', () => {
    const rgba = new Uint8Array(8 * 8 * 4);
    for (let p = 0; p < 64; p++) {
      rgba[p * 4] = 120;
      rgba[p * 4 + 1] = 60;
      rgba[p * 4 + 2] = 30;
      rgba[p * 4 + 3] = 255;
    }
    const enc = jpeg.encode({ width: 8, height: 8, data: rgba }, 95);
    const img = decodeImage(Buffer.from(enc.data));
    expect(img.width).toBe(8);
    expect(Math.abs(img.data[0] - 120)).toBeLessThan(12);
  });

  it('rejects anything without a known signature', () => {
    expect(() => decodeImage(Buffer.from('plainly not an image')))
      .toThrow(/not a PNG or JPEG/);
  });
});

describe('resizeBilinear', () => {
  it('is the identity at scale 1', () => {
    const img = decodeImage(makePng(5, 4, (x, y) => [x * 7, y * 11, (x + y) * 3]));
    const out = resizeBilinear(img, 5, 4);
    expect(Array.from(out.data)).toEqual(Array.from(img.data));
  });

  it('keeps a constant image constant at any scale', () => {
    const img = decodeImage(solidPng(3, [90, 10, 250]));
    const out = resizeBilinear(img, 17, 9);
    for (let p = 0; p < 17 * 9; p++) {
      expect(out.data[p * 3]).toBeCloseTo(90, 10);
      expect(out.data[p * 3 + 2]).toBeCloseTo(250, 10);
    }
  });

  it('averages neighbours at a clean 2x downscale', () => {
    // one channel, 2x2 blocks average exactly under center sampling
    const img = decodeImage(makePng(4, 2, x => [x < 2 ? 100 : 200, 0, 0]));
    const out = resizeBilinear(img, 2, 1);
    expect(out.data[0]).toBeCloseTo(100, 10);
    expect(out.data[3]).toBeCloseTo(200, 10);
  });
});

describe('centerCrop', () => {
  it('takes the centered window', () => {
    const img = decodeImage(makePng(4, 4, (x, y) => [y * 4 + x, 0, 0]));
    const out = centerCrop(img, 2);
    expect(Array.from([out.data[0], out.data[3], out.data[6], out.data[9]]))
      .toEqual([5, 6, 9, 10]);
  });

  it('refuses to grow the image', () => {
    const img = decodeImage(solidPng(2, [1, 1, 1]));
    expect(() => centerCrop(img, 3)).toThrow(/smaller than crop/);
  });
});

describe('prepareInput', () => {
  it('maps 0..255 onto -1..1', () => {
    const lo = prepareInput(decodeImage(solidPng(10, [0, 0, 0])));
    const hi = prepareInput(decodeImage(solidPng(10, [255, 255, 255])));
    expect(lo.length).toBe(INPUT_SIZE * INPUT_SIZE * 3);
    expect(lo[0]).toBeCloseTo(-1, 10);
    expect(hi[0]).toBeCloseTo(1, 10);
  });

  it('crops the long side of a non-square image', () => {
    // left half black, right half white; the crop keeps the middle
    const img = decodeImage(makePng(40, 10, x => [x < 20 ? 0 : 255, 0, 0]));
    const input = prepareInput(img);
    const mid = input[(INPUT_SIZE / 2 * INPUT_SIZE + 2) * 3];
    expect(mid).toBeLessThan(0); // still in the dark half
    expect(input[(INPUT_SIZE / 2 * INPUT_SIZE + INPUT_SIZE - 3) * 3]).toBeGreaterThan(0.9);
  });
});
