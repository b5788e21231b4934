import { PNG } from 'pngjs';
import * as jpeg from 'jpeg-js';

/** Planar-free RGB image, values 0..255, row-major. */
export interface RgbImage {
  width: number;
  height: number;
  data: Float64Array; // length width * height * 3
}

function fromRgba(width: number, height: number, rgba: Uint8Array): RgbImage {
  const data = new Float64Array(width * height * 3);
  for (let p = 0; p < width * height; p++) {
    data[p * 3] = rgba[p * 4];
    data[p * 3 + 1] = rgba[p * 4 + 1];
    data[p * 3 + 2] = rgba[p * 4 + 2];
  }
  return { width, height, data };
}

/** Decode PNG or JPEG by signature; throws on anything else. */
export function decodeImage(buf: Buffer): RgbImage {
  if (buf.length >= 8 && buf[0] === 0x89 && buf[1] === 0x50 && buf[2] === 0x4e && buf[3] === 0x47) {
    const png = PNG.sync.read(buf);
    return fromRgba(png.width, png.height, png.data);
  }
  if (buf.length >= 3 && buf[0] === 0xff && buf[1] === 0xd8 && buf[2] === 0xff) {
    const img = jpeg.decode(buf, { useTArray: true });
    return fromRgba(img.width, img.height, img.data);
  }
  throw new Error('not a PNG or JPEG');
}

export function resizeBilinear(img: RgbImage, width: number, height: number): RgbImage {
  const out = new Float64Array(width * height * 3);
  const sx = img.width / width;
  const sy = img.height / height;
  for (let y = 0; y < height; y++) {
    // sample at pixel centers so a no-op resize is exact
    const fy = Math.min(Math.max((y + 0.5) * sy - 0.5, 0), img.height - 1);
    const y0 = Math.floor(fy);
    const y1 = Math.min(y0 + 1, img.height - 1);
    const wy = fy - y0;
    for (let x = 0; x < width; x++) {
      const fx = Math.min(Math.max((x + 0.5) * sx - 0.5, 0), img.width - 1);
      const x0 = Math.floor(fx);
      const x1 = Math.min(x0 + 1, img.width - 1);
      const wx = fx - x0;
      for (let c = 0; c < 3; c++) {
        const tl = img.data[(y0 * img.width + x0) * 3 + c];
        const tr = img.data[(y0 * img.width + x1) * 3 + c];
        const bl = img.data[(y1 * img.width + x0) * 3 + c];
        const br = img.data[(y1 * img.width + x1) * 3 + c];
        out[(y * width + x) * 3 + c] =
          (1 - wy) * ((1 - wx) * tl + wx * tr) + wy * ((1 - wx) * bl + wx * br);
      }
    }
  }
  return { width, height, data: out };
}

export function centerCrop(img: RgbImage, size: number): RgbImage {
  if (img.width < size || img.height < size) {
    throw new Error(`image ${img.width}x${img.height} smaller than crop ${size}`);
  }
  const ox = Math.floor((img.width - size) / 2);
  const oy = Math.floor((img.height - size) / 2);
  const out = new Float64Array(size * size * 3);
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      for (let c = 0; c < 3; c++) {
        out[(y * size + x) * 3 + c] = img.data[((y + oy) * img.width + (x + ox)) * 3 + c];
      }
    }
  }
  return { width: size, height: size, data: out };
}

export const INPUT_SIZE = 224;

/** Resize shorter side to the input size, center crop, map 0..255 to -1..1. */
export function prepareInput(img: RgbImage, size: number = INPUT_SIZE): Float64Array {
  const scale = size / Math.min(img.width, img.height);
  const resized = resizeBilinear(img, Math.max(size, Math.round(img.width * scale)),
                                 Math.max(size, Math.round(img.height * scale)));
  const cropped = centerCrop(resized, size);
  const out = new Float64Array(cropped.data.length);
  for (let i = 0; i < out.length; i++) out[i] = cropped.data[i] / 127.5 - 1;
  return out;
}
