import { PNG } from 'pngjs';

export function makePng(width: number, height: number,
                        paint: (x: number, y: number) => [number, number, number]): Buffer {
  const png = new PNG({ width, height });
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      const [r, g, b] = paint(x, y);
      const at = (y * width + x) * 4;
      png.data[at] = r;
      png.data[at + 1] = g;
      png.data[at + 2] = b;
      png.data[at + 3] = 255;
    }
  }
  return PNG.sync.write(png);
}

export function solidPng(size: number, rgb: [number, number, number]): Buffer {
  return makePng(size, size, () => rgb);
}
