import { readFileSync } from 'fs'
import { PNG } from 'pngjs'
import jpeg from 'jpeg-js'

/** Decoded image as RGBA bytes, row-major. */
export interface RawImage {
  width: number
  height: number
  /** RGBA, 4 bytes per pixel */
  data: Uint8Array
}

export function decodeImage(path: string): RawImage {
  const buffer = readFileSync(path)
  if (path.toLowerCase().endsWith('.png')) {
    const png = PNG.sync.read(buffer)
    return { width: png.width, height: png.height, data: new Uint8Array(png.data) }
  }
  if (path.toLowerCase().endsWith('.jpg') || path.toLowerCase().endsWith('.jpeg')) {
    const img = jpeg.decode(buffer, { useTArray: true, maxMemoryUsageInMB: 1024 })
    return { width: img.width, height: img.height, data: new Uint8Array(img.data) }
  }
  throw new Error(`unsupported image format: ${path} (expected .png/.jpg/.jpeg)`)
}

export function encodePng(image: RawImage): Buffer {
  const png = new PNG({ width: image.width, height: image.height })
  Buffer.from(image.data).copy(png.data)
  return PNG.sync.write(png)
}

export interface Box {
  x: number
  y: number
  w: number
  h: number
}

/** Clamp a box to image bounds; returns null when nothing remains. */
export function clampBox(box: Box, width: number, height: number): Box | null {
  const x0 = Math.max(0, box.x)
  const y0 = Math.max(0, box.y)
  const x1 = Math.min(box.x + box.w, width)
  const y1 = Math.min(box.y + box.h, height)
  if (x1 - x0 <= 0 || y1 - y0 <= 0) return null
  return { x: x0, y: y0, w: x1 - x0, h: y1 - y0 }
}

/** Grow a box by `pad` * size on every side (context padding). */
export function padBox(box: Box, pad: number): Box {
  const dx = box.w * pad
  const dy = box.h * pad
  return { x: box.x - dx, y: box.y - dy, w: box.w + 2 * dx, h: box.h + 2 * dy }
}

/**
 * Crop a box out of the image and bilinearly resize to size x size.
 * Returns RGB floats in [0, 1], channel-last, row-major (size*size*3).
 */
export function cropResize(image: RawImage, box: Box, size: number): Float32Array {
  const out = new Float32Array(size * size * 3)
  const { data, width } = image
  for (let oy = 0; oy < size; oy++) {
    // sample at pixel centers of the target grid mapped into the box
    const sy = box.y + ((oy + 0.5) / size) * box.h - 0.5
    const y0 = Math.max(0, Math.min(image.height - 1, Math.floor(sy)))
    const y1 = Math.min(image.height - 1, y0 + 1)
    const fy = Math.max(0, Math.min(1, sy - y0))
    for (let ox = 0; ox < size; ox++) {
      const sx = box.x + ((ox + 0.5) / size) * box.w - 0.5
      const x0 = Math.max(0, Math.min(width - 1, Math.floor(sx)))
      const x1 = Math.min(width - 1, x0 + 1)
      const fx = Math.max(0, Math.min(1, sx - x0))
      for (let c = 0; c < 3; c++) {
        const v00 = data[(y0 * width + x0) * 4 + c]
        const v01 = data[(y0 * width + x1) * 4 + c]
        const v10 = data[(y1 * width + x0) * 4 + c]
        const v11 = data[(y1 * width + x1) * 4 + c]
        const top = v00 + (v01 - v00) * fx
        const bottom = v10 + (v11 - v10) * fx
        out[(oy * size + ox) * 3 + c] = Math.fround((top + (bottom - top) * fy) / 255)
      }
    }
  }
  return out
}
