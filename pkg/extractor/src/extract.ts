import { existsSync, readFileSync, writeFileSync, mkdirSync } from 'fs'
import { join } from 'path'

import { Box, clampBox, cropResize, decodeImage, padBox, RawImage } from './image.js'
import { FeatureTableWriter, stableStringify } from './manifest.js'
import { createNetwork, FeatureNetwork } from './network.js'

export interface RegionRow {
  image_id: string
  region_id: string
  box: Box
}

/** Parse a regions JSONL file (wac corpus format), preserving file order. */
export function readRegionsFile(path: string): RegionRow[] {
  const rows: RegionRow[] = []
  const lines = readFileSync(path, 'utf-8').split('\n')
  lines.forEach((line, i) => {
    if (!line.trim()) return
    let obj: Record<string, unknown>
    try {
      obj = JSON.parse(line)
    } catch {
      throw new Error(`${path}:${i + 1}: invalid JSON`)
    }
    for (const field of ['image_id', 'region_id', 'x', 'y', 'w', 'h']) {
      if (!(field in obj)) throw new Error(`${path}:${i + 1}: missing field ${field}`)
    }
    rows.push({
      image_id: String(obj.image_id),
      region_id: String(obj.region_id),
      box: {
        x: Number(obj.x),
        y: Number(obj.y),
        w: Number(obj.w),
        h: Number(obj.h),
      },
    })
  })
  return rows
}

export interface ExtractConfig {
  imagesDir: string
  regionsFile: string
  outDir: string
  dim: number
  network?: string
  /** context padding as a fraction of the box size, default 0 (tight crop) */
  pad?: number
  batchSize?: number
  manifestName?: string
}

export interface ExtractResult {
  manifestPath: string
  dataPath: string
  errorsPath: string | null
  rowsWritten: number
  rowsSkipped: number
}

interface SkippedRow {
  image_id: string
  region_id: string
  reason: string
}

function findImageFile(imagesDir: string, imageId: string): string | null {
  for (const ext of ['.png', '.jpg', '.jpeg']) {
    const candidate = join(imagesDir, imageId + ext)
    if (existsSync(candidate)) return candidate
  }
  return null
}

/**
 * Crop every region, run the network, and write the feature table.
 *
 * Row order equals regions-file order. Unreadable images or degenerate
 * boxes skip the row and land in an errors sidecar file instead of
 * aborting the run.
 */
export function extract(config: ExtractConfig): ExtractResult {
  const network: FeatureNetwork = createNetwork(
    config.network ?? 'builtin-cnn-v1',
    config.dim,
  )
  const pad = config.pad ?? 0
  const batchSize = config.batchSize ?? 16
  const regions = readRegionsFile(config.regionsFile)

  mkdirSync(config.outDir, { recursive: true })
  const manifestPath = join(config.outDir, config.manifestName ?? 'features.json')
  const writer = new FeatureTableWriter({ manifestPath, dim: config.dim })
  const skipped: SkippedRow[] = []
  const imageCache = new Map<string, RawImage | null>()

  const loadImage = (imageId: string): RawImage | null => {
    if (imageCache.has(imageId)) return imageCache.get(imageId)!
    const path = findImageFile(config.imagesDir, imageId)
    let image: RawImage | null = null
    if (path) {
      try {
        image = decodeImage(path)
      } catch (err) {
        image = null
        skippedImageReason.set(imageId, `failed to decode ${path}: ${String(err)}`)
      }
    } else {
      skippedImageReason.set(imageId, `no image file for ${imageId} in ${config.imagesDir}`)
    }
    // keep at most one decoded image around per batch chunk
    if (imageCache.size > batchSize) imageCache.clear()
    imageCache.set(imageId, image)
    return image
  }
  const skippedImageReason = new Map<string, string>()

  for (const region of regions) {
    const image = loadImage(region.image_id)
    if (!image) {
      skipped.push({
        image_id: region.image_id,
        region_id: region.region_id,
        reason: skippedImageReason.get(region.image_id) ?? 'image unavailable',
      })
      continue
    }
    const box = clampBox(
      pad > 0 ? padBox(region.box, pad) : region.box,
      image.width,
      image.height,
    )
    if (!box) {
      skipped.push({
        image_id: region.image_id,
        region_id: region.region_id,
        reason: 'box has no overlap with the image',
      })
      continue
    }
    const crop = cropResize(image, box, network.inputSize)
    writer.add(region.image_id, region.region_id, network.forward(crop))
  }

  const { dataPath } = writer.write()
  let errorsPath: string | null = null
  if (skipped.length) {
    errorsPath = join(config.outDir, 'errors.jsonl')
    writeFileSync(
      errorsPath,
      skipped.map(row => stableStringify(row).replace(/\n\s*/g, ' ')).join('\n') + '\n',
    )
  }
  return {
    manifestPath,
    dataPath,
    errorsPath,
    rowsWritten: writer.count,
    rowsSkipped: skipped.length,
  }
}
