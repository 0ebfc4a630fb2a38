/**
 * Feature networks: anything that maps a fixed-size RGB crop to a feature
 * vector of a declared dimension.
 *
 * The default backbone is a small convolutional network with fixed,
 * deterministically generated weights. It ships in-code (no download), so
 * extraction is reproducible bit-for-bit everywhere. Heavier pretrained
 * backbones can be plugged in by registering another FeatureNetwork.
 */

export interface FeatureNetwork {
  readonly id: string
  /** side length of the square RGB input crop */
  readonly inputSize: number
  /** output feature dimension */
  readonly dim: number
  /** crop: inputSize*inputSize*3 floats in [0,1] -> dim floats */
  forward(crop: Float32Array): Float32Array
}

/** sfc32: tiny deterministic PRNG, good enough for weight init. */
function makeRng(seed: number): () => number {
  let a = 0x9e3779b9 ^ seed
  let b = 0x243f6a88 ^ (seed << 11)
  let c = 0xb7e15162 ^ (seed >> 7)
  let d = seed | 1
  return () => {
    a >>>= 0; b >>>= 0; c >>>= 0; d >>>= 0
    let t = (a + b) | 0
    a = b ^ (b >>> 9)
    b = (c + (c << 3)) | 0
    c = (c << 21) | (c >>> 11)
    d = (d + 1) | 0
    t = (t + d) | 0
    c = (c + t) | 0
    return (t >>> 0) / 4294967296
  }
}

/** Approximately normal samples (sum of uniforms), deterministic. */
function normal(rng: () => number): number {
  let s = 0
  for (let i = 0; i < 12; i++) s += rng()
  return s - 6
}

interface ConvLayer {
  inChannels: number
  outChannels: number
  /** 3x3 kernels, layout [out][in][ky][kx] flattened */
  weights: Float32Array
  bias: Float32Array
}

function makeConv(rng: () => number, inChannels: number, outChannels: number): ConvLayer {
  const fanIn = inChannels * 9
  const scale = Math.sqrt(2 / fanIn)
  const weights = new Float32Array(outChannels * inChannels * 9)
  for (let i = 0; i < weights.length; i++) weights[i] = Math.fround(normal(rng) * scale)
  const bias = new Float32Array(outChannels) // zeros
  return { inChannels, outChannels, weights, bias }
}

function convRelu(
  input: Float32Array,
  size: number,
  layer: ConvLayer,
): Float32Array {
  const { inChannels, outChannels, weights, bias } = layer
  const out = new Float32Array(size * size * outChannels)
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      for (let oc = 0; oc < outChannels; oc++) {
        let acc = bias[oc]
        const wBase = oc * inChannels * 9
        for (let ic = 0; ic < inChannels; ic++) {
          for (let ky = -1; ky <= 1; ky++) {
            const yy = y + ky
            if (yy < 0 || yy >= size) continue
            for (let kx = -1; kx <= 1; kx++) {
              const xx = x + kx
              if (xx < 0 || xx >= size) continue
              const w = weights[wBase + ic * 9 + (ky + 1) * 3 + (kx + 1)]
              acc += w * input[(yy * size + xx) * inChannels + ic]
            }
          }
        }
        out[(y * size + x) * outChannels + oc] = acc > 0 ? acc : 0
      }
    }
  }
  return out
}

function avgPool2(input: Float32Array, size: number, channels: number): Float32Array {
  const half = size >> 1
  const out = new Float32Array(half * half * channels)
  for (let y = 0; y < half; y++) {
    for (let x = 0; x < half; x++) {
      for (let c = 0; c < channels; c++) {
        const i00 = ((2 * y) * size + 2 * x) * channels + c
        const i01 = ((2 * y) * size + 2 * x + 1) * channels + c
        const i10 = ((2 * y + 1) * size + 2 * x) * channels + c
        const i11 = ((2 * y + 1) * size + 2 * x + 1) * channels + c
        out[(y * half + x) * channels + c] =
          (input[i00] + input[i01] + input[i10] + input[i11]) / 4
      }
    }
  }
  return out
}

const BUILTIN_WEIGHT_SEED = 0x57a11e

/**
 * Three conv/pool stages, global average pooling, then a fixed projection
 * to the requested dimension (the layer read out as the feature vector).
 */
export class BuiltinCnn implements FeatureNetwork {
  readonly id: string
  readonly inputSize = 64
  readonly dim: number
  private conv1: ConvLayer
  private conv2: ConvLayer
  private conv3: ConvLayer
  private projection: Float32Array
  private projectionBias: Float32Array

  constructor(dim: number) {
    if (!Number.isInteger(dim) || dim < 1) {
      throw new Error(`feature dim must be a positive integer, got ${dim}`)
    }
    this.dim = dim
    this.id = `builtin-cnn-v1:${dim}`
    const rng = makeRng(BUILTIN_WEIGHT_SEED)
    this.conv1 = makeConv(rng, 3, 16)
    this.conv2 = makeConv(rng, 16, 32)
    this.conv3 = makeConv(rng, 32, 64)
    const scale = Math.sqrt(1 / 64)
    this.projection = new Float32Array(64 * dim)
    for (let i = 0; i < this.projection.length; i++) {
      this.projection[i] = Math.fround(normal(rng) * scale)
    }
    this.projectionBias = new Float32Array(dim)
  }

  forward(crop: Float32Array): Float32Array {
    if (crop.length !== this.inputSize * this.inputSize * 3) {
      throw new Error(
        `expected ${this.inputSize}x${this.inputSize}x3 crop, got ${crop.length} values`,
      )
    }
    // center the [0,1] pixel values
    const centered = new Float32Array(crop.length)
    for (let i = 0; i < crop.length; i++) centered[i] = crop[i] - 0.5

    let act = convRelu(centered, 64, this.conv1)
    act = avgPool2(act, 64, 16)
    act = convRelu(act, 32, this.conv2)
    act = avgPool2(act, 32, 32)
    act = convRelu(act, 16, this.conv3)
    act = avgPool2(act, 16, 64)

    const pooled = new Float32Array(64)
    const cells = 8 * 8
    for (let i = 0; i < cells; i++) {
      for (let c = 0; c < 64; c++) pooled[c] += act[i * 64 + c]
    }
    for (let c = 0; c < 64; c++) pooled[c] /= cells

    const out = new Float32Array(this.dim)
    for (let j = 0; j < this.dim; j++) {
      let acc = this.projectionBias[j]
      for (let c = 0; c < 64; c++) acc += pooled[c] * this.projection[c * this.dim + j]
      out[j] = Math.fround(acc)
    }
    return out
  }
}

export type NetworkFactory = (dim: number) => FeatureNetwork

const registry = new Map<string, NetworkFactory>([
  ['builtin-cnn-v1', dim => new BuiltinCnn(dim)],
])

export function registerNetwork(name: string, factory: NetworkFactory): void {
  registry.set(name, factory)
}

export function createNetwork(name: string, dim: number): FeatureNetwork {
  const factory = registry.get(name)
  if (!factory) {
    const known = [...registry.keys()].join(', ')
    throw new Error(`unknown network ${JSON.stringify(name)}; available: ${known}`)
  }
  return factory(dim)
}
