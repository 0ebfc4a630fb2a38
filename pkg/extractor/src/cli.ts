#!/usr/bin/env node
/**
 * wac-extract: emit wac-format visual feature tables from images + regions.
 *
 *   extract --images DIR --regions FILE --out DIR [--dim 1024]
 *           [--network builtin-cnn-v1] [--pad 0] [--batch 16]
 *   verify MANIFEST
 */

import { extract } from './extract.js'
import { verifyFeatureTable } from './manifest.js'

interface Flags {
  [key: string]: string
}

function parseFlags(argv: string[]): { flags: Flags; positional: string[] } {
  const flags: Flags = {}
  const positional: string[] = []
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i]
    if (arg.startsWith('--')) {
      const name = arg.slice(2)
      const value = argv[i + 1]
      if (value === undefined || value.startsWith('--')) {
        throw new Error(`flag --${name} needs a value`)
      }
      flags[name] = value
      i++
    } else {
      positional.push(arg)
    }
  }
  return { flags, positional }
}

function requireFlag(flags: Flags, name: string): string {
  const value = flags[name]
  if (value === undefined) throw new Error(`missing required flag --${name}`)
  return value
}

export function run(argv: string[]): number {
  const [command, ...rest] = argv
  if (!command || command === '--help' || command === '-h') {
    console.log(
      'usage: wac-extract extract --images DIR --regions FILE --out DIR ' +
        '[--dim N] [--network NAME] [--pad FRAC] [--batch N]\n' +
        '       wac-extract verify MANIFEST',
    )
    return command ? 0 : 2
  }
  const { flags, positional } = parseFlags(rest)

  if (command === 'extract') {
    const result = extract({
      imagesDir: requireFlag(flags, 'images'),
      regionsFile: requireFlag(flags, 'regions'),
      outDir: requireFlag(flags, 'out'),
      dim: flags.dim ? parseInt(flags.dim, 10) : 1024,
      network: flags.network,
      pad: flags.pad ? parseFloat(flags.pad) : 0,
      batchSize: flags.batch ? parseInt(flags.batch, 10) : 16,
    })
    console.log(
      JSON.stringify({
        manifest: result.manifestPath,
        data: result.dataPath,
        rows: result.rowsWritten,
        skipped: result.rowsSkipped,
        errors: result.errorsPath,
      }),
    )
    return 0
  }

  if (command === 'verify') {
    if (positional.length !== 1) throw new Error('verify takes exactly one manifest path')
    const report = verifyFeatureTable(positional[0])
    if (report.ok) {
      console.log(
        `OK: ${report.count} rows x ${report.dim} dims, ${report.sampledRows} rows sampled finite`,
      )
      return 0
    }
    for (const problem of report.problems) console.error(`FAIL: ${problem}`)
    return 1
  }

  throw new Error(`unknown command ${JSON.stringify(command)}`)
}

const isMain = import.meta.url === `file://${process.argv[1]}`
if (isMain) {
  try {
    process.exit(run(process.argv.slice(2)))
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : String(err)}`)
    process.exit(1)
  }
}
