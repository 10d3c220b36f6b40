/**
 * Streaming observation statistics in the core's binary format.
 *
 * The recurrence matches the server's normalizer exactly: count up,
 * mean += delta/count, var = ((count-1)*var + delta*(x-mean))/count
 * (population variance, var starts at 1). Files begin with the magic
 * "LOBN1", then a little-endian header of u32 version, u32 entries,
 * f64 clip, u64 count, followed by the mean and variance vectors as
 * f64. The core loads these frozen by default, so stats written here
 * can gate evaluation without ever being mutated by it.
 */

import { writeFileSync, readFileSync } from "node:fs";

const MAGIC = "LOBN1";
const VERSION = 1;
const HEADER_BYTES = MAGIC.length + 4 + 4 + 8 + 8;

export class RunningStats {
  mean: Float64Array;
  var_: Float64Array;
  count = 0;

  constructor(public readonly nEntries: number = 93,
              public readonly clip: number = 10.0) {
    this.mean = new Float64Array(nEntries);
    this.var_ = new Float64Array(nEntries).fill(1.0);
  }

  update(x: ArrayLike<number>): void {
    if (x.length !== this.nEntries) {
      throw new Error(`observation has ${x.length} entries, stats track ${this.nEntries}`);
    }
    this.count += 1;
    const c = this.count;
    for (let i = 0; i < this.nEntries; i++) {
      const delta = x[i] - this.mean[i];
      this.mean[i] = this.mean[i] + delta / c;
      this.var_[i] = ((c - 1) * this.var_[i] + delta * (x[i] - this.mean[i])) / c;
    }
  }

  /** (x - mean) / sqrt(var + 1e-8), clipped to +-clip. */
  transform(x: ArrayLike<number>): Float64Array {
    const z = new Float64Array(this.nEntries);
    for (let i = 0; i < this.nEntries; i++) {
      const v = (x[i] - this.mean[i]) / Math.sqrt(this.var_[i] + 1e-8);
      z[i] = Math.min(Math.max(v, -this.clip), this.clip);
    }
    return z;
  }
}

export function writeStatsFile(path: string, stats: RunningStats): void {
  const n = stats.nEntries;
  const buf = Buffer.alloc(HEADER_BYTES + 2 * 8 * n);
  let off = buf.write(MAGIC, 0, "ascii");
  off = buf.writeUInt32LE(VERSION, off);
  off = buf.writeUInt32LE(n, off);
  off = buf.writeDoubleLE(stats.clip, off);
  off = buf.writeBigUInt64LE(BigInt(stats.count), off);
  for (let i = 0; i < n; i++) off = buf.writeDoubleLE(stats.mean[i], off);
  for (let i = 0; i < n; i++) off = buf.writeDoubleLE(stats.var_[i], off);
  writeFileSync(path, buf);
}

export function readStatsFile(path: string): RunningStats {
  const buf = readFileSync(path);
  if (buf.toString("ascii", 0, MAGIC.length) !== MAGIC) {
    throw new Error(`${path}: bad stats magic`);
  }
  let off = MAGIC.length;
  const version = buf.readUInt32LE(off); off += 4;
  if (version !== VERSION) throw new Error(`${path}: unsupported version ${version}`);
  const n = buf.readUInt32LE(off); off += 4;
  const clip = buf.readDoubleLE(off); off += 8;
  const count = buf.readBigUInt64LE(off); off += 8;
  if (buf.length !== off + 2 * 8 * n) throw new Error(`${path}: truncated stats file`);
  const stats = new RunningStats(n, clip);
  stats.count = Number(count);
  for (let i = 0; i < n; i++) { stats.mean[i] = buf.readDoubleLE(off); off += 8; }
  for (let i = 0; i < n; i++) { stats.var_[i] = buf.readDoubleLE(off); off += 8; }
  return stats;
}
