import { rmSync } from "node:fs";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { RunningStats, readStatsFile, writeStatsFile } from "../src/normalizer.js";
import { makeRng } from "../src/ppo.js";
import { makeTempDir, pyJson } from "./helpers.js";

let dir: string;

beforeAll(() => {
  dir = makeTempDir("lobexec-norm-");
});

afterAll(() => {
  rmSync(dir, { recursive: true, force: true });
});

function filledStats(n = 93, samples = 500, seed = 3): RunningStats {
  const stats = new RunningStats(n);
  const rng = makeRng(seed);
  const x = new Float64Array(n);
  for (let s = 0; s < samples; s++) {
    for (let i = 0; i < n; i++) x[i] = (rng() - 0.3) * (1 + i * 0.05);
    stats.update(x);
  }
  return stats;
}

describe("streaming statistics", () => {
  it("matches a two-pass mean and population variance", () => {
    const n = 6;
    const samples = 5000;
    const rng = makeRng(77);
    const data: Float64Array[] = [];
    const stats = new RunningStats(n);
    for (let s = 0; s < samples; s++) {
      const x = Float64Array.from({ length: n }, () => rng() * 4 - 1);
      data.push(x);
      stats.update(x);
    }
    for (let i = 0; i < n; i++) {
      let mean = 0;
      for (const x of data) mean += x[i];
      mean /= samples;
      let variance = 0;
      for (const x of data) variance += (x[i] - mean) ** 2;
      variance /= samples;
      expect(Math.abs(stats.mean[i] - mean) / Math.abs(mean))
        .toBeLessThanOrEqual(1e-9);
      expect(Math.abs(stats.var_[i] - variance) / variance)
        .toBeLessThanOrEqual(1e-9);
    }
    expect(stats.count).toBe(samples);
  });

  it("rejects observations of the wrong width", () => {
    const stats = new RunningStats(4);
    expect(() => stats.update([1, 2, 3])).toThrow(/entries/);
  });
});

describe("binary stats files", () => {
  it("loads in the core's frozen mode with exact values", () => {
    const stats = filledStats();
    const path = join(dir, "ts_written.lobn");
    writeStatsFile(path, stats);

    const loaded = pyJson<{
      frozen: boolean; count: number; clip: number; n: number;
      mean: number[]; var: number[];
    }>(
      [
        "import json, sys",
        "from lobexec.episode_env import NormalizerStats",
        "s = NormalizerStats.load(sys.argv[1])",
        "print(json.dumps({'frozen': s.frozen, 'count': s.count,"
          + " 'clip': s.clip, 'n': s.n_entries,"
          + " 'mean': s.mean.tolist(), 'var': s.var.tolist()}))",
      ].join("\n"),
      path,
    );
    expect(loaded.frozen).toBe(true);
    expect(loaded.count).toBe(stats.count);
    expect(loaded.clip).toBe(stats.clip);
    expect(loaded.n).toBe(stats.nEntries);
    expect(loaded.mean).toEqual(Array.from(stats.mean));
    expect(loaded.var).toEqual(Array.from(stats.var_));
  });

  it("frozen loads reject updates core-side", () => {
    const path = join(dir, "frozen_guard.lobn");
    writeStatsFile(path, filledStats(8, 40, 5));
    const outcome = pyJson<{ raised: boolean }>(
      [
        "import json, sys",
        "import numpy as np",
        "from lobexec.episode_env import NormalizerStats",
        "from lobexec.errors import LobexecError",
        "s = NormalizerStats.load(sys.argv[1])",
        "try:",
        "    s.update(np.zeros(8)); raised = False",
        "except LobexecError:",
        "    raised = True",
        "print(json.dumps({'raised': raised}))",
      ].join("\n"),
      path,
    );
    expect(outcome.raised).toBe(true);
  });

  it("transform agrees with the core", () => {
    const stats = filledStats(12, 300, 9);
    const path = join(dir, "transform.lobn");
    writeStatsFile(path, stats);
    const rng = makeRng(41);
    const x = Array.from({ length: 12 }, () => rng() * 30 - 15);
    const core = pyJson<number[]>(
      [
        "import json, sys",
        "import numpy as np",
        "from lobexec.episode_env import NormalizerStats",
        "s = NormalizerStats.load(sys.argv[1])",
        "x = np.array(json.loads(sys.argv[2]))",
        "print(json.dumps(s.transform(x).tolist()))",
      ].join("\n"),
      path, JSON.stringify(x),
    );
    const local = stats.transform(x);
    for (let i = 0; i < 12; i++) {
      expect(Math.abs(local[i] - core[i])).toBeLessThanOrEqual(1e-15);
    }
  });

  it("round trips through the local reader", () => {
    const stats = filledStats(20, 100, 13);
    const path = join(dir, "roundtrip.lobn");
    writeStatsFile(path, stats);
    const back = readStatsFile(path);
    expect(back.nEntries).toBe(stats.nEntries);
    expect(back.count).toBe(stats.count);
    expect(Array.from(back.mean)).toEqual(Array.from(stats.mean));
    expect(Array.from(back.var_)).toEqual(Array.from(stats.var_));
  });
});
