import { spawnSync } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

/** Run a python snippet against the installed core; returns stdout. */
export function py(code: string, ...argv: string[]): string {
  const res = spawnSync("python3", ["-c", code, ...argv],
                        { encoding: "utf-8" });
  if (res.status !== 0) {
    throw new Error(`python exited ${res.status}: ${res.stderr}`);
  }
  return res.stdout.trim();
}

export function pyJson<T>(code: string, ...argv: string[]): T {
  return JSON.parse(py(code, ...argv)) as T;
}

export function makeTempDir(prefix: string): string {
  return mkdtempSync(join(tmpdir(), prefix));
}

/** Write one synthetic day file the served episodes replay. */
export function writeSynthDay(dir: string, date = "20200301",
                              nSnapshots = 4000, seed = 11): void {
  py(
    [
      "import sys",
      "from lobexec.synth import make_day",
      "from lobexec.snapshot_store import write_day",
      "day = make_day(sys.argv[1], seed=int(sys.argv[3]),"
        + " n_snapshots=int(sys.argv[4]))",
      "write_day(day, sys.argv[2] + '/' + sys.argv[1] + '.lobd')",
    ].join("\n"),
    date, dir, String(seed), String(nSnapshots),
  );
}
