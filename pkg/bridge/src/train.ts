/**
 * Demonstration PPO training run at desk scale.
 *
 * Streams episodes from `lobexec bridge-serve`, normalizes
 * observations with streaming statistics, updates the agent every
 * rollout, and saves the statistics in the core's binary format plus
 * the policy parameters as JSON. Entropy and approximate KL are logged
 * on every update. Training a competitive policy is out of scope here;
 * this exercises the full loop end to end.
 */

import { writeFileSync } from "node:fs";
import { parseArgs } from "node:util";
import { fileURLToPath } from "node:url";

import { BridgeClient, type ServeOptions } from "./client.js";
import { BridgeEnv } from "./env.js";
import { RunningStats, writeStatsFile } from "./normalizer.js";
import { makeRng, PpoAgent, type PpoConfig, type Transition,
         type UpdateDiagnostics } from "./ppo.js";
import { OBS_SIZE } from "./protocol.js";

export interface TrainConfig {
  dataDir: string;
  days: string[];
  horizonS: number;
  /** Highest valid episode start index for the served days. */
  maxStartIndex: number;
  totalSteps: number;
  rolloutSteps: number;
  statsOut: string;
  policyOut: string;
  seed: number;
  tradeFraction: number;
  serve?: Partial<ServeOptions>;
  ppo?: Partial<PpoConfig>;
  log?: (line: string) => void;
}

export interface TrainResult {
  diagnostics: UpdateDiagnostics[];
  steps: number;
  statsPath: string;
  policyPath: string;
}

export async function runTraining(cfg: TrainConfig): Promise<TrainResult> {
  const log = cfg.log ?? ((line: string) => console.log(line));
  const client = new BridgeClient({ dataDir: cfg.dataDir, ...cfg.serve });
  const env = new BridgeEnv(client, { tradeFraction: cfg.tradeFraction });
  const agent = new PpoAgent({ seed: cfg.seed, ...cfg.ppo });
  const stats = new RunningStats(OBS_SIZE);
  const rng = makeRng(cfg.seed ^ 0x5f3759df);
  const diagnostics: UpdateDiagnostics[] = [];

  const nextEpisode = async (): Promise<Float64Array> => {
    const day = cfg.days[Math.floor(rng() * cfg.days.length)];
    const startIndex = Math.floor(rng() * (cfg.maxStartIndex + 1));
    return env.reset({ day, startIndex, horizonS: cfg.horizonS });
  };

  try {
    let rawObs = await nextEpisode();
    stats.update(rawObs);
    let obs = stats.transform(rawObs);
    let steps = 0;
    while (steps < cfg.totalSteps) {
      const batch: Transition[] = [];
      const span = Math.min(cfg.rolloutSteps, cfg.totalSteps - steps);
      for (let t = 0; t < span; t++) {
        const [action, logp, value] = agent.act(obs);
        const res = await env.step(Math.min(Math.max(action, -1), 1));
        batch.push({ obs, action, logp, value, reward: res.reward,
                     done: res.done });
        if (res.done) {
          rawObs = await nextEpisode();
        } else {
          rawObs = res.observation;
        }
        stats.update(rawObs);
        obs = stats.transform(rawObs);
        steps++;
      }
      const lastValue = agent.valueOf(obs);
      const d = agent.update(batch, lastValue);
      diagnostics.push(d);
      log(`update ${d.update} | steps ${steps} | reward ${d.meanReward.toExponential(3)} `
        + `| entropy ${d.entropy.toFixed(4)} | kl ${d.approxKl.toExponential(3)} `
        + `| clip ${d.clipFraction.toFixed(3)}`);
    }

    writeStatsFile(cfg.statsOut, stats);
    writeFileSync(cfg.policyOut, JSON.stringify(agent.toJSON()) + "\n");
    log(`saved stats to ${cfg.statsOut} (count ${stats.count}) and policy to ${cfg.policyOut}`);
    return { diagnostics, steps: cfg.totalSteps, statsPath: cfg.statsOut,
             policyPath: cfg.policyOut };
  } finally {
    await client.close();
  }
}

async function main(): Promise<void> {
  const { values } = parseArgs({
    options: {
      "data-dir": { type: "string" },
      days: { type: "string" },
      horizon: { type: "string", default: "600" },
      "max-start": { type: "string", default: "1000" },
      "total-steps": { type: "string", default: "20000" },
      "rollout-steps": { type: "string", default: "2048" },
      "stats-out": { type: "string", default: "train_stats.lobn" },
      "policy-out": { type: "string", default: "policy.json" },
      seed: { type: "string", default: "0" },
    },
  });
  if (!values["data-dir"] || !values.days) {
    console.error("usage: node dist/train.js --data-dir DIR --days D1,D2 "
      + "[--horizon S] [--max-start N] [--total-steps N] [--rollout-steps N]");
    process.exitCode = 2;
    return;
  }
  await runTraining({
    dataDir: values["data-dir"],
    days: values.days.split(","),
    horizonS: Number(values.horizon),
    maxStartIndex: Number(values["max-start"]),
    totalSteps: Number(values["total-steps"]),
    rolloutSteps: Number(values["rollout-steps"]),
    statsOut: values["stats-out"],
    policyOut: values["policy-out"],
    seed: Number(values.seed),
    tradeFraction: 0.1,
  });
}

if (process.argv[1] && fileURLToPath(import.meta.url) === process.argv[1]) {
  main().catch((err) => {
    console.error(err);
    process.exitCode = 1;
  });
}
