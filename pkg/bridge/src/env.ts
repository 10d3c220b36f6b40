/**
 * Step/reset environment adapter over a BridgeClient session.
 *
 * Observation space: 93-vector. Action space: scalar in [-1, 1]
 * (clipping to the tradable range happens server-side). The adapter
 * accumulates the wire checksum in the server's order and verifies it
 * against `info.obs_checksum` at episode end, so any transport
 * corruption raises instead of silently skewing training.
 */

import { BridgeClient } from "./client.js";
import { accumulateChecksum, type DoneReply, type ObsReply } from "./protocol.js";

export interface EpisodeParams {
  day: string;
  startIndex: number;
  horizonS: number;
  initialBtc?: number;
  targetFraction?: number;
  tradeFraction?: number;
  seed?: number;
}

export interface StepResult {
  observation: Float64Array;
  reward: number;
  done: boolean;
  info: Record<string, number>;
}

export class BridgeError extends Error {}

const CHECKSUM_RTOL = 1e-12;

export class BridgeEnv {
  /** Steps from reset to done for the current episode. */
  episodeSteps = 0;
  /** Sum of rewards received since the last reset. */
  rewardSum = 0;
  /** Relative checksum error observed at the last episode end. */
  lastChecksumError = 0;
  /** Terminal info of the last finished episode. */
  lastEpisodeInfo: Record<string, number> | null = null;

  private checksum = 0;
  private finished = true;

  constructor(private client: BridgeClient,
              private defaults: Partial<EpisodeParams> = {}) {}

  get done(): boolean {
    return this.finished;
  }

  async reset(params: EpisodeParams): Promise<Float64Array> {
    const p = { ...this.defaults, ...params };
    const msg: Record<string, unknown> = {
      kind: "reset", day: p.day, start_index: p.startIndex,
      horizon_s: p.horizonS,
    };
    if (p.initialBtc !== undefined) msg.initial_btc = p.initialBtc;
    if (p.targetFraction !== undefined) msg.target_fraction = p.targetFraction;
    if (p.tradeFraction !== undefined) msg.trade_fraction = p.tradeFraction;
    if (p.seed !== undefined) msg.seed = p.seed;
    const reply = await this.client.send(JSON.stringify(msg));
    if (reply.kind === "error") throw new BridgeError(reply.message);
    const obs = (reply as ObsReply).observation;
    this.checksum = accumulateChecksum(0, obs, 0);
    this.rewardSum = 0;
    this.episodeSteps = reply.info.steps;
    this.finished = false;
    return Float64Array.from(obs);
  }

  async step(action: number): Promise<StepResult> {
    const reply = await this.client.request({ kind: "act", action });
    if (reply.kind === "error") throw new BridgeError(reply.message);
    const body = reply as ObsReply | DoneReply;
    this.checksum = accumulateChecksum(this.checksum, body.observation,
                                       body.reward);
    this.rewardSum += body.reward;
    const done = body.kind === "done";
    if (done) {
      this.finished = true;
      this.lastEpisodeInfo = body.info;
      const expected = body.info.obs_checksum;
      const rel = Math.abs(this.checksum - expected)
        / Math.max(1, Math.abs(expected));
      this.lastChecksumError = rel;
      if (rel > CHECKSUM_RTOL) {
        throw new BridgeError(
          `checksum mismatch: local ${this.checksum} vs server ${expected}`);
      }
    }
    return {
      observation: Float64Array.from(body.observation),
      reward: body.reward,
      done,
      info: body.info,
    };
  }
}
