/**
 * Minimal PPO for the scalar-action execution environment.
 *
 * Policy: Gaussian with a linear mean head over normalized
 * observations and a learned state-independent log std. Value: linear.
 * Clipped surrogate objective with GAE, Adam, global gradient-norm
 * clipping, and a KL early stop. Gradients are closed-form, so there
 * is no tensor framework dependency; swapping in a bigger network is a
 * trainer-side choice this example intentionally avoids.
 */

import { TRAIN_DEFAULTS } from "./defaults.js";

export interface PpoConfig {
  obsSize: number;
  learningRate: number;
  clipRange: number;
  gamma: number;
  gaeLambda: number;
  valueCoef: number;
  entropyCoef: number;
  maxGradNorm: number;
  targetKl: number;
  epochs: number;
  minibatchSize: number;
  seed: number;
}

export const DEFAULT_PPO_CONFIG: PpoConfig = {
  obsSize: 93,
  learningRate: TRAIN_DEFAULTS.learningRate,
  clipRange: TRAIN_DEFAULTS.clipRange,
  gamma: TRAIN_DEFAULTS.gamma,
  gaeLambda: TRAIN_DEFAULTS.gaeLambda,
  valueCoef: TRAIN_DEFAULTS.valueCoef,
  entropyCoef: TRAIN_DEFAULTS.entropyCoef,
  maxGradNorm: TRAIN_DEFAULTS.maxGradNorm,
  targetKl: TRAIN_DEFAULTS.targetKl,
  epochs: 4,
  minibatchSize: 256,
  seed: 0,
};

export interface Transition {
  obs: Float64Array;
  action: number;
  logp: number;
  value: number;
  reward: number;
  done: boolean;
}

export interface UpdateDiagnostics {
  update: number;
  steps: number;
  policyLoss: number;
  valueLoss: number;
  entropy: number;
  approxKl: number;
  clipFraction: number;
  meanReward: number;
}

const LOG_2PI = Math.log(2 * Math.PI);

/** Deterministic uniform RNG (mulberry32). */
export function makeRng(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a = (a + 0x6d2b79f5) >>> 0;
    let t = a;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function gaussian(rng: () => number): number {
  // Box-Muller; rejects the zero corner so log stays finite
  let u = 0;
  while (u === 0) u = rng();
  return Math.sqrt(-2 * Math.log(u)) * Math.cos(2 * Math.PI * rng());
}

export class PpoAgent {
  readonly cfg: PpoConfig;
  /** Flat parameters: [wMu(0..n), bMu, logStd, wV(0..n), bV]. */
  params: Float64Array;
  private adamM: Float64Array;
  private adamV: Float64Array;
  private adamT = 0;
  private rng: () => number;
  private updates = 0;

  constructor(cfg: Partial<PpoConfig> = {}) {
    this.cfg = { ...DEFAULT_PPO_CONFIG, ...cfg };
    const n = this.cfg.obsSize;
    this.params = new Float64Array(2 * n + 3);
    this.rng = makeRng(this.cfg.seed);
    // small random mean head breaks the initial symmetry; logStd = 0
    for (let i = 0; i < n; i++) this.params[i] = 0.01 * gaussian(this.rng);
    this.adamM = new Float64Array(this.params.length);
    this.adamV = new Float64Array(this.params.length);
  }

  private get n(): number {
    return this.cfg.obsSize;
  }

  meanOf(obs: ArrayLike<number>): number {
    const n = this.n;
    let mu = this.params[n];
    for (let i = 0; i < n; i++) mu += this.params[i] * obs[i];
    return mu;
  }

  valueOf(obs: ArrayLike<number>): number {
    const n = this.n;
    let v = this.params[2 * n + 2];
    for (let i = 0; i < n; i++) v += this.params[n + 2 + i] * obs[i];
    return v;
  }

  get logStd(): number {
    return this.params[this.n + 1];
  }

  logProb(obs: ArrayLike<number>, action: number): number {
    const sigma = Math.exp(this.logStd);
    const z = (action - this.meanOf(obs)) / sigma;
    return -0.5 * z * z - this.logStd - 0.5 * LOG_2PI;
  }

  /** Sample an action; returns [action, logp, value]. */
  act(obs: ArrayLike<number>): [number, number, number] {
    const mu = this.meanOf(obs);
    const sigma = Math.exp(this.logStd);
    const action = mu + sigma * gaussian(this.rng);
    const z = (action - mu) / sigma;
    const logp = -0.5 * z * z - this.logStd - 0.5 * LOG_2PI;
    return [action, logp, this.valueOf(obs)];
  }

  /** GAE advantages and returns over one rollout. */
  computeAdvantages(batch: Transition[], lastValue: number):
      { advantages: Float64Array; returns: Float64Array } {
    const { gamma, gaeLambda } = this.cfg;
    const T = batch.length;
    const advantages = new Float64Array(T);
    const returns = new Float64Array(T);
    let gae = 0;
    for (let t = T - 1; t >= 0; t--) {
      const tr = batch[t];
      const nextValue = tr.done ? 0
        : (t === T - 1 ? lastValue : batch[t + 1].value);
      const nonTerminal = tr.done ? 0 : 1;
      const delta = tr.reward + gamma * nextValue - tr.value;
      gae = delta + gamma * gaeLambda * nonTerminal * gae;
      advantages[t] = gae;
      returns[t] = gae + tr.value;
    }
    return { advantages, returns };
  }

  /** One PPO update over a rollout; returns diagnostics. */
  update(batch: Transition[], lastValue: number): UpdateDiagnostics {
    const cfg = this.cfg;
    const n = this.n;
    const T = batch.length;
    const { advantages, returns } = this.computeAdvantages(batch, lastValue);

    let aMean = 0;
    for (let t = 0; t < T; t++) aMean += advantages[t];
    aMean /= T;
    let aVar = 0;
    for (let t = 0; t < T; t++) aVar += (advantages[t] - aMean) ** 2;
    const aStd = Math.sqrt(aVar / T) + 1e-8;
    const normAdv = new Float64Array(T);
    for (let t = 0; t < T; t++) normAdv[t] = (advantages[t] - aMean) / aStd;

    const order = new Int32Array(T);
    for (let t = 0; t < T; t++) order[t] = t;
    const grad = new Float64Array(this.params.length);
    let policyLoss = 0;
    let valueLoss = 0;
    let approxKl = 0;
    let clipped = 0;
    let seen = 0;

    for (let epoch = 0; epoch < cfg.epochs; epoch++) {
      // Fisher-Yates on the index array, seeded rng
      for (let i = T - 1; i > 0; i--) {
        const j = Math.floor(this.rng() * (i + 1));
        const tmp = order[i]; order[i] = order[j]; order[j] = tmp;
      }
      let epochKl = 0;
      for (let start = 0; start < T; start += cfg.minibatchSize) {
        const end = Math.min(start + cfg.minibatchSize, T);
        const m = end - start;
        grad.fill(0);
        let mbKl = 0;
        for (let idx = start; idx < end; idx++) {
          const t = order[idx];
          const tr = batch[t];
          const adv = normAdv[t];
          const sigma = Math.exp(this.logStd);
          const mu = this.meanOf(tr.obs);
          const z = (tr.action - mu) / sigma;
          const logp = -0.5 * z * z - this.logStd - 0.5 * LOG_2PI;
          const ratio = Math.exp(logp - tr.logp);
          const surr1 = ratio * adv;
          const lo = 1 - cfg.clipRange;
          const hi = 1 + cfg.clipRange;
          const clippedRatio = Math.min(Math.max(ratio, lo), hi);
          const surr2 = clippedRatio * adv;
          policyLoss += -Math.min(surr1, surr2);
          mbKl += tr.logp - logp;
          if (ratio < lo || ratio > hi) clipped += 1;
          seen += 1;
          // min(surr1, surr2) has gradient only through the unclipped
          // ratio branch
          if (surr1 <= surr2 || (ratio >= lo && ratio <= hi)) {
            const coef = -adv * ratio;
            const dMu = z / sigma;
            for (let i = 0; i < n; i++) grad[i] += coef * dMu * tr.obs[i];
            grad[n] += coef * dMu;
            grad[n + 1] += coef * (z * z - 1);
          }
          grad[n + 1] -= cfg.entropyCoef;
          const v = this.valueOf(tr.obs);
          const vErr = v - returns[t];
          valueLoss += 0.5 * vErr * vErr;
          const vCoef = cfg.valueCoef * vErr;
          for (let i = 0; i < n; i++) grad[n + 2 + i] += vCoef * tr.obs[i];
          grad[2 * n + 2] += vCoef;
        }
        for (let i = 0; i < grad.length; i++) grad[i] /= m;
        this.adamStep(grad);
        mbKl /= m;
        epochKl = mbKl;
        approxKl = mbKl;
      }
      if (epochKl > cfg.targetKl) break;
    }

    this.updates += 1;
    let rewardSum = 0;
    for (const tr of batch) rewardSum += tr.reward;
    const entropy = this.logStd + 0.5 * (LOG_2PI + 1);
    return {
      update: this.updates,
      steps: T,
      policyLoss: policyLoss / Math.max(1, seen),
      valueLoss: valueLoss / Math.max(1, seen),
      entropy,
      approxKl,
      clipFraction: clipped / Math.max(1, seen),
      meanReward: rewardSum / T,
    };
  }

  private adamStep(grad: Float64Array): void {
    const { maxGradNorm, learningRate } = this.cfg;
    let norm = 0;
    for (let i = 0; i < grad.length; i++) norm += grad[i] * grad[i];
    norm = Math.sqrt(norm);
    const scale = norm > maxGradNorm ? maxGradNorm / norm : 1;
    const b1 = 0.9;
    const b2 = 0.999;
    this.adamT += 1;
    const corr1 = 1 - Math.pow(b1, this.adamT);
    const corr2 = 1 - Math.pow(b2, this.adamT);
    for (let i = 0; i < this.params.length; i++) {
      const g = grad[i] * scale;
      this.adamM[i] = b1 * this.adamM[i] + (1 - b1) * g;
      this.adamV[i] = b2 * this.adamV[i] + (1 - b2) * g * g;
      const mHat = this.adamM[i] / corr1;
      const vHat = this.adamV[i] / corr2;
      this.params[i] -= learningRate * mHat / (Math.sqrt(vHat) + 1e-8);
    }
  }

  toJSON(): { config: PpoConfig; params: number[] } {
    return { config: this.cfg, params: Array.from(this.params) };
  }
}
