/**
 * Training defaults mirrored from the server's TrainDefaults surface.
 *
 * Read-only reference configuration for trainers; the demonstration
 * script scales total_steps down to desk size but keeps the rest.
 */

export const TRAIN_DEFAULTS = Object.freeze({
  learningRate: 1e-4,
  clipRange: 0.2,
  gamma: 0.995,
  gaeLambda: 0.95,
  valueCoef: 0.5,
  entropyCoef: 0.0,
  maxGradNorm: 0.5,
  targetKl: 0.05,
  totalSteps: 10_000_000,
  nEnvs: 6,
} as const);

export type TrainDefaults = typeof TRAIN_DEFAULTS;
