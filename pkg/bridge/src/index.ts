export { BridgeClient, type ServeOptions } from "./client.js";
export { BridgeEnv, BridgeError, type EpisodeParams, type StepResult } from "./env.js";
export { RunningStats, readStatsFile, writeStatsFile } from "./normalizer.js";
export { TRAIN_DEFAULTS, type TrainDefaults } from "./defaults.js";
export { PpoAgent, DEFAULT_PPO_CONFIG, makeRng, type PpoConfig,
         type Transition, type UpdateDiagnostics } from "./ppo.js";
export { runTraining, type TrainConfig, type TrainResult } from "./train.js";
export { OBS_SIZE, accumulateChecksum, decode, encode,
         type WireReply, type WireRequest } from "./protocol.js";
