/**
 * Wire protocol types for the lobexec episode server.
 *
 * One JSON object per line in both directions. Requests are `reset`
 * and `act`; replies are `obs`, `done`, or `error`. Observations are
 * exactly 93 numbers. Both sides serialize numbers with shortest
 * round-trip precision (the JSON default in Node and Python), so
 * values cross the wire bit for bit.
 *
 * The server maintains a running checksum: starting from zero at
 * reset, it adds every observation value left to right, then the
 * reward, for each message. The terminal `done` reply echoes it as
 * `info.obs_checksum` so clients can verify transport fidelity by
 * accumulating the same sum in the same order.
 */

export const OBS_SIZE = 93;

export interface ResetRequest {
  kind: "reset";
  day: string;
  start_index: number;
  horizon_s: number;
  initial_btc?: number;
  target_fraction?: number;
  trade_fraction?: number;
  seed?: number;
}

export interface ActRequest {
  kind: "act";
  action: number;
}

export type WireRequest = ResetRequest | ActRequest;

export interface ObsReply {
  kind: "obs";
  observation: number[];
  reward: number;
  done: false;
  info: Record<string, number>;
}

/** Terminal step; info additionally carries the episode summary. */
export interface DoneReply {
  kind: "done";
  observation: number[];
  reward: number;
  info: Record<string, number>;
}

export interface ErrorReply {
  kind: "error";
  message: string;
}

export type WireReply = ObsReply | DoneReply | ErrorReply;

export function encode(msg: WireRequest): string {
  return JSON.stringify(msg);
}

export function decode(line: string): WireReply {
  const msg = JSON.parse(line) as WireReply;
  if (msg.kind !== "obs" && msg.kind !== "done" && msg.kind !== "error") {
    throw new Error(`unknown reply kind ${String((msg as { kind?: unknown }).kind)}`);
  }
  if (msg.kind !== "error" && msg.observation.length !== OBS_SIZE) {
    throw new Error(`observation length ${msg.observation.length} != ${OBS_SIZE}`);
  }
  return msg;
}

/** Running left-to-right sum matching the server's checksum order. */
export function accumulateChecksum(
  checksum: number, observation: readonly number[], reward: number,
): number {
  let c = checksum;
  for (const v of observation) c += v;
  return c + reward;
}
