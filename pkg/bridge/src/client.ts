/**
 * Child-process client for `lobexec bridge-serve` over stdio.
 *
 * The session is strictly sequential: one request in flight at a time,
 * every request receives exactly one reply. Protocol violations make
 * the server close the session after its error reply; pending requests
 * then reject once the server's stdout drains.
 */

import { spawn, type ChildProcessWithoutNullStreams } from "node:child_process";
import { createInterface, type Interface } from "node:readline";

import { decode, encode, type WireReply, type WireRequest } from "./protocol.js";

export interface ServeOptions {
  /** Directory of .lobd/.csv day files served to episodes. */
  dataDir: string;
  python?: string;
  takerFeeBps?: number;
  impactK?: number;
  impactHalfLife?: number;
  sizeExponent?: number;
  inventoryPenalty?: number;
  /** Frozen normalizer statistics applied server-side to observations. */
  statsFile?: string;
}

export class BridgeClient {
  private proc: ChildProcessWithoutNullStreams;
  private lines: Interface;
  private pending: Array<{
    resolve: (reply: WireReply) => void;
    reject: (err: Error) => void;
  }> = [];
  private stderrText = "";
  private closed = false;
  private exitPromise: Promise<number | null>;

  constructor(opts: ServeOptions) {
    const args = ["-m", "lobexec", "bridge-serve", "--transport", "stdio",
                  "--data-dir", opts.dataDir];
    const flags: Array<[string, number | string | undefined]> = [
      ["--taker-fee-bps", opts.takerFeeBps],
      ["--impact-k", opts.impactK],
      ["--impact-half-life", opts.impactHalfLife],
      ["--size-exponent", opts.sizeExponent],
      ["--inventory-penalty", opts.inventoryPenalty],
      ["--stats-file", opts.statsFile],
    ];
    for (const [flag, value] of flags) {
      if (value !== undefined) args.push(flag, String(value));
    }
    this.proc = spawn(opts.python ?? "python3", args, {
      stdio: ["pipe", "pipe", "pipe"],
    });
    this.proc.stderr.on("data", (chunk: Buffer) => {
      this.stderrText += chunk.toString("utf-8");
    });
    this.lines = createInterface({ input: this.proc.stdout });
    this.lines.on("line", (line) => {
      const waiter = this.pending.shift();
      if (!waiter) return;
      try {
        waiter.resolve(decode(line));
      } catch (err) {
        waiter.reject(err as Error);
      }
    });
    // stdout EOF is delivered after every buffered line, so rejecting
    // here cannot race a reply that is still in flight
    this.lines.on("close", () => {
      this.closed = true;
      for (const waiter of this.pending.splice(0)) {
        waiter.reject(new Error(
          `bridge session closed${this.stderrText ? `: ${this.stderrText}` : ""}`));
      }
    });
    this.exitPromise = new Promise((resolve) => {
      this.proc.on("exit", (code) => resolve(code));
    });
  }

  get stderr(): string {
    return this.stderrText;
  }

  /** Send one request line; resolves with the matching reply. */
  request(msg: WireRequest): Promise<WireReply> {
    return this.send(encode(msg));
  }

  /** Send a raw line (tests use this to provoke protocol errors). */
  send(line: string): Promise<WireReply> {
    return new Promise((resolve, reject) => {
      if (this.closed) {
        reject(new Error("bridge session closed"));
        return;
      }
      this.pending.push({ resolve, reject });
      this.proc.stdin.write(line + "\n");
    });
  }

  /** End the session and wait for the server to exit. */
  async close(): Promise<number | null> {
    if (!this.proc.stdin.destroyed) this.proc.stdin.end();
    return this.exitPromise;
  }

  /** Await server exit without closing stdin (post-violation). */
  waitExit(): Promise<number | null> {
    return this.exitPromise;
  }
}
