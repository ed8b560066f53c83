// Line-delimited JSON evaluator process (wire protocol version 1).
//
// Reads one JSON object per stdin line, answers on stdout, and handles one
// request at a time. Each eval request decodes the genome against the space
// config, trains it on the synthetic task, and reports the validation score
// plus the measured wall time of a single forward pass at the requested
// input size.
//
//   usage: node dist/server.js [--space file] [--task-seed n] [--iters n]
//                              [--task-size HxW] [--lr x]

import { readFileSync } from "node:fs";
import { createInterface } from "node:readline";
import { fileURLToPath } from "node:url";
import { performance } from "node:perf_hooks";

import { ConstraintViolation, NumericalDivergence } from "./errors.js";
import { ToyTask } from "./data.js";
import { parseGenome, parseSpaceConfig } from "./genome.js";
import { buildSubnetwork } from "./network.js";
import { Rng, hashString } from "./rng.js";
import { noGrad, zeros } from "./tensor.js";
import { calibrate, scoreOnSplit, train } from "./train.js";

const PROTOCOL_VERSION = 1;

interface ServerOptions {
  spacePath: string;
  taskSeed: number;
  iterations: number;
  taskHeight: number;
  taskWidth: number;
  lr: number;
}

function parseArgs(argv: string[]): ServerOptions {
  const opts: ServerOptions = {
    spacePath: fileURLToPath(new URL("../fixtures/space.json", import.meta.url)),
    taskSeed: 0,
    iterations: 500,
    taskHeight: 64,
    taskWidth: 128,
    lr: 0.004,
  };
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    const value = () => {
      i += 1;
      if (i >= argv.length) throw new Error(`${flag} needs a value`);
      return argv[i];
    };
    if (flag === "--space") opts.spacePath = value();
    else if (flag === "--task-seed") opts.taskSeed = Number(value());
    else if (flag === "--iters") opts.iterations = Number(value());
    else if (flag === "--lr") opts.lr = Number(value());
    else if (flag === "--task-size") {
      const m = /^(\d+)x(\d+)$/.exec(value());
      if (!m) throw new Error("--task-size expects HxW");
      opts.taskHeight = Number(m[1]);
      opts.taskWidth = Number(m[2]);
    } else throw new Error(`unknown flag ${flag}`);
  }
  return opts;
}

function send(record: Record<string, unknown>): void {
  process.stdout.write(JSON.stringify(record) + "\n");
}

export function main(argv: string[]): void {
  const opts = parseArgs(argv);
  const config = parseSpaceConfig(JSON.parse(readFileSync(opts.spacePath, "utf-8")));
  const task = new ToyTask({
    seed: opts.taskSeed,
    height: opts.taskHeight,
    width: opts.taskWidth,
  });

  send({ type: "hello", version: PROTOCOL_VERSION });

  const handleEval = (record: Record<string, unknown>): void => {
    const id = record.id;
    try {
      const genome = parseGenome(record.genome, config);
      const weightSeed = (hashString(JSON.stringify(record.genome)) ^ (opts.taskSeed * 0x85ebca6b)) >>> 0;
      const net = buildSubnetwork(genome, config, { numClasses: task.numClasses, weightSeed });

      train(net, task, opts.iterations, { lr: opts.lr });
      if (record.calibrate === true) calibrate(net, task);
      const score = scoreOnSplit(net, task, task.val);

      // measured single-forward wall time at the requested input size
      const input = Array.isArray(record.input) ? record.input.map(Number) : [];
      const h = input.length >= 4 ? input[2] : input.length === 2 ? input[0] : task.height;
      const w = input.length >= 4 ? input[3] : input.length === 2 ? input[1] : task.width;
      const probe = zeros([3, h, w]);
      const probeRng = new Rng((opts.taskSeed ^ 0xabcd9) >>> 0);
      for (let i = 0; i < probe.size; i++) probe.data[i] = probeRng.gauss();
      const started = performance.now();
      noGrad(() => net.forward(probe, { train: false }));
      const latencyMs = performance.now() - started;

      send({ type: "result", id, score, latency_ms: latencyMs, peak_mem_mb: null });
    } catch (err) {
      if (err instanceof ConstraintViolation || err instanceof NumericalDivergence) {
        send({ type: "error", id, error: err.name, message: err.message });
      } else {
        throw err;
      }
    }
  };

  const lines = createInterface({ input: process.stdin, terminal: false });
  lines.on("line", (line) => {
    const text = line.trim();
    if (text.length === 0) return;
    let record: unknown;
    try {
      record = JSON.parse(text);
    } catch {
      send({ type: "error", error: "ProtocolViolation", message: `unparseable request line: ${text}` });
      return;
    }
    if (typeof record !== "object" || record === null || Array.isArray(record)) {
      send({ type: "error", error: "ProtocolViolation", message: "request must be a JSON object" });
      return;
    }
    const typed = record as Record<string, unknown>;
    if (typed.type === "hello") return; // our hello already went out at startup
    if (typed.type === "shutdown") {
      process.exit(0);
    }
    if (typed.type === "eval") {
      handleEval(typed);
      return;
    }
    send({ type: "error", error: "ProtocolViolation", message: `unknown request type ${String(typed.type)}` });
  });
  lines.on("close", () => process.exit(0));
}

main(process.argv.slice(2));
