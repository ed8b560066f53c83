"""Line-delimited JSON protocol to external evaluator processes.

The engine spawns the evaluator command and exchanges one JSON object per
line over the child's stdio. Both sides open with a hello record carrying the
protocol version; eval requests then get one result each, matched by id, with
a single request in flight per process. Unknown fields in any record are
ignored so either side can extend the protocol.

    -> {"type": "hello", "version": 1}
    <- {"type": "hello", "version": 1}
    -> {"type": "eval", "id": 7, "genome": {...}, "input": [1, 3, 256, 512],
        "calibrate": false}
    <- {"type": "result", "id": 7, "score": 63.1, "latency_ms": 2.4,
        "peak_mem_mb": null}
    -> {"type": "shutdown"}
"""

from __future__ import annotations

import json
import queue
import shlex
import subprocess
import threading
from typing import Optional, Sequence

from .errors import EvaluationTimeout, EvaluatorCrash, EvaluatorFailure, ProtocolError
from .evaluators import CostOracle, Evaluator, ObjectiveVector
from .space import Genome

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT_S = 300.0


def hello_record() -> dict:
    return {"type": "hello", "version": PROTOCOL_VERSION}


def eval_record(
    request_id: int,
    genome: dict,
    input_shape: Sequence[int] = (1, 3, 256, 512),
    calibrate: bool = False,
) -> dict:
    return {
        "type": "eval",
        "id": int(request_id),
        "genome": genome,
        "input": list(input_shape),
        "calibrate": bool(calibrate),
    }


class ExternalWorker:
    """One evaluator process plus its reader thread."""

    def __init__(self, command: str, timeout_s: float = DEFAULT_TIMEOUT_S):
        self.command = command
        self.timeout_s = timeout_s
        argv = shlex.split(command)
        if not argv:
            raise ValueError("evaluator command is empty")
        try:
            self.proc = subprocess.Popen(
                argv,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding="utf-8",
                bufsize=1,
            )
        except OSError as exc:
            raise EvaluatorCrash(f"could not start evaluator {command!r}: {exc}")
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        self._handshake()

    def _pump(self) -> None:
        try:
            for line in self.proc.stdout:
                self._lines.put(line)
        finally:
            self._lines.put(None)

    def _send(self, record: dict) -> None:
        try:
            self.proc.stdin.write(json.dumps(record) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError) as exc:
            raise EvaluatorCrash(f"evaluator {self.command!r} closed stdin: {exc}")

    def _read_record(self) -> dict:
        try:
            line = self._lines.get(timeout=self.timeout_s)
        except queue.Empty:
            raise EvaluationTimeout(
                f"evaluator {self.command!r} sent nothing for {self.timeout_s:g} s"
            )
        if line is None:
            code = self.proc.poll()
            raise EvaluatorCrash(
                f"evaluator {self.command!r} closed its stream (exit code {code})"
            )
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"evaluator sent a malformed line: {line!r} ({exc})")
        if not isinstance(record, dict):
            raise ProtocolError(f"evaluator sent a non-object line: {line!r}")
        return record

    def _handshake(self) -> None:
        self._send(hello_record())
        record = self._read_record()
        if record.get("type") != "hello":
            raise ProtocolError(f"expected hello, got {record.get('type')!r}")
        if record.get("version") != PROTOCOL_VERSION:
            raise ProtocolError(
                f"protocol version mismatch: engine {PROTOCOL_VERSION}, "
                f"evaluator {record.get('version')!r}"
            )

    def evaluate(self, request: dict) -> dict:
        self._send(request)
        record = self._read_record()
        if record.get("type") != "result":
            raise ProtocolError(f"expected result, got {record.get('type')!r}")
        if record.get("id") != request["id"]:
            raise ProtocolError(
                f"result id {record.get('id')!r} does not match request id {request['id']}"
            )
        score = record.get("score")
        if not isinstance(score, (int, float)) or isinstance(score, bool):
            raise ProtocolError(f"result is missing a numeric score: {record!r}")
        return record

    def close(self) -> None:
        if self.proc.poll() is None:
            try:
                self._send({"type": "shutdown"})
                self.proc.stdin.close()
            except EvaluatorCrash:
                pass
        try:
            self.proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self.proc.kill()
            self.proc.wait()


class WorkerPool:
    """Fixed set of evaluator processes fed from a shared task queue."""

    def __init__(self, command: str, workers: int = 1, timeout_s: float = DEFAULT_TIMEOUT_S):
        if workers < 1:
            raise ValueError("workers must be >= 1")
        self.workers = [ExternalWorker(command, timeout_s) for _ in range(workers)]

    def evaluate_batch(self, requests: Sequence[dict]) -> dict:
        """Run all requests; returns {id: result record}, order-independent."""
        tasks: queue.SimpleQueue = queue.SimpleQueue()
        for request in requests:
            tasks.put(request)
        for _ in self.workers:
            tasks.put(None)
        results: dict[int, dict] = {}
        failures: list[EvaluatorFailure] = []

        def run(worker: ExternalWorker) -> None:
            while True:
                request = tasks.get()
                if request is None:
                    return
                try:
                    results[request["id"]] = worker.evaluate(request)
                except EvaluatorFailure as exc:
                    failures.append(exc)
                    return

        threads = [threading.Thread(target=run, args=(w,)) for w in self.workers]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if failures:
            raise failures[0]
        missing = [r["id"] for r in requests if r["id"] not in results]
        if missing:
            raise EvaluatorCrash(f"no results for request ids {missing}")
        return results

    def close(self) -> None:
        for worker in self.workers:
            worker.close()


class ExternalEvaluatorPool(Evaluator):
    """Evaluator backed by external processes.

    Scores come from the evaluator; latency uses the measured value when the
    evaluator reports one and falls back to the analytic estimate. FLOPs,
    parameters and the memory feasibility check stay analytic.
    """

    source = "external"

    def __init__(
        self,
        config,
        profile,
        command: str,
        workers: int = 1,
        timeout_s: float = DEFAULT_TIMEOUT_S,
        input_size: tuple[int, int] = (256, 512),
        calibrate: bool = False,
        oracle: Optional[CostOracle] = None,
    ):
        self.config = config
        self.profile = profile
        self.calibrate = calibrate
        self.input_shape = (1, 3, input_size[0], input_size[1])
        self.oracle = oracle or CostOracle(config, profile, input_size)
        self.pool = WorkerPool(command, workers=workers, timeout_s=timeout_s)

    def evaluate_batch(self, genomes, ids) -> list[ObjectiveVector]:
        bundles = [self.oracle.bundle(g) for g in genomes]
        requests = [
            eval_record(i, g.to_dict(), self.input_shape, self.calibrate)
            for g, i in zip(genomes, ids)
        ]
        results = self.pool.evaluate_batch(requests)
        out = []
        for genome, cid, bundle in zip(genomes, ids, bundles):
            record = results[cid]
            measured = record.get("latency_ms")
            latency = (
                float(measured)
                if isinstance(measured, (int, float)) and not isinstance(measured, bool)
                else bundle.latency_ms
            )
            out.append(
                ObjectiveVector(
                    score=float(record["score"]),
                    latency_ms=latency,
                    flops_g=bundle.cost.flops_g,
                    params_m=bundle.cost.params_m,
                    feasible=bundle.feasible,
                    source=self.source,
                    violation=bundle.violation,
                )
            )
        return out

    def evaluate(self, genome: Genome, candidate_id: int = 0) -> ObjectiveVector:
        return self.evaluate_batch([genome], [candidate_id])[0]

    def close(self) -> None:
        self.pool.close()
