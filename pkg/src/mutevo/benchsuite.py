"""Benchmark problems and the subprocess protocol for evaluating candidates.

The suite is a set of classic continuous test functions with a hidden random
shift: for each (function, dim, instance_seed) the optimum location x_opt is
drawn uniformly from [-4, 4]^dim and the optimum value f_opt is a hidden
offset, so candidates cannot hard-code answers.  Search bounds are always
[-5, 5].

Candidates are separate processes speaking line-delimited JSON on stdio:

    harness -> candidate   {"type": "init", "dim": D, "budget": B,
                            "lower": -5.0, "upper": 5.0, "seed": S}
    candidate -> harness   {"type": "ask", "x": [..D floats..]}
    harness -> candidate   {"type": "tell", "y": VALUE, "evals_left": N}
    harness -> candidate   {"type": "stop"}      (budget exhausted)
    candidate -> harness   {"type": "done"}      (optional early finish)
    candidate -> harness   {"type": "error", "message": "..."}  (giving up)

After a stop the candidate must exit within 5 seconds.  Any unknown message
type is a protocol error.
"""

from __future__ import annotations

import contextlib
import json
import math
import queue
import subprocess
import threading
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .metrics import DEFAULT_PRECISION_BOUNDS, EvalTrace
from .seeding import derive_seed

FUNCTION_IDS = ("sphere", "ellipsoid", "rastrigin", "rosenbrock", "diff_powers", "schaffers")
LOWER_BOUND = -5.0
UPPER_BOUND = 5.0
SHIFT_RANGE = 4.0
STOP_GRACE_S = 5.0


# ----- problems -------------------------------------------------------------


@dataclass(frozen=True)
class Problem:
    function_id: str
    dim: int
    instance_seed: int
    x_opt: np.ndarray = field(repr=False)
    f_opt: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "x_opt", np.asarray(self.x_opt, dtype=float))


def make_problem(function_id: str, dim: int, instance_seed: int) -> Problem:
    """Instantiate a shifted problem; identical arguments give identical shifts."""
    if function_id not in FUNCTION_IDS:
        raise ValueError(f"unknown function {function_id!r}, expected one of {FUNCTION_IDS}")
    if dim < 1:
        raise ValueError(f"dim must be positive, got {dim}")
    rng = np.random.default_rng(derive_seed("problem", function_id, dim, instance_seed))
    x_opt = rng.uniform(-SHIFT_RANGE, SHIFT_RANGE, size=dim)
    f_opt = float(np.round(rng.uniform(-100.0, 100.0), 2))
    return Problem(function_id, dim, instance_seed, x_opt, f_opt)


def raw_values(problem: Problem, points: np.ndarray) -> np.ndarray:
    """Objective values for a batch of points with shape (k, dim)."""
    x = np.asarray(points, dtype=float)
    if x.ndim != 2 or x.shape[1] != problem.dim:
        raise ValueError(f"expected shape (k, {problem.dim}), got {x.shape}")
    z = x - problem.x_opt
    d = problem.dim
    fid = problem.function_id
    if fid == "sphere":
        g = (z**2).sum(axis=1)
    elif fid == "ellipsoid":
        exponents = np.zeros(d) if d == 1 else 6.0 * np.arange(d) / (d - 1)
        g = (10.0**exponents * z**2).sum(axis=1)
    elif fid == "rastrigin":
        g = 10.0 * (d - np.cos(2.0 * np.pi * z).sum(axis=1)) + (z**2).sum(axis=1)
    elif fid == "rosenbrock":
        if d == 1:
            g = (1.0 - z[:, 0]) ** 2
        else:
            g = (100.0 * (z[:, :-1] ** 2 - z[:, 1:]) ** 2 + (1.0 - z[:, :-1]) ** 2).sum(axis=1)
    elif fid == "diff_powers":
        exponents = 2.0 + (np.zeros(d) if d == 1 else 4.0 * np.arange(d) / (d - 1))
        g = (np.abs(z) ** exponents).sum(axis=1)
    else:  # schaffers
        s = np.abs(z) if d == 1 else np.sqrt(z[:, :-1] ** 2 + z[:, 1:] ** 2)
        terms = np.sqrt(s) * (1.0 + np.sin(50.0 * s**0.2) ** 2)
        g = terms.mean(axis=1) ** 2
    return problem.f_opt + g


def evaluate_raw(problem: Problem, x: Sequence[float]) -> float:
    """Objective value at a single point."""
    return float(raw_values(problem, np.asarray(x, dtype=float).reshape(1, -1))[0])


# ----- budgeted evaluation --------------------------------------------------


class BudgetExhaustedError(RuntimeError):
    """Raised when a run is asked to evaluate past its budget."""


class CandidateProtocolError(RuntimeError):
    """Raised when a candidate sends something the protocol does not allow."""


@dataclass
class BudgetedRun:
    """One candidate-versus-problem run: budget accounting plus the trace."""

    problem: Problem
    budget: int
    precision_bounds: tuple[float, float] = DEFAULT_PRECISION_BOUNDS
    best_so_far: list[float] = field(default_factory=list)
    evals_used: int = 0
    out_of_bounds: int = 0
    status: str = "ok"
    error_text: str | None = None
    exit_code: int | None = None

    def evaluate(self, x: Sequence[float]) -> float:
        """Evaluate one point, update the trace, and return the raw value."""
        if self.evals_used >= self.budget:
            raise BudgetExhaustedError(f"budget of {self.budget} evaluations exhausted")
        values = list(x) if isinstance(x, (list, tuple)) else None
        if values is None or len(values) != self.problem.dim:
            raise CandidateProtocolError(
                f"ask must carry a list of {self.problem.dim} numbers"
            )
        try:
            point = [float(v) for v in values]
        except (TypeError, ValueError) as exc:
            raise CandidateProtocolError(f"ask carried a non-numeric entry: {exc}") from exc
        if not all(math.isfinite(v) for v in point):
            raise CandidateProtocolError("ask carried a non-finite coordinate")
        if any(v < LOWER_BOUND or v > UPPER_BOUND for v in point):
            self.out_of_bounds += 1  # evaluated anyway, but flagged in the log
        y = evaluate_raw(self.problem, point)
        precision = y - self.problem.f_opt
        if self.best_so_far:
            precision = min(precision, self.best_so_far[-1])
        self.best_so_far.append(precision)
        self.evals_used += 1
        return y

    def trace(self) -> EvalTrace:
        return EvalTrace(tuple(self.best_so_far), self.budget, self.precision_bounds)

    @property
    def failed(self) -> bool:
        return self.status != "ok"

    def mark_failed(self, code: str, message: str) -> None:
        if self.status == "ok":  # keep the first failure
            self.status = code
            self.error_text = message


# ----- subprocess driver ----------------------------------------------------


def _pump_lines(stream, sink: queue.Queue) -> None:
    try:
        for line in stream:
            sink.put(line)
    except ValueError:
        pass  # stream closed under us during shutdown
    finally:
        sink.put(None)


def _collect_text(stream, chunks: list[str]) -> None:
    try:
        for line in stream:
            chunks.append(line)
    except ValueError:
        pass


def _last_line(text: str) -> str:
    for line in reversed(text.splitlines()):
        if line.strip():
            return line.strip()[:200]
    return ""


def run_candidate(
    command: Sequence[str],
    problem: Problem,
    budget: int,
    timeout_s: float,
    *,
    seed: int = 0,
    precision_bounds: tuple[float, float] = DEFAULT_PRECISION_BOUNDS,
) -> BudgetedRun:
    """Drive one candidate process through the ask/tell protocol.

    Always returns a BudgetedRun; crashes, malformed messages, and timeouts
    mark the run failed (with a distinct status code) but keep whatever trace
    was gathered up to that point.
    """
    run = BudgetedRun(problem, budget, precision_bounds)
    try:
        proc = subprocess.Popen(
            list(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
    except OSError as exc:
        run.mark_failed("spawn_failure", str(exc))
        return run

    lines: queue.Queue = queue.Queue()
    stderr_chunks: list[str] = []
    stdout_thread = threading.Thread(target=_pump_lines, args=(proc.stdout, lines), daemon=True)
    stderr_thread = threading.Thread(
        target=_collect_text, args=(proc.stderr, stderr_chunks), daemon=True
    )
    stdout_thread.start()
    stderr_thread.start()

    deadline = time.monotonic() + timeout_s
    completed = False
    # Last-resort guard: if the harness itself gets stuck writing to a
    # candidate that stopped reading, killing the process unblocks the pipe.
    watchdog = threading.Timer(timeout_s + STOP_GRACE_S, proc.kill)
    watchdog.daemon = True
    watchdog.start()

    def next_line() -> str | None:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise TimeoutError
        try:
            return lines.get(timeout=remaining)
        except queue.Empty:
            raise TimeoutError from None

    def send(message: dict) -> None:
        proc.stdin.write(json.dumps(message) + "\n")
        proc.stdin.flush()

    try:
        send(
            {
                "type": "init",
                "dim": problem.dim,
                "budget": budget,
                "lower": LOWER_BOUND,
                "upper": UPPER_BOUND,
                "seed": seed,
            }
        )
        while True:
            line = next_line()
            if line is None:
                break  # candidate closed stdout; classify from the exit code
            if not line.strip():
                continue
            try:
                message = json.loads(line)
            except ValueError:
                run.mark_failed("protocol_error", f"unparseable message: {line.strip()[:120]}")
                break
            mtype = message.get("type") if isinstance(message, dict) else None
            if mtype == "ask":
                try:
                    y = run.evaluate(message.get("x"))
                except BudgetExhaustedError:
                    send({"type": "stop"})
                    completed = True
                    break
                except CandidateProtocolError as exc:
                    run.mark_failed("protocol_error", str(exc))
                    break
                send({"type": "tell", "y": y, "evals_left": budget - run.evals_used})
            elif mtype == "done":
                completed = True
                break
            elif mtype == "error":
                run.mark_failed(
                    "candidate_error", str(message.get("message", "candidate reported an error"))
                )
                break
            else:
                run.mark_failed("protocol_error", f"unknown message type {mtype!r}")
                break
    except TimeoutError:
        run.mark_failed("timeout", f"wall-clock timeout after {timeout_s}s")
    except OSError as exc:
        if time.monotonic() >= deadline:
            run.mark_failed("timeout", f"wall-clock timeout after {timeout_s}s")
        else:
            # Write to a dead process; the exit code tells the real story below.
            run.mark_failed("candidate_crash", f"pipe closed: {exc}")
    finally:
        watchdog.cancel()
        with contextlib.suppress(OSError):
            proc.stdin.close()
        if run.status == "timeout":
            proc.kill()
        try:
            proc.wait(timeout=STOP_GRACE_S)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
        stdout_thread.join(timeout=1.0)
        stderr_thread.join(timeout=1.0)

    run.exit_code = proc.returncode
    stderr_tail = _last_line("".join(stderr_chunks))
    if run.status == "candidate_crash" and stderr_tail:
        run.error_text = stderr_tail
    if run.status == "ok" and not completed:
        if proc.returncode != 0:
            run.mark_failed("candidate_crash", stderr_tail or f"exit code {proc.returncode}")
    if run.status == "ok" and run.evals_used == 0:
        run.mark_failed("empty_trace", "candidate finished without evaluating any point")
    return run


# ----- reference candidate --------------------------------------------------

# Protocol boilerplate shared by every generated program: it lets the same
# source run standalone (python file.py) and under an external shim that
# calls optimize() directly.
CANDIDATE_MAIN_STANZA = '''\
class BudgetExhausted(Exception):
    pass


def _protocol_main():
    import json
    import sys

    init = json.loads(sys.stdin.readline())
    if init.get("type") != "init":
        raise SystemExit(2)

    def objective(x):
        sys.stdout.write(json.dumps({"type": "ask", "x": [float(v) for v in x]}) + "\\n")
        sys.stdout.flush()
        reply = json.loads(sys.stdin.readline())
        if reply.get("type") == "stop":
            raise BudgetExhausted()
        return float(reply["y"])

    try:
        optimize(objective, init["dim"], init["budget"], init["lower"], init["upper"], init["seed"])
    except BudgetExhausted:
        pass
    else:
        sys.stdout.write(json.dumps({"type": "done"}) + "\\n")
        sys.stdout.flush()


if __name__ == "__main__":
    _protocol_main()
'''

REFERENCE_OPTIMIZER = '''\
import random


def optimize(objective, dim, budget, lower, upper, seed):
    rng = random.Random(seed)
    best_x = None
    best_y = None
    for _ in range(budget):
        x = [rng.uniform(lower, upper) for _ in range(dim)]
        y = objective(x)
        if best_y is None or y < best_y:
            best_x = list(x)
            best_y = y
    return best_x, best_y
'''

# The built-in random-search reference candidate, used for protocol
# self-tests and as the deterministic first program of offline runs.
REFERENCE_SOURCE = REFERENCE_OPTIMIZER + "\n\n" + CANDIDATE_MAIN_STANZA


def candidate_echo_main() -> int:
    """Speak the candidate side of the protocol on this process's stdio."""
    namespace: dict = {"__name__": "__main__"}
    exec(compile(REFERENCE_SOURCE, "<candidate-echo>", "exec"), namespace)
    return 0
