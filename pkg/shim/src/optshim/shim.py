"""Run a generated optimizer source file as a stdio ask/tell candidate.

The harness speaks line-delimited JSON: one init message with the problem
shape, then a tell reply for every ask, and a stop message once the
evaluation budget is spent.  This module loads the candidate source in its
own process, hands its optimize() an objective that performs exactly one
ask/tell round-trip per call, and translates the outcome back into protocol
messages.  No objective value is ever computed locally and nothing is added
to the candidate's source; generated code is isolated here only by process
boundaries and the harness-side timeout.
"""

from __future__ import annotations

import importlib.machinery
import importlib.util
import json
import sys
from pathlib import Path
from typing import Sequence


class BudgetExhausted(Exception):
    """Raised into the candidate when the harness sends stop."""


def _emit(message: dict) -> None:
    try:
        sys.stdout.write(json.dumps(message) + "\n")
        sys.stdout.flush()
    except OSError:
        pass  # harness hung up; the exit code still tells the story


def _fail(text: str) -> int:
    _emit({"type": "error", "message": text})
    print(f"optshim: {text}", file=sys.stderr)
    return 1


def _load_candidate(source_path: Path):
    # Generated sources arrive with arbitrary extensions (.txt in run logs),
    # so name the loader explicitly instead of inferring it from the suffix.
    loader = importlib.machinery.SourceFileLoader("candidate", str(source_path))
    spec = importlib.util.spec_from_loader("candidate", loader, origin=str(source_path))
    if spec is None:
        raise ImportError(f"cannot load {source_path}")
    module = importlib.util.module_from_spec(spec)
    loader.exec_module(module)
    return module


def run_shim(source_path: str | Path) -> int:
    """Drive one candidate run; returns the process exit status.

    0: budget spent or optimize returned cleanly.  1: the candidate failed
    to load, lacks optimize(), or raised.  2: the init message was malformed.
    """
    try:
        init = json.loads(sys.stdin.readline())
        if init.get("type") != "init":
            raise ValueError(f"expected an init message, got {init.get('type')!r}")
        dim = int(init["dim"])
        budget = int(init["budget"])
        lower = float(init["lower"])
        upper = float(init["upper"])
        seed = init["seed"]
    except (ValueError, KeyError, TypeError, AttributeError) as exc:
        print(f"optshim: malformed init message: {exc}", file=sys.stderr)
        return 2

    try:
        module = _load_candidate(Path(source_path))
    except SystemExit as exc:
        return _fail(f"candidate exited during import: {exc.code!r}")
    except Exception as exc:
        return _fail(f"candidate failed to load: {type(exc).__name__}: {exc}")

    optimize = getattr(module, "optimize", None)
    if not callable(optimize):
        return _fail("candidate defines no optimize() entry point")

    # Sources written against the embedded protocol stanza catch their own
    # module's BudgetExhausted, so raise that class when the module has one.
    signal = getattr(module, "BudgetExhausted", None)
    if not (isinstance(signal, type) and issubclass(signal, BaseException)):
        signal = BudgetExhausted

    stopped = False

    def objective(x):
        nonlocal stopped
        if stopped:
            raise signal()
        _emit({"type": "ask", "x": [float(v) for v in x]})
        reply = json.loads(sys.stdin.readline())
        if reply.get("type") == "stop":
            stopped = True
            raise signal()
        return float(reply["y"])

    try:
        optimize(objective, dim, budget, lower, upper, seed)
    except signal:
        return 0
    except Exception as exc:
        return _fail(f"{type(exc).__name__}: {exc}")
    if not stopped:
        _emit({"type": "done"})
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    args = sys.argv[1:] if argv is None else list(argv)
    if len(args) != 1:
        print("usage: optshim <source-file>", file=sys.stderr)
        return 2
    return run_shim(args[0])
