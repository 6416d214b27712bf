"""(1+1) elitist evolution of optimizer programs.

Each generation: pick a mutation rate (fixed, or drawn from the power law
over the parent's line count), render the mutation prompt, ask the backend
for a child, measure the delivered line diff, evaluate the child on the
benchmark subset, and keep it only if it strictly beats the parent.  Failed
children score 0 and never abort the run; the loop always spends exactly its
generation budget.
"""

from __future__ import annotations

import dataclasses
import json
import math
import random
import shlex
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from . import benchsuite, codediff, llmclient, metrics, promptbank
from .powerlaw import PowerLawConfig, sample_alpha
from .seeding import derive_seed


# ----- configuration --------------------------------------------------------


@dataclass(frozen=True)
class FixedRate:
    rate_percent: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.rate_percent) and 0 < self.rate_percent < 100):
            raise ValueError(f"fixed rate must lie in (0, 100), got {self.rate_percent!r}")

    @property
    def label(self) -> str:
        return f"fixed:{promptbank.format_rate(self.rate_percent)}"


@dataclass(frozen=True)
class DynamicRate:
    beta: float = 1.5

    def __post_init__(self) -> None:
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"beta must be a positive finite real, got {self.beta!r}")

    @property
    def label(self) -> str:
        return f"dynamic:{promptbank.format_rate(self.beta)}"


RatePolicy = FixedRate | DynamicRate


@dataclass(frozen=True)
class EvolutionConfig:
    prompt_id: str = "prompt5"
    rate_policy: RatePolicy = DynamicRate(1.5)
    model: llmclient.ModelConfig = field(default_factory=llmclient.ModelConfig)
    generation_budget: int = 100
    eval_budget: int = 1000
    problems: tuple[str, ...] = benchsuite.FUNCTION_IDS
    instance_seeds: tuple[int, ...] = (1, 2, 3)
    eval_repeats: int = 3
    dim: int = 5
    precision_bounds: tuple[float, float] = metrics.DEFAULT_PRECISION_BOUNDS
    candidate_timeout_s: float = 60.0
    runner: str = "{python} {source}"
    master_seed: int = 0
    run_id: str | None = None
    prompt_file: Path | None = None
    repeat: int = 0  # position within a multi-repeat plan, recorded for reports

    def __post_init__(self) -> None:
        if self.generation_budget < 2:
            raise ValueError(f"generation budget must be at least 2, got {self.generation_budget}")
        if self.eval_budget < 1:
            raise ValueError(f"eval budget must be positive, got {self.eval_budget}")
        if not self.problems:
            raise ValueError("need at least one benchmark function")
        if not self.instance_seeds:
            raise ValueError("need at least one instance seed")
        if self.eval_repeats < 1:
            raise ValueError(f"eval repeats must be positive, got {self.eval_repeats}")
        if "{source}" not in self.runner:
            raise ValueError("runner template must contain the {source} placeholder")


# ----- run data -------------------------------------------------------------


@dataclass
class CodeInstance:
    instance_id: int
    parent_id: int | None
    source: codediff.SourceText | None
    requested_rate: float | None
    delivered_diff: float | None
    score: float | None
    status: str  # ok | extract_failed | run_failed | timeout
    error_text: str | None = None


RUN_RECORD_FIELDS = (
    "run_id",
    "gen",
    "parent_id",
    "prompt_id",
    "requested_rate",
    "delivered_diff",
    "score",
    "accepted",
    "status",
    "error_text",
    "rate_policy",
    "seed",
)


@dataclass(frozen=True)
class RunRecord:
    run_id: str
    gen: int
    parent_id: int | None
    prompt_id: str
    requested_rate: float | None
    delivered_diff: float | None
    score: float
    accepted: bool
    status: str
    error_text: str | None
    rate_policy: str
    seed: int

    def to_json(self) -> str:
        return json.dumps({name: getattr(self, name) for name in RUN_RECORD_FIELDS})


@dataclass
class EvolutionResult:
    best: CodeInstance
    records: list[RunRecord]
    run_dir: Path


class InitialGenerationError(RuntimeError):
    """The backend never produced a usable first program."""


# ----- helpers --------------------------------------------------------------


def select(parent: CodeInstance, child: CodeInstance) -> CodeInstance:
    """Strict-improvement selection: ties keep the parent."""
    if parent.score is None or child.score is None:
        raise ValueError("both instances must be scored before selection")
    return child if child.score > parent.score else parent


def build_mutation_messages(
    parent: CodeInstance,
    rendered: promptbank.RenderedPrompt,
    last_error: str | None = None,
) -> list[llmclient.Message]:
    """System prompt is the fixed task statement; the user turn carries the
    parent source verbatim, the rendered mutation instruction, and a one-line
    summary of the previous child's failure if there was one."""
    if parent.source is None:
        raise ValueError("parent has no source to mutate")
    raw = parent.source.raw
    if not raw.endswith("\n"):
        raw += "\n"
    user = (
        f"The current solution is:\n\n```python\n{raw}```\n\n{rendered.text}"
    )
    if last_error:
        user += f"\n\nNote: the previous attempt failed ({last_error})."
    return [
        {"role": "system", "content": promptbank.TASK_PROMPT},
        {"role": "user", "content": user},
    ]


def build_runner_command(runner: str, source_path: Path) -> list[str]:
    parts = shlex.split(runner)
    return [
        part.replace("{python}", sys.executable).replace("{source}", str(source_path))
        for part in parts
    ]


def _one_line(text: str, limit: int = 200) -> str:
    first = text.strip().split("\n", 1)[0]
    return first[:limit]


def _load_bank(config: EvolutionConfig) -> dict[str, promptbank.PromptTemplate]:
    bank = dict(promptbank.bank_by_id(promptbank.builtin_bank()))
    if config.prompt_file is not None:
        for template in promptbank.load_prompt_file(config.prompt_file):
            bank[template.id] = template
    return bank


def _append_jsonl(path: Path, payload: str) -> None:
    with open(path, "a", encoding="utf-8") as handle:
        handle.write(payload + "\n")


# ----- evaluation -----------------------------------------------------------


def _evaluate_instance(
    config: EvolutionConfig, gen: int, source_path: Path, evals_path: Path
) -> tuple[float, str, str | None]:
    """Run the candidate on every (function, instance, repeat) combination.

    Returns (score, status, error_text).  The first failed run zeroes the
    instance and stops further evaluation; its per-run rows are appended to
    the eval log either way.
    """
    command = build_runner_command(config.runner, source_path)
    traces = []
    failure: benchsuite.BudgetedRun | None = None
    failure_context = ""
    for function_id in config.problems:
        for instance_seed in config.instance_seeds:
            for repeat in range(config.eval_repeats):
                problem = benchsuite.make_problem(function_id, config.dim, instance_seed)
                candidate_seed = derive_seed(
                    config.master_seed, "candidate", gen, function_id, instance_seed, repeat
                ) % (2**31)
                run = benchsuite.run_candidate(
                    command,
                    problem,
                    config.eval_budget,
                    config.candidate_timeout_s,
                    seed=candidate_seed,
                    precision_bounds=config.precision_bounds,
                )
                _append_jsonl(
                    evals_path,
                    json.dumps(
                        {
                            "gen": gen,
                            "function": function_id,
                            "instance_seed": instance_seed,
                            "repeat": repeat,
                            "status": run.status,
                            "evals_used": run.evals_used,
                            "out_of_bounds": run.out_of_bounds,
                            "aocc": metrics.aocc(run.trace()) if run.best_so_far else None,
                            "exit_code": run.exit_code,
                            "error_text": run.error_text,
                            "seed": candidate_seed,
                        }
                    ),
                )
                if run.failed:
                    failure = run
                    failure_context = f"{function_id}/i{instance_seed}/r{repeat}"
                    break
                traces.append(run.trace())
            if failure:
                break
        if failure:
            break
    if failure is not None:
        status = "timeout" if failure.status == "timeout" else "run_failed"
        detail = _one_line(failure.error_text or failure.status)
        return 0.0, status, f"{failure_context}: {detail}"
    return metrics.mean_aocc(traces), "ok", None


# ----- the loop -------------------------------------------------------------


def evolve(
    config: EvolutionConfig,
    engine: llmclient.MutationEngine,
    output_dir: Path,
) -> EvolutionResult:
    """Run the full budget of generations and return the incumbent."""
    run_id = config.run_id or "run-{:010d}".format(
        derive_seed("run", config.master_seed, config.prompt_id, config.rate_policy.label)
        % 10**10
    )
    run_dir = Path(output_dir) / run_id
    code_dir = run_dir / "code"
    code_dir.mkdir(parents=True, exist_ok=True)
    records_path = run_dir / "records.jsonl"
    transcript_path = run_dir / "transcript.jsonl"
    evals_path = run_dir / "evals.jsonl"
    for path in (records_path, transcript_path, evals_path):
        path.unlink(missing_ok=True)

    bank = _load_bank(config)
    if config.prompt_id not in bank:
        raise ValueError(f"unknown prompt id {config.prompt_id!r}")
    template = bank[config.prompt_id]

    _write_meta(config, engine, run_id, run_dir)
    rate_rng = random.Random(derive_seed(config.master_seed, "rates"))
    records: list[RunRecord] = []

    def log_exchange(step: int, exchange: llmclient.ChatExchange) -> None:
        llmclient.append_transcript(
            transcript_path,
            {
                "run_id": run_id,
                "step": step,
                "backend": exchange.backend,
                "model": exchange.model,
                "request_messages": list(exchange.request_messages),
                "response_text": exchange.response_text,
                "token_usage": exchange.token_usage,
                "latency_s": exchange.latency_s,
            },
        )

    def record_instance(instance: CodeInstance, accepted: bool) -> None:
        record = RunRecord(
            run_id=run_id,
            gen=instance.instance_id,
            parent_id=instance.parent_id,
            prompt_id="generation" if instance.parent_id is None else config.prompt_id,
            requested_rate=instance.requested_rate,
            delivered_diff=instance.delivered_diff,
            score=instance.score if instance.score is not None else 0.0,
            accepted=accepted,
            status=instance.status,
            error_text=instance.error_text,
            rate_policy=config.rate_policy.label,
            seed=config.master_seed,
        )
        records.append(record)
        _append_jsonl(records_path, record.to_json())

    def write_source(gen: int, source: codediff.SourceText) -> Path:
        raw = source.raw if source.raw.endswith("\n") else source.raw + "\n"
        path = code_dir / f"{gen}.txt"
        path.write_text(raw, encoding="utf-8")
        return path

    # --- instance 1: generate a fresh program, retrying a few times ---
    generation_messages = [{"role": "user", "content": promptbank.TASK_PROMPT}]
    source: codediff.SourceText | None = None
    generation_error = "no attempt made"
    for _ in range(3):
        try:
            exchange = engine.generate(generation_messages)
            log_exchange(1, exchange)
            candidate = llmclient.extract_code(exchange.response_text)
            if not candidate.lines:
                raise llmclient.CodeExtractionError("extracted source is empty")
            source = candidate
            break
        except llmclient.LLMError as exc:
            generation_error = f"{type(exc).__name__}: {_one_line(str(exc))}"
    if source is None:
        raise InitialGenerationError(generation_error)

    source_path = write_source(1, source)
    score, status, error_text = _evaluate_instance(config, 1, source_path, evals_path)
    parent = CodeInstance(
        instance_id=1,
        parent_id=None,
        source=source,
        requested_rate=None,
        delivered_diff=None,
        score=score,
        status=status,
        error_text=error_text,
    )
    record_instance(parent, accepted=True)
    last_error: str | None = None

    # --- generations 2..budget: mutate, evaluate, select ---
    for gen in range(2, config.generation_budget + 1):
        child = _spawn_child(
            gen, parent, config, engine, template, rate_rng,
            log_exchange, write_source, evals_path, last_error,
        )
        record_instance(child, accepted=child.score is not None and child.score > parent.score)
        parent = select(parent, child)
        last_error = child.error_text if child.status != "ok" else None

    return EvolutionResult(best=parent, records=records, run_dir=run_dir)


def _spawn_child(
    gen: int,
    parent: CodeInstance,
    config: EvolutionConfig,
    engine: llmclient.MutationEngine,
    template: promptbank.PromptTemplate,
    rate_rng: random.Random,
    log_exchange,
    write_source,
    evals_path: Path,
    last_error: str | None,
) -> CodeInstance:
    assert parent.source is not None
    n = codediff.line_count(parent.source)

    def failed_child(rate: float | None, message: str) -> CodeInstance:
        return CodeInstance(
            instance_id=gen,
            parent_id=parent.instance_id,
            source=None,
            requested_rate=rate,
            delivered_diff=None,
            score=0.0,
            status="extract_failed",
            error_text=message,
        )

    if isinstance(config.rate_policy, FixedRate):
        rate = config.rate_policy.rate_percent
    else:
        if n < 2:
            return failed_child(None, f"parent has {n} line(s); need at least 2 to sample a rate")
        rate = 100.0 * sample_alpha(PowerLawConfig(config.rate_policy.beta, n), rate_rng) / n

    rendered = promptbank.render(
        template, rate_percent=rate, source=parent.source, model_name=config.model.model_name
    )
    messages = build_mutation_messages(parent, rendered, last_error)
    try:
        exchange = engine.mutate(messages, parent.source, rate)
    except llmclient.LLMError as exc:
        return failed_child(rate, f"generation failed: {type(exc).__name__}: {_one_line(str(exc))}")
    log_exchange(gen, exchange)
    try:
        source = llmclient.extract_code(exchange.response_text)
        if not source.lines:
            raise llmclient.CodeExtractionError("extracted source is empty")
    except llmclient.CodeExtractionError as exc:
        return failed_child(rate, str(exc))

    delivered = codediff.diff_percent(parent.source, source)
    source_path = write_source(gen, source)
    score, status, error_text = _evaluate_instance(config, gen, source_path, evals_path)
    return CodeInstance(
        instance_id=gen,
        parent_id=parent.instance_id,
        source=source,
        requested_rate=rate,
        delivered_diff=delivered,
        score=score,
        status=status,
        error_text=error_text,
    )


def _write_meta(
    config: EvolutionConfig, engine: llmclient.MutationEngine, run_id: str, run_dir: Path
) -> None:
    policy = config.rate_policy
    meta = {
        "run_id": run_id,
        "prompt_id": config.prompt_id,
        "rate_policy": "fixed" if isinstance(policy, FixedRate) else "dynamic",
        "rate_percent": policy.rate_percent if isinstance(policy, FixedRate) else None,
        "beta": policy.beta if isinstance(policy, DynamicRate) else None,
        "repeat": config.repeat,
        "master_seed": config.master_seed,
        "generation_budget": config.generation_budget,
        "eval_budget": config.eval_budget,
        "problems": list(config.problems),
        "dim": config.dim,
        "instance_seeds": list(config.instance_seeds),
        "eval_repeats": config.eval_repeats,
        "precision_bounds": list(config.precision_bounds),
        "candidate_timeout_s": config.candidate_timeout_s,
        "runner": config.runner,
        "backend": engine.backend,
        "model_name": engine.model,
        "temperature": config.model.temperature,
        "error_feedback": "last child failure is quoted in the next mutation message",
        "mse_log_base": "natural",
        "zero_diff_floor_percent": metrics.ZERO_DIFF_FLOOR_PERCENT,
        "line_normalization": "split on newline, strip trailing whitespace, drop empty lines",
        "code_extraction": "last fenced block",
    }
    (run_dir / "meta.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")


def clone_config(config: EvolutionConfig, **overrides) -> EvolutionConfig:
    return dataclasses.replace(config, **overrides)
