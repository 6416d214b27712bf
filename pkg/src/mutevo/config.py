"""Experiment configuration files.

A single INI-style file configures everything; sections are [plan], [evolve],
[model], [benchmark], and [aocc], and every key has a default mirroring the
reference setup (rates 2/5/10/20/40, beta 1.5, 3 repeats fixed and 5 dynamic,
generation budget 100, dimension 5, 3 problem instances).  Any value can be
overridden on the command line with --set section.key=value.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import benchsuite
from .evolution import DynamicRate, EvolutionConfig, FixedRate
from .experiments import DEFAULT_RATES, ExperimentPlan
from .llmclient import ModelConfig

KINDS = ("adherence", "dynamic", "evolve")

DEFAULT_ADHERENCE_PROMPTS = tuple(f"prompt{i}" for i in range(1, 12))
DEFAULT_DYNAMIC_PROMPTS = ("baseline", "prompt5")


@dataclass
class LoadedConfig:
    kind: str
    output_dir: Path
    plan: ExperimentPlan | None  # adherence / dynamic plans
    evolve_config: EvolutionConfig | None  # single-run kind


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(token) for token in text.replace(",", " ").split())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(token) for token in text.replace(",", " ").split())


def _names(text: str) -> tuple[str, ...]:
    return tuple(token for token in text.replace(",", " ").split())


def apply_overrides(parser: configparser.ConfigParser, overrides: Sequence[str]) -> None:
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ValueError(f"--set expects section.key=value, got {item!r}")
        dotted, value = item.split("=", 1)
        section, key = dotted.split(".", 1)
        if not parser.has_section(section):
            parser.add_section(section)
        parser.set(section.strip(), key.strip(), value.strip())


def load_config(path: Path | None, overrides: Sequence[str] = ()) -> LoadedConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    if path is not None:
        read = parser.read(Path(path), encoding="utf-8")
        if not read:
            raise FileNotFoundError(f"no such config file: {path}")
    apply_overrides(parser, overrides)

    def get(section: str, key: str, default: str) -> str:
        return parser.get(section, key, fallback=default)

    kind = get("plan", "kind", "evolve").strip().lower()
    if kind not in KINDS:
        raise ValueError(f"plan kind must be one of {KINDS}, got {kind!r}")

    model = ModelConfig(
        model_name=get("model", "model_name", "mock-mutator"),
        endpoint_url=get("model", "endpoint_url", ""),
        temperature=float(get("model", "temperature", "1.0")),
        max_retries=int(get("model", "max_retries", "3")),
        timeout_s=float(get("model", "timeout_s", "60")),
        api_key_env=get("model", "api_key_env", "MUTEVO_API_KEY"),
    )
    prompt_file = get("plan", "prompt_file", "").strip()
    base = EvolutionConfig(
        prompt_id=get("evolve", "prompt", "prompt5"),
        rate_policy=_rate_policy(parser),
        model=model,
        generation_budget=int(get("plan", "generation_budget", "100")),
        eval_budget=int(get("benchmark", "eval_budget", "1000")),
        problems=_names(get("benchmark", "functions", " ".join(benchsuite.FUNCTION_IDS))),
        instance_seeds=_ints(get("benchmark", "instance_seeds", "1 2 3")),
        eval_repeats=int(get("benchmark", "eval_repeats", "3")),
        dim=int(get("benchmark", "dim", "5")),
        precision_bounds=(
            float(get("aocc", "lower", "1e-8")),
            float(get("aocc", "upper", "1e2")),
        ),
        candidate_timeout_s=float(get("benchmark", "candidate_timeout_s", "60")),
        runner=get("benchmark", "runner", "{python} {source}"),
        master_seed=int(get("plan", "master_seed", "0")),
        run_id=get("evolve", "run_id", "").strip() or None,
        prompt_file=Path(prompt_file) if prompt_file else None,
    )

    output_dir = Path(get("plan", "output_dir", "runs"))
    if kind == "evolve":
        return LoadedConfig(kind=kind, output_dir=output_dir, plan=None, evolve_config=base)

    default_prompts = DEFAULT_ADHERENCE_PROMPTS if kind == "adherence" else DEFAULT_DYNAMIC_PROMPTS
    default_repeats = "3" if kind == "adherence" else "5"
    plan = ExperimentPlan(
        kind=kind,
        prompts=_names(get("plan", "prompts", " ".join(default_prompts))),
        output_dir=output_dir,
        rates=_floats(get("plan", "rates", " ".join(str(r) for r in DEFAULT_RATES))),
        beta=float(get("plan", "beta", "1.5")),
        repeats=int(get("plan", "repeats", default_repeats)),
        master_seed=int(get("plan", "master_seed", "0")),
        workers=int(get("plan", "workers", "1")),
        base=base,
    )
    return LoadedConfig(kind=kind, output_dir=output_dir, plan=plan, evolve_config=None)


def _rate_policy(parser: configparser.ConfigParser):
    policy = parser.get("evolve", "rate_policy", fallback="dynamic").strip().lower()
    # Accept the compact label form too ("fixed:10", "dynamic:1.5"), matching
    # what run metadata records.
    name, _, arg = policy.partition(":")
    if name == "fixed":
        rate = arg or parser.get("evolve", "fixed_rate", fallback="10")
        return FixedRate(float(rate))
    if name == "dynamic":
        beta = arg or parser.get("evolve", "beta", fallback="1.5")
        return DynamicRate(float(beta))
    raise ValueError(f"rate_policy must be fixed or dynamic, got {policy!r}")
