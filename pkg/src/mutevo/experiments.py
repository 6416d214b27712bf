"""Experiment plans over prompts and rates, plus report emission from run logs.

Reports are pure functions of the JSONL run logs: collect_run_logs() reads
them back from disk and the bundle builders recompute every number, so any
CSV can be regenerated (and audited) without rerunning a single candidate.
"""

from __future__ import annotations

import concurrent.futures
import json
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import metrics
from .evolution import (
    DynamicRate,
    EvolutionConfig,
    FixedRate,
    InitialGenerationError,
    clone_config,
    evolve,
)
from .llmclient import MutationEngine
from .promptbank import format_rate
from .seeding import derive_seed

logger = logging.getLogger(__name__)

EngineFactory = Callable[[EvolutionConfig], MutationEngine]

DEFAULT_RATES = (2.0, 5.0, 10.0, 20.0, 40.0)


def natural_key(text: str) -> tuple:
    """Sort helper so prompt2 comes before prompt10."""
    return tuple(int(token) if token.isdigit() else token for token in re.split(r"(\d+)", text))


def rate_key(rate: float) -> str:
    """Filesystem-safe tag for a rate: 2 -> x2, 2.5 -> x2p5."""
    return "x" + format_rate(rate).replace(".", "p")


# ----- plans ----------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentPlan:
    kind: str  # adherence | dynamic
    prompts: tuple[str, ...]
    output_dir: Path
    rates: tuple[float, ...] = DEFAULT_RATES
    beta: float = 1.5
    repeats: int = 3
    master_seed: int = 0
    workers: int = 1
    base: EvolutionConfig = field(default_factory=EvolutionConfig)

    def __post_init__(self) -> None:
        if self.kind not in ("adherence", "dynamic"):
            raise ValueError(f"plan kind must be adherence or dynamic, got {self.kind!r}")
        if not self.prompts:
            raise ValueError("plan needs at least one prompt id")
        if self.repeats < 1:
            raise ValueError(f"repeats must be positive, got {self.repeats}")
        if self.workers < 1:
            raise ValueError(f"workers must be positive, got {self.workers}")
        if self.kind == "adherence":
            if not self.rates:
                raise ValueError("adherence plan needs at least one rate")
            for rate in self.rates:
                if not (math.isfinite(rate) and 0 < rate < 100):
                    raise ValueError(f"rates must lie in (0, 100), got {rate!r}")
        if not (math.isfinite(self.beta) and self.beta > 0):
            raise ValueError(f"beta must be a positive finite real, got {self.beta!r}")


def planned_runs(plan: ExperimentPlan) -> list[EvolutionConfig]:
    """Expand a plan into one EvolutionConfig per run, with derived seeds and ids."""
    runs = []
    if plan.kind == "adherence":
        for prompt in plan.prompts:
            for rate in plan.rates:
                for repeat in range(plan.repeats):
                    runs.append(
                        clone_config(
                            plan.base,
                            prompt_id=prompt,
                            rate_policy=FixedRate(rate),
                            master_seed=derive_seed(
                                plan.master_seed, prompt, format_rate(rate), repeat
                            ),
                            run_id=f"{prompt}-{rate_key(rate)}-rep{repeat}",
                            repeat=repeat,
                        )
                    )
    else:
        beta_tag = format_rate(plan.beta).replace(".", "p")
        for prompt in plan.prompts:
            for repeat in range(plan.repeats):
                runs.append(
                    clone_config(
                        plan.base,
                        prompt_id=prompt,
                        rate_policy=DynamicRate(plan.beta),
                        master_seed=derive_seed(plan.master_seed, prompt, "dynamic", repeat),
                        run_id=f"{prompt}-dyn{beta_tag}-rep{repeat}",
                        repeat=repeat,
                    )
                )
    return runs


def execute_plan(plan: ExperimentPlan, engine_factory: EngineFactory) -> int:
    """Run every planned evolution into plan.output_dir; returns the abort count.

    A run whose very first program cannot be generated is recorded as a
    warning and excluded; it never takes the whole plan down.
    """

    def one_run(config: EvolutionConfig) -> tuple[str, str] | None:
        try:
            evolve(config, engine_factory(config), plan.output_dir)
            return None
        except InitialGenerationError as exc:
            return (config.run_id or "?", str(exc))

    runs = planned_runs(plan)
    if plan.workers > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=plan.workers) as pool:
            outcomes = list(pool.map(one_run, runs))
    else:
        outcomes = [one_run(config) for config in runs]
    aborted = [outcome for outcome in outcomes if outcome is not None]
    for run_id, reason in aborted:
        logger.warning("run %s aborted before producing a program: %s", run_id, reason)
    return len(aborted)


def run_adherence(plan: ExperimentPlan, engine_factory: EngineFactory) -> "ReportBundle":
    aborted = execute_plan(plan, engine_factory)
    bundle = build_adherence_bundle(collect_run_logs(plan.output_dir), beta=plan.beta)
    bundle.counts["aborted_runs"] = aborted
    return bundle


def run_dynamic(plan: ExperimentPlan, engine_factory: EngineFactory) -> "ReportBundle":
    aborted = execute_plan(plan, engine_factory)
    bundle = build_dynamic_bundle(collect_run_logs(plan.output_dir))
    bundle.counts["aborted_runs"] = aborted
    return bundle


# ----- log collection -------------------------------------------------------


@dataclass
class RunLog:
    run_id: str
    meta: dict
    records: list[dict]


def collect_run_logs(runs_dir: Path) -> list[RunLog]:
    """Read every run directory (meta.json + records.jsonl) under runs_dir."""
    root = Path(runs_dir)
    if not root.exists():
        raise FileNotFoundError(f"no such runs directory: {root}")
    candidates = [root] if (root / "records.jsonl").exists() else sorted(root.iterdir())
    logs = []
    for run_dir in candidates:
        records_path = run_dir / "records.jsonl"
        if not records_path.exists():
            continue
        meta_path = run_dir / "meta.json"
        meta = json.loads(meta_path.read_text(encoding="utf-8")) if meta_path.exists() else {}
        records = []
        with open(records_path, encoding="utf-8") as handle:
            for line in handle:
                if line.strip():
                    records.append(json.loads(line))
        records.sort(key=lambda record: record["gen"])
        logs.append(RunLog(run_id=meta.get("run_id", run_dir.name), meta=meta, records=records))
    if not logs:
        raise ValueError(f"no run logs found under {root}")
    return logs


# ----- bundles --------------------------------------------------------------


@dataclass
class ReportBundle:
    kind: str
    beta: float
    prompts: tuple[str, ...] = ()
    rates: tuple[float, ...] = ()
    mse_grid: dict[str, dict[float, float]] = field(default_factory=dict)
    tdw: dict[str, float] = field(default_factory=dict)
    diff_scatter: list[dict] = field(default_factory=list)
    convergence: dict[str, list[tuple[int, float, float]]] = field(default_factory=dict)
    codediff_trace: list[dict] = field(default_factory=list)
    counts: dict[str, int] = field(default_factory=dict)


def build_adherence_bundle(logs: Sequence[RunLog], beta: float) -> ReportBundle:
    """Pool delivered diffs per (prompt, rate) across repeats and score them."""
    fixed_logs = [log for log in logs if log.meta.get("rate_policy") == "fixed"]
    if not fixed_logs:
        raise ValueError("no fixed-rate runs found in the logs")
    pooled: dict[tuple[str, float], list[float]] = {}
    scatter: list[dict] = []
    children_total = 0
    children_excluded = 0
    zero_floored = 0
    for log in fixed_logs:
        prompt = log.meta.get("prompt_id", "?")
        repeat = int(log.meta.get("repeat", 0))
        for record in log.records:
            if record.get("parent_id") is None:
                continue
            children_total += 1
            if record.get("delivered_diff") is None:
                children_excluded += 1  # no parseable child: counted, not scored
                continue
            rate = float(record["requested_rate"])
            delivered = float(record["delivered_diff"])
            if delivered == 0.0:
                zero_floored += 1
            pooled.setdefault((prompt, rate), []).append(delivered)
            scatter.append(
                {
                    "prompt": prompt,
                    "rate": rate,
                    "repeat": repeat,
                    "gen": record["gen"],
                    "requested_rate": rate,
                    "delivered_diff": delivered,
                }
            )
    if not pooled:
        raise ValueError("the fixed-rate runs contain no scored children")
    prompts = tuple(sorted({prompt for prompt, _ in pooled}, key=natural_key))
    rates = tuple(sorted({rate for _, rate in pooled}))
    grid: dict[str, dict[float, float]] = {}
    tdw: dict[str, float] = {}
    for prompt in prompts:
        row = {}
        for rate in rates:
            diffs = pooled.get((prompt, rate))
            if diffs:
                row[rate] = metrics.mse(metrics.AdherenceSample(rate, tuple(diffs)))
        grid[prompt] = row
        tdw[prompt] = metrics.tdw_score(sorted(row.items()), beta)
    scatter.sort(key=lambda row: (natural_key(row["prompt"]), row["rate"], row["repeat"], row["gen"]))
    return ReportBundle(
        kind="adherence",
        beta=beta,
        prompts=prompts,
        rates=rates,
        mse_grid=grid,
        tdw=tdw,
        diff_scatter=scatter,
        counts={
            "children_total": children_total,
            "children_excluded": children_excluded,
            "zero_diffs_floored": zero_floored,
        },
    )


def build_dynamic_bundle(logs: Sequence[RunLog]) -> ReportBundle:
    """Incumbent-score convergence (mean +/- std across repeats) per prompt."""
    dynamic_logs = [log for log in logs if log.meta.get("rate_policy") == "dynamic"]
    if not dynamic_logs:
        raise ValueError("no dynamic-rate runs found in the logs")
    trajectories: dict[str, dict[int, list[float]]] = {}
    trace_rows: list[dict] = []
    children_total = 0
    children_excluded = 0
    for log in dynamic_logs:
        prompt = log.meta.get("prompt_id", "?")
        repeat = int(log.meta.get("repeat", 0))
        incumbent = None
        per_gen = trajectories.setdefault(prompt, {})
        for record in log.records:
            score = float(record.get("score") or 0.0)
            incumbent = score if incumbent is None else max(incumbent, score)
            per_gen.setdefault(int(record["gen"]), []).append(incumbent)
            if record.get("parent_id") is None:
                continue
            children_total += 1
            if record.get("delivered_diff") is None:
                children_excluded += 1
                continue
            trace_rows.append(
                {
                    "prompt": prompt,
                    "repeat": repeat,
                    "gen": record["gen"],
                    "requested_rate": float(record["requested_rate"]),
                    "delivered_diff": float(record["delivered_diff"]),
                }
            )
    prompts = tuple(sorted(trajectories, key=natural_key))
    convergence = {}
    beta = None
    for log in dynamic_logs:
        if log.meta.get("beta") is not None:
            beta = float(log.meta["beta"])
            break
    for prompt in prompts:
        series = []
        for gen in sorted(trajectories[prompt]):
            values = trajectories[prompt][gen]
            series.append((gen, float(np.mean(values)), float(np.std(values))))
        convergence[prompt] = series
    trace_rows.sort(key=lambda row: (natural_key(row["prompt"]), row["repeat"], row["gen"]))
    return ReportBundle(
        kind="dynamic",
        beta=beta if beta is not None else 1.5,
        prompts=prompts,
        convergence=convergence,
        codediff_trace=trace_rows,
        counts={"children_total": children_total, "children_excluded": children_excluded},
    )


def build_bundles(logs: Sequence[RunLog], beta: float = 1.5) -> list[ReportBundle]:
    """One bundle per run kind present in the logs."""
    bundles = []
    if any(log.meta.get("rate_policy") == "fixed" for log in logs):
        bundles.append(build_adherence_bundle(logs, beta))
    if any(log.meta.get("rate_policy") == "dynamic" for log in logs):
        bundles.append(build_dynamic_bundle(logs))
    if not bundles:
        raise ValueError("the logs contain neither fixed-rate nor dynamic runs")
    return bundles


# ----- emission -------------------------------------------------------------


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join("" if cell is None else str(cell) for cell in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def emit_adherence_reports(
    bundle: ReportBundle, out_dir: Path, include_scatter: bool = True
) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    header = ["prompt"] + [format_rate(rate) for rate in bundle.rates] + ["tdw"]
    rows = []
    for prompt in bundle.prompts:
        row = [prompt]
        for rate in bundle.rates:
            value = bundle.mse_grid.get(prompt, {}).get(rate)
            row.append(value)
        row.append(bundle.tdw.get(prompt))
        rows.append(row)
    written.append(_write_csv(out / "mse_grid.csv", header, rows))
    written.append(
        _write_csv(
            out / "tdw.csv",
            ["prompt", "tdw"],
            [[prompt, bundle.tdw.get(prompt)] for prompt in bundle.prompts],
        )
    )
    if include_scatter:
        written.append(
            _write_csv(
                out / "diff_scatter.csv",
                ["prompt", "rate", "repeat", "gen", "requested_rate", "delivered_diff"],
                [
                    [
                        row["prompt"],
                        format_rate(row["rate"]),
                        row["repeat"],
                        row["gen"],
                        row["requested_rate"],
                        row["delivered_diff"],
                    ]
                    for row in bundle.diff_scatter
                ],
            )
        )
    meta = {
        "kind": bundle.kind,
        "beta": bundle.beta,
        "mse_log_base": "natural",
        "zero_diff_floor_percent": metrics.ZERO_DIFF_FLOOR_PERCENT,
        "counts": bundle.counts,
    }
    meta_path = out / "adherence_meta.json"
    meta_path.write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    written.append(meta_path)
    return written


def emit_dynamic_reports(bundle: ReportBundle, out_dir: Path) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    rows = []
    for prompt in bundle.prompts:
        for gen, mean, std in bundle.convergence[prompt]:
            rows.append([prompt, gen, mean, std])
    written.append(_write_csv(out / "convergence.csv", ["prompt", "gen", "mean", "std"], rows))
    written.append(
        _write_csv(
            out / "codediff_trace.csv",
            ["prompt", "repeat", "gen", "requested_rate", "delivered_diff"],
            [
                [row["prompt"], row["repeat"], row["gen"], row["requested_rate"], row["delivered_diff"]]
                for row in bundle.codediff_trace
            ],
        )
    )
    svg_path = out / "convergence.svg"
    svg_path.write_text(render_convergence_svg(bundle.convergence), encoding="utf-8")
    written.append(svg_path)
    meta = {
        "kind": bundle.kind,
        "beta": bundle.beta,
        "counts": bundle.counts,
    }
    meta_path = out / "dynamic_meta.json"
    meta_path.write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    written.append(meta_path)
    return written


def emit_reports(bundles: Sequence[ReportBundle], out_dir: Path) -> list[Path]:
    written = []
    for bundle in bundles:
        if bundle.kind == "adherence":
            written.extend(emit_adherence_reports(bundle, out_dir))
        else:
            written.extend(emit_dynamic_reports(bundle, out_dir))
    return written


# ----- SVG ------------------------------------------------------------------

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#e377c2")


def render_convergence_svg(
    convergence: dict[str, list[tuple[int, float, float]]],
    width: int = 760,
    height: int = 480,
) -> str:
    """Self-contained line chart: incumbent score mean with a +/- std band."""
    if not convergence:
        raise ValueError("nothing to plot")
    margin_left, margin_right, margin_top, margin_bottom = 62, 20, 24, 48
    plot_w = width - margin_left - margin_right
    plot_h = height - margin_top - margin_bottom
    max_gen = max(gen for series in convergence.values() for gen, _, _ in series)

    def x_of(gen: int) -> float:
        if max_gen <= 1:
            return margin_left + plot_w / 2
        return margin_left + (gen - 1) / (max_gen - 1) * plot_w

    def y_of(value: float) -> float:
        clamped = min(1.0, max(0.0, value))
        return margin_top + (1.0 - clamped) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}"'
        f' viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
        '<g font-family="sans-serif" font-size="12" fill="#222222">',
    ]
    # axes
    x0, y0 = margin_left, margin_top + plot_h
    parts.append(
        f'<line x1="{x0}" y1="{margin_top}" x2="{x0}" y2="{y0}" stroke="#222222" stroke-width="1"/>'
    )
    parts.append(
        f'<line x1="{x0}" y1="{y0}" x2="{margin_left + plot_w}" y2="{y0}" stroke="#222222" stroke-width="1"/>'
    )
    for tick in range(0, 6):
        value = tick / 5
        y = y_of(value)
        parts.append(
            f'<line x1="{x0 - 4}" y1="{y:.2f}" x2="{x0}" y2="{y:.2f}" stroke="#222222" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{x0 - 8}" y="{y + 4:.2f}" text-anchor="end">{value:.1f}</text>'
        )
    tick_count = min(6, max_gen)
    for index in range(tick_count):
        gen = 1 + round(index * (max_gen - 1) / max(1, tick_count - 1))
        x = x_of(gen)
        parts.append(
            f'<line x1="{x:.2f}" y1="{y0}" x2="{x:.2f}" y2="{y0 + 4}" stroke="#222222" stroke-width="1"/>'
        )
        parts.append(f'<text x="{x:.2f}" y="{y0 + 18}" text-anchor="middle">{gen}</text>')
    parts.append(
        f'<text x="{margin_left + plot_w / 2:.2f}" y="{height - 10}" text-anchor="middle">generation</text>'
    )
    parts.append(
        f'<text x="16" y="{margin_top + plot_h / 2:.2f}" text-anchor="middle"'
        f' transform="rotate(-90 16 {margin_top + plot_h / 2:.2f})">incumbent score</text>'
    )
    # series
    for index, prompt in enumerate(sorted(convergence, key=natural_key)):
        color = _PALETTE[index % len(_PALETTE)]
        series = convergence[prompt]
        band_forward = " ".join(f"{x_of(gen):.2f},{y_of(mean - std):.2f}" for gen, mean, std in series)
        band_back = " ".join(
            f"{x_of(gen):.2f},{y_of(mean + std):.2f}" for gen, mean, std in reversed(series)
        )
        parts.append(
            f'<polygon points="{band_forward} {band_back}" fill="{color}" fill-opacity="0.15" stroke="none"/>'
        )
        line_points = " ".join(f"{x_of(gen):.2f},{y_of(mean):.2f}" for gen, mean, _ in series)
        parts.append(
            f'<polyline points="{line_points}" fill="none" stroke="{color}" stroke-width="1.8"/>'
        )
        legend_y = margin_top + 14 + index * 16
        legend_x = margin_left + plot_w - 150
        parts.append(
            f'<line x1="{legend_x}" y1="{legend_y - 4}" x2="{legend_x + 22}" y2="{legend_y - 4}"'
            f' stroke="{color}" stroke-width="1.8"/>'
        )
        parts.append(f'<text x="{legend_x + 28}" y="{legend_y}">{prompt}</text>')
    parts.append("</g>")
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
