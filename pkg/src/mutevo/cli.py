"""Command-line interface.

Exit codes: 0 on success, 1 on usage errors, 2 on runtime failures.
"""

from __future__ import annotations

import argparse
import logging
import random
import sys
from pathlib import Path

from . import benchsuite, codediff, experiments, llmclient, powerlaw, promptbank
from .config import LoadedConfig, load_config
from .evolution import EvolutionConfig, evolve
from .experiments import EngineFactory
from .seeding import derive_seed

BACKENDS = ("live", "mock", "sloppy", "replay")


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage by default; this tool reserves 2 for
    # runtime failures, so usage problems exit 1 instead.
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def make_engine_factory(
    backend: str,
    transcript: Path | None = None,
    replay_from: Path | None = None,
) -> EngineFactory:
    if backend == "live":
        return lambda config: llmclient.LiveEngine(config.model)
    if backend == "mock":
        return lambda config: llmclient.MockEngine(
            seed=derive_seed(config.master_seed, "mock-engine"),
            model_name=config.model.model_name,
        )
    if backend == "sloppy":
        return lambda config: llmclient.MockEngine(
            seed=derive_seed(config.master_seed, "mock-engine"),
            model_name=config.model.model_name,
            sloppy=True,
        )
    if backend == "replay":
        if transcript is not None:
            return lambda config: llmclient.ReplayEngine.from_transcript(transcript)
        if replay_from is not None:
            return lambda config: llmclient.ReplayEngine.from_transcript(
                Path(replay_from) / (config.run_id or "") / "transcript.jsonl"
            )
        raise ValueError("replay backend needs --transcript or --replay-from")
    raise ValueError(f"unknown backend {backend!r}")


# ----- handlers -------------------------------------------------------------


def cmd_sample(args) -> int:
    config = powerlaw.PowerLawConfig(beta=args.beta, n=args.n)
    rng = random.Random(args.seed)
    for _ in range(args.count):
        print(powerlaw.sample_rate_percent(config, rng))
    return 0


def cmd_diff(args) -> int:
    parent = codediff.normalize(Path(args.parent).read_text(encoding="utf-8"))
    child = codediff.normalize(Path(args.child).read_text(encoding="utf-8"))
    print(codediff.diff_percent(parent, child))
    return 0


def cmd_score(args) -> int:
    logs = experiments.collect_run_logs(Path(args.runs))
    bundle = experiments.build_adherence_bundle(logs, beta=args.beta)
    out_dir = Path(args.out) if args.out else Path(args.runs)
    written = experiments.emit_adherence_reports(bundle, out_dir, include_scatter=False)
    grid_path = next(path for path in written if path.name == "mse_grid.csv")
    sys.stdout.write(grid_path.read_text(encoding="utf-8"))
    return 0


def cmd_report(args) -> int:
    logs = experiments.collect_run_logs(Path(args.runs))
    bundles = experiments.build_bundles(logs, beta=args.beta)
    written = experiments.emit_reports(bundles, Path(args.out))
    for path in written:
        print(path)
    return 0


def _load(args) -> LoadedConfig:
    return load_config(Path(args.config) if args.config else None, args.set or ())


def cmd_evolve(args) -> int:
    loaded = _load(args)
    if loaded.kind != "evolve" or loaded.evolve_config is None:
        raise ValueError("the config file must declare plan kind = evolve for this command")
    config: EvolutionConfig = loaded.evolve_config
    factory = make_engine_factory(
        args.backend,
        transcript=Path(args.transcript) if args.transcript else None,
        replay_from=Path(args.replay_from) if args.replay_from else None,
    )
    output_dir = Path(args.out) if args.out else loaded.output_dir
    result = evolve(config, factory(config), output_dir)
    best = result.best
    print(f"run dir: {result.run_dir}")
    print(f"best: instance {best.instance_id} score {best.score}")
    return 0


def _run_plan(args, kind: str) -> int:
    loaded = _load(args)
    plan = loaded.plan
    if plan is None or plan.kind != kind:
        raise ValueError(f"the config file must declare plan kind = {kind} for this command")
    if args.out:
        plan = experiments.ExperimentPlan(
            kind=plan.kind,
            prompts=plan.prompts,
            output_dir=Path(args.out),
            rates=plan.rates,
            beta=plan.beta,
            repeats=plan.repeats,
            master_seed=plan.master_seed,
            workers=plan.workers,
            base=plan.base,
        )
    factory = make_engine_factory(
        args.backend,
        replay_from=Path(args.replay_from) if args.replay_from else None,
    )
    runner = experiments.run_adherence if kind == "adherence" else experiments.run_dynamic
    bundle = runner(plan, factory)
    report_dir = Path(args.reports) if args.reports else plan.output_dir / "reports"
    written = experiments.emit_reports([bundle], report_dir)
    for path in written:
        print(path)
    return 0


def cmd_adherence(args) -> int:
    return _run_plan(args, "adherence")


def cmd_dynamic(args) -> int:
    return _run_plan(args, "dynamic")


def cmd_gen_prompts(args) -> int:
    meta = promptbank.bank_by_id(promptbank.builtin_bank())["meta"]
    rendered = promptbank.render(meta, model_name=args.model)
    if args.backend == "live":
        loaded = _load(args)
        model = (loaded.evolve_config or loaded.plan.base).model
        exchange = llmclient.complete(model, [{"role": "user", "content": rendered.text}])
        print(exchange.response_text)
    else:
        print(rendered.text)
    return 0


def cmd_candidate_echo(args) -> int:
    return benchsuite.candidate_echo_main()


# ----- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mutevo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sample", help="draw mutation rates from the power-law distribution")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--n", type=int, required=True, help="program line count")
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("diff", help="percent line difference between two source files")
    p.add_argument("parent")
    p.add_argument("child")
    p.set_defaults(handler=cmd_diff)

    p = sub.add_parser("score", help="MSE/TDW adherence grid from run logs")
    p.add_argument("--runs", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--beta", type=float, default=1.5)
    p.set_defaults(handler=cmd_score)

    p = sub.add_parser("report", help="regenerate all CSV/SVG reports from run logs")
    p.add_argument("--runs", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--beta", type=float, default=1.5)
    p.set_defaults(handler=cmd_report)

    p = sub.add_parser("evolve", help="run one evolution loop")
    p.add_argument("--config", required=True)
    p.add_argument("--backend", choices=BACKENDS, default="mock")
    p.add_argument("--out", default=None)
    p.add_argument("--transcript", default=None, help="transcript file for --backend replay")
    p.add_argument("--replay-from", default=None, help="runs directory holding transcripts")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    p.set_defaults(handler=cmd_evolve)

    p = sub.add_parser("adherence", help="fixed-rate grid over prompts x rates x repeats")
    p.add_argument("--config", required=True)
    p.add_argument("--backend", choices=BACKENDS, default="mock")
    p.add_argument("--out", default=None)
    p.add_argument("--reports", default=None)
    p.add_argument("--replay-from", default=None)
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    p.set_defaults(handler=cmd_adherence)

    p = sub.add_parser("dynamic", help="dynamic-rate runs over prompts x repeats")
    p.add_argument("--config", required=True)
    p.add_argument("--backend", choices=BACKENDS, default="mock")
    p.add_argument("--out", default=None)
    p.add_argument("--reports", default=None)
    p.add_argument("--replay-from", default=None)
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    p.set_defaults(handler=cmd_dynamic)

    p = sub.add_parser("gen-prompts", help="render (or send) the prompt-engineering meta-prompt")
    p.add_argument("--model", required=True, help="model name to address in the meta-prompt")
    p.add_argument("--backend", choices=("none", "live"), default="none")
    p.add_argument("--config", default=None)
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE")
    p.set_defaults(handler=cmd_gen_prompts)

    p = sub.add_parser("candidate-echo", help="speak the candidate protocol on stdio")
    p.set_defaults(handler=cmd_candidate_echo)

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except KeyboardInterrupt:
        return 2
    except Exception as exc:  # runtime failures exit 2, with a one-line reason
        print(f"mutevo: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
