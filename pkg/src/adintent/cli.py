"""Command-line interface.

Subcommands: gen-data, fit-hmm, train, evaluate, interpret, sweep. Each
reads the flat key-value config (defaults apply when no file is given) and
writes CSV tables plus rendered figures under the experiment directory:

    out/
      dataset/    train/test JSONL, hidden-path oracle files, manifest
      model/      fitted intent model, fit report, fit curves
      agents/     checkpoints and training curves
      eval/       paired metrics, belief logs, metrics figure
      interpret/  expectation/transition/cluster tables and figures
      sweep/      grid results and heatmap

Exit codes: 0 success, 2 configuration error, 3 numeric fault.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .agents import AGENT_KINDS
from .config import ConfigError, load_config
from .dataio import load_model
from .errors import NumericFaultError
from .harness import (
    evaluate_agents,
    fit_intent_model,
    generate_dataset,
    interpret_model,
    load_agent,
    sweep,
    train_agents,
)


def _add_common(sub):
    sub.add_argument("--config", type=Path, default=None, help="flat key-value config file")
    sub.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub.add_argument("--out", type=Path, required=True, help="experiment directory")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adintent",
        description="latent-intent sequential advertising toolkit")
    commands = parser.add_subparsers(dest="command", required=True)

    gen = commands.add_parser("gen-data", help="roll out behavior-mix episodes")
    _add_common(gen)

    fit = commands.add_parser("fit-hmm", help="fit the intent model by EM restarts")
    _add_common(fit)
    fit.add_argument("--data", type=Path, default=None,
                     help="dataset directory (default OUT/dataset)")
    fit.add_argument("--em-restarts", type=int, default=None,
                     help="override em.restarts")

    train = commands.add_parser("train", help="train agents with trajectory replay")
    _add_common(train)
    train.add_argument("--model", type=Path, default=None,
                       help="fitted model JSON (default OUT/model/model.json)")
    train.add_argument("--agents", type=str, default=",".join(AGENT_KINDS),
                       help="comma-separated agent kinds")

    ev = commands.add_parser("evaluate", help="paired greedy evaluation")
    _add_common(ev)
    ev.add_argument("--agents", type=str, default=",".join(AGENT_KINDS),
                    help="comma-separated agent kinds")

    interp = commands.add_parser("interpret", help="interpretability report")
    _add_common(interp)
    interp.add_argument("--model", type=Path, default=None,
                        help="fitted model JSON (default OUT/model/model.json)")
    interp.add_argument("--log", type=Path, default=None,
                        help="belief eval log (default OUT/eval/eval_log_disa.jsonl)")

    sw = commands.add_parser("sweep", help="discount x vector-count grid")
    _add_common(sw)
    sw.add_argument("--model", type=Path, default=None,
                    help="fitted model JSON (default OUT/model/model.json)")
    return parser


def _config_for(args) -> dict:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "em_restarts", None) is not None:
        overrides["em.restarts"] = args.em_restarts
    return load_config(args.config, overrides)


def _agent_list(text: str) -> list[str]:
    kinds = [part.strip() for part in text.split(",") if part.strip()]
    for kind in kinds:
        if kind not in AGENT_KINDS:
            raise ConfigError(f"unknown agent kind {kind!r} (choose from {AGENT_KINDS})")
    if not kinds:
        raise ConfigError("empty agent list")
    return kinds


def _model_path(args) -> Path:
    return args.model if args.model is not None else args.out / "model" / "model.json"


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _config_for(args)
        if args.command == "gen-data":
            manifest = generate_dataset(cfg, args.out / "dataset")
            print(f"wrote {manifest['train_count']} train / {manifest['test_count']} "
                  f"test trajectories to {args.out / 'dataset'}")
        elif args.command == "fit-hmm":
            data_dir = args.data if args.data is not None else args.out / "dataset"
            _, rows = fit_intent_model(cfg, data_dir, args.out / "model")
            print(f"fitted intent model ({len(rows)} EM iterations logged) "
                  f"-> {args.out / 'model'}")
        elif args.command == "train":
            model = _load_model_checked(_model_path(args), _agent_list(args.agents))
            train_agents(cfg, model, args.out / "agents", _agent_list(args.agents))
            print(f"trained agents -> {args.out / 'agents'}")
        elif args.command == "evaluate":
            kinds = _agent_list(args.agents)
            agents = {}
            for kind in kinds:
                if kind == "manual":
                    continue
                path = args.out / "agents" / f"checkpoint_{kind}.json"
                if not path.exists():
                    raise ConfigError(f"missing checkpoint for {kind}: {path}")
                agents[kind] = load_agent(path, cfg)
            rows = evaluate_agents(cfg, agents, args.out / "eval")
            for row in rows:
                print(f"{row['agent']:>10}: reward {row['reward_rel']:7.1f}% "
                      f"roi {row['roi_rel']:7.1f}%")
        elif args.command == "interpret":
            model = load_model(_model_path(args))
            log = args.log if args.log is not None else args.out / "eval" / "eval_log_disa.jsonl"
            if not Path(log).exists():
                raise ConfigError(f"missing belief eval log: {log}")
            summary = interpret_model(cfg, model, log, args.out / "interpret")
            purity = summary["purity"]
            print(f"interpret report -> {args.out / 'interpret'}"
                  + (f" (cluster purity {purity:.3f})" if purity is not None else ""))
        elif args.command == "sweep":
            model = load_model(_model_path(args))
            rows = sweep(cfg, model, args.out / "sweep")
            print(f"swept {len(rows)} cells -> {args.out / 'sweep'}")
        return 0
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return 2
    except NumericFaultError as err:
        print(f"numeric fault: {err}", file=sys.stderr)
        return 3


def _load_model_checked(path: Path, kinds: list[str]):
    needs_model = any(kind in ("em_q", "disa") for kind in kinds)
    if not needs_model:
        return None
    if not path.exists():
        raise ConfigError(f"missing fitted model: {path}")
    return load_model(path)


if __name__ == "__main__":
    sys.exit(main())
