"""Command-line surface: slice, select, bench, params, costs.

Exit codes: 0 success, 2 input validation failure, 3 usage or method/input
mismatch, 4 internal numeric failure. All randomness flows from --seed.

Heavy imports happen after argument parsing so --threads can cap the numeric
libraries' thread pools before they load.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(3)


def build_parser() -> _Parser:
    p = _Parser(prog="expertroute",
                description="Slice upstream data into expert domains and route tasks to experts.")
    p.add_argument("--seed", type=int, default=None, help="seed for all randomness (default 0)")
    p.add_argument("--threads", default="auto", help="worker thread cap: a positive integer or auto")
    p.add_argument("--quiet", action="store_true", help="suppress the resolved-config line")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("slice", help="build expert slices from a label hierarchy")
    sp.add_argument("--hierarchy", required=True)
    sp.add_argument("--examples", default=None)
    sp.add_argument("--mode", required=True, help="threshold:<n> or topn:<n>")
    sp.add_argument("--counts", choices=("raw", "closed"), default="closed",
                    help="rank domains by supplied counts or by closed example counts")
    sp.add_argument("--out", required=True)

    se = sub.add_parser("select", help="pick an expert for a task")
    se.add_argument("--method", required=True, choices=("knn", "epn", "kl", "random"))
    se.add_argument("--task", default=None)
    se.add_argument("--embeddings-dir", default=None)
    se.add_argument("--probs", default=None)
    se.add_argument("--priors", default=None)
    se.add_argument("--num-experts", type=int, default=None)
    se.add_argument("--out", required=True)

    sb = sub.add_parser("bench", help="run a synthetic selector benchmark")
    sb.add_argument("--config", required=True)
    sb.add_argument("--out", required=True)

    pp = sub.add_parser("params", help="adapter vs backbone parameter report")
    pp.add_argument("--bottleneck", default="half", help="half or fixed:<k>")
    pp.add_argument("--out", default=None)

    pc = sub.add_parser("costs", help="asymptotic cost table for both strategies")
    pc.add_argument("--P", type=int, required=True, help="parameter count")
    pc.add_argument("--B", type=int, required=True, help="batch size")
    pc.add_argument("--Su", type=int, required=True, help="upstream steps")
    pc.add_argument("--Sa", type=int, required=True, help="adaptation steps")
    pc.add_argument("--Sf", type=int, required=True, help="fine-tune steps")
    pc.add_argument("--E", type=int, required=True, help="expert count")
    pc.add_argument("--Nt", type=int, required=True, help="downstream examples")
    pc.add_argument("--out", default=None)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.threads != "auto":
        try:
            n = int(args.threads)
        except ValueError:
            n = 0
        if n < 1:
            parser.error("--threads takes a positive integer or auto")
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)

    if not args.quiet:
        shown = {k: v for k, v in sorted(vars(args).items()) if k != "quiet"}
        shown["seed"] = args.seed if args.seed is not None else 0
        print("config: " + " ".join(f"{k}={v}" for k, v in shown.items()), file=sys.stderr)

    from .dataset_io import DataFormatError
    from .hierarchy import HierarchyError
    from .selectors import SelectorInputError
    from .toy_models import NumericError

    handler = {"slice": _cmd_slice, "select": _cmd_select, "bench": _cmd_bench,
               "params": _cmd_params, "costs": _cmd_costs}[args.command]
    try:
        handler(args)
    except (HierarchyError, DataFormatError, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except (SelectorInputError, UsageError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (NumericError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    return 0


def _seed_of(args, fallback: int = 0) -> int:
    return args.seed if args.seed is not None else fallback


def _parse_mode(text: str):
    kind, _, num = text.partition(":")
    if kind not in ("threshold", "topn") or not num:
        raise UsageError(f"mode must be threshold:<n> or topn:<n>, got {text!r}")
    try:
        n = int(num)
    except ValueError:
        raise UsageError(f"mode count must be an integer, got {num!r}") from None
    return kind, n


def _cmd_slice(args) -> None:
    from . import hierarchy as hi

    kind, n = _parse_mode(args.mode)
    h = hi.load_hierarchy(args.hierarchy)
    examples = hi.load_examples(args.examples, h) if args.examples else []
    if examples and args.counts == "closed":
        h.counts = hi.closed_counts(examples, h)
    domains = hi.select_domains(h, min_images=n) if kind == "threshold" \
        else hi.select_domains(h, top_n=n)
    slices, routing = hi.build_slices(examples, domains, h)
    lines = []
    for sl in slices:
        members = " ".join(str(m) for m in sorted(sl.member_ids))
        lines.append(f"S {sl.expert_id} {sl.root_label} {len(sl.member_ids)} {members}")
    for eid in sorted(routing):
        lines.append(f"R {eid} " + " ".join(str(e) for e in routing[eid]))
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"domains={len(domains)} slices={len(slices)} routed={len(routing)}")


def _cmd_select(args) -> None:
    from . import dataset_io as dio
    from .knn import knn_select
    from .selectors import (LabelDistribution, SelectorInputError, epn_select,
                            estimate_task_distribution, kl_select, random_select)

    if args.method == "knn":
        if not args.task or not args.embeddings_dir:
            raise UsageError("method knn requires --task and --embeddings-dir")
        task = dio.read_task(args.task)
        files = sorted(Path(args.embeddings_dir).glob("*.xprt"),
                       key=lambda f: dio.expert_id_from_name(f))
        if not files:
            raise dio.DataFormatError(f"no *.xprt files in {args.embeddings_dir}")
        embs = [dio.read_embeddings(f) for f in files]
        ids = [e.expert_id for e in embs]
        if len(set(ids)) != len(ids):
            raise dio.DataFormatError("duplicate expert ids in embeddings directory")
        report = knn_select(task, embs)
    elif args.method == "epn":
        if not args.probs:
            raise UsageError("method epn requires --probs")
        report = epn_select(dio.read_probs(args.probs))
    elif args.method == "kl":
        if not args.probs or not args.priors:
            raise UsageError("method kl requires --priors and --probs")
        priors_pm = dio.read_probs(args.priors)
        if priors_pm.kind != dio.MULTILABEL:
            raise SelectorInputError("priors file must be a multilabel matrix, one row per expert")
        priors = [LabelDistribution(row) for row in priors_pm.data.astype(float)]
        q = estimate_task_distribution(dio.read_probs(args.probs))
        report = kl_select(priors, q)
    else:
        if args.num_experts is None:
            raise UsageError("method random requires --num-experts")
        report = random_select(args.num_experts, seed=_seed_of(args))
    Path(args.out).write_text(report.to_text(), encoding="utf-8")
    print(report.chosen)


_BENCH_KEYS = {"seed", "num_experts", "d_raw", "d_embed", "num_classes", "num_tasks",
               "noise", "mode", "train_per_task", "test_per_task", "selectors",
               "trainer", "resamples", "level"}


def _cmd_bench(args) -> None:
    from .bench import WorldConfig, evaluate_selectors, generate_world, render_report
    from .dataset_io import DataFormatError
    from .toy_models import TrainerConfig

    with open(args.config, encoding="utf-8") as f:
        cfg = json.load(f)
    if not isinstance(cfg, dict):
        raise DataFormatError("bench config must be a JSON object")
    unknown = set(cfg) - _BENCH_KEYS
    if unknown:
        raise DataFormatError(f"unknown bench config keys: {sorted(unknown)}")
    selectors = tuple(cfg.get("selectors", ("knn", "epn", "kl", "random")))
    trainer_cfg = cfg.get("trainer", {})
    if not isinstance(trainer_cfg, dict) or set(trainer_cfg) - {"lr", "steps"}:
        raise DataFormatError("trainer config takes only lr and steps")
    world_kwargs = {k: cfg[k] for k in cfg
                    if k in _BENCH_KEYS - {"selectors", "trainer", "resamples", "level", "seed"}}
    world_kwargs["seed"] = _seed_of(args, fallback=int(cfg.get("seed", 0)))
    world = generate_world(WorldConfig(**world_kwargs))
    trainer = TrainerConfig(lr=float(trainer_cfg.get("lr", 0.5)),
                            steps=int(trainer_cfg.get("steps", 80)))
    summaries = evaluate_selectors(world, methods=selectors, trainer=trainer,
                                   resamples=int(cfg.get("resamples", 2000)),
                                   level=float(cfg.get("level", 0.95)))
    text = render_report(summaries)
    Path(args.out).write_text(text, encoding="utf-8")
    for line in text.splitlines():
        if line.startswith("method="):
            print(line)


def _cmd_params(args) -> None:
    from .toy_models import count_params

    rule = args.bottleneck
    ok = rule == "half" or (rule.startswith("fixed:") and rule.split(":", 1)[1].isdigit())
    if not ok:
        raise UsageError(f"--bottleneck takes half or fixed:<k>, got {rule!r}")
    report = count_params(bottleneck=rule)
    text = report.to_text()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")


def _cmd_costs(args) -> None:
    from .bench import CostModelInput, asymptotic_costs

    table = asymptotic_costs(CostModelInput(
        params=args.P, batch=args.B, steps_upstream=args.Su, steps_adapter=args.Sa,
        steps_finetune=args.Sf, num_experts=args.E, task_examples=args.Nt))
    text = table.to_text()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")


if __name__ == "__main__":
    sys.exit(main())
