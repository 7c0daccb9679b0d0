"""Command-line entry point: ``lpgia {gen-synth,train,attack,eval,report}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .baselines import StrategySpec, baseline_attack
from .evaluation import MODES, VICTIMS, evaluate, reports_from_json, reports_to_csv, reports_to_json
from .graph import gen_csbm, is_bundle_dir, load_bundle, save_bundle
from .injector import AttackConfig, InjectionPlan, attack_labels, audit_plan, element_values
from .propagation import smooth
from .scoring import score_nodes
from .surrogate import build_ensemble, gcn_forward, save_params, train

log = logging.getLogger("lpgia")


class UsageError(Exception):
    """Bad flag values; exits with status 2."""


def _csv_list(choices):
    def parse(text):
        items = [t.strip() for t in text.split(",") if t.strip()]
        bad = [t for t in items if t not in choices]
        if bad or not items:
            raise argparse.ArgumentTypeError(f"choose from {','.join(choices)}; got {text!r}")
        return items
    return parse


def _strategy(text):
    try:
        return StrategySpec.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _seed_list(text):
    """``N`` means seeds 0..N-1; ``a,b,c`` is an explicit list."""
    try:
        if "," in text:
            return [int(t) for t in text.split(",") if t.strip()]
        return list(range(int(text)))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed list {text!r}") from None


def _add_dataset(p):
    p.add_argument("--dataset", required=True, help="bundle directory")
    p.add_argument("--no-lcc", action="store_true", help="keep all components")


def _add_eval(p):
    p.add_argument("--victims", type=_csv_list(VICTIMS), default=["gcn"])
    p.add_argument("--modes", type=_csv_list(MODES), default=["evasion"])
    p.add_argument("--eval-seeds", type=_seed_list, default=list(range(10)),
                   help="count N (seeds 0..N-1) or comma list; default 10")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lpgia", description=__doc__)
    parser.add_argument("--version", action="version", version=f"lpgia {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synth", help="write a cSBM bundle directory")
    p.add_argument("--n", type=int, default=300)
    p.add_argument("--classes", type=int, default=3)
    p.add_argument("--dim", type=int, default=60)
    p.add_argument("--p-in", type=float, default=0.04)
    p.add_argument("--p-out", type=float, default=0.004)
    p.add_argument("--mu", type=float, default=2.0)
    p.add_argument("--density", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train one GCN/SGC and write a checkpoint")
    _add_dataset(p)
    p.add_argument("--variant", choices=VICTIMS, default="gcn")
    p.add_argument("--hidden", type=int, default=16)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--lr", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint file")

    p = sub.add_parser("attack", help="build an injection plan and evaluate it")
    _add_dataset(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    amount = p.add_mutually_exclusive_group()
    amount.add_argument("--ratio", type=float, help="fake nodes as a fraction of n (default 0.05)")
    amount.add_argument("--n-fake", type=int)
    p.add_argument("--alpha", type=float, default=0.9)
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--nk", type=int, default=10)
    p.add_argument("--ensemble", type=int, default=20)
    p.add_argument("--strategy", type=_strategy, default=StrategySpec(),
                   help="node,cluster,feature e.g. ours,ours,ours or random,random,random")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--victim-pool", choices=("all", "non_train", "test_only"), default="non_train")
    p.add_argument("--no-recompute", action="store_true", help="skip re-smoothing after each injection")
    p.add_argument("--raw-targets", action="store_true", help="target labels from the raw prediction")
    p.add_argument("--dump-scores", action="store_true", help="also write scores.csv")
    _add_eval(p)

    p = sub.add_parser("eval", help="evaluate an existing plan")
    _add_dataset(p)
    p.add_argument("--plan", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--attack-name", default=None)
    _add_eval(p)

    p = sub.add_parser("report", help="merge report.json files into one CSV")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out", help="CSV path (default stdout)")
    return parser


def _check_dataset(args):
    if not is_bundle_dir(args.dataset):
        raise UsageError(f"--dataset {args.dataset!r} is not a bundle directory")


def _load(args):
    _check_dataset(args)
    return load_bundle(args.dataset, lcc=not args.no_lcc)


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _evaluate_all(g, plan, args, attack_name):
    return [evaluate(g, plan, mode=mode, victim=victim, seeds=args.eval_seeds, attack=attack_name)
            for victim in args.victims for mode in args.modes]


def cmd_gen_synth(args):
    try:
        g = gen_csbm(args.n, args.classes, args.dim, args.p_in, args.p_out, args.mu, args.seed,
                     density=args.density)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = save_bundle(g, args.out)
    print(f"wrote {out}: n={g.n} m={g.m} classes={g.n_classes} dim={g.dim} "
          f"avg_degree={g.avg_degree:.3f} homophily={g.homophily():.4f}")
    return 0


def cmd_train(args):
    g = _load(args)
    params = train(g, variant=args.variant, hidden=args.hidden, epochs=args.epochs, lr=args.lr,
                   seed=args.seed)
    save_params(params, args.out)
    pred = gcn_forward(params, g).argmax()
    accs = {s: float(np.mean(pred[g.mask(s)] == g.labels[g.mask(s)])) for s in ("train", "val", "test")}
    print(f"wrote {args.out}: " + " ".join(f"{k}_acc={v:.4f}" for k, v in accs.items()))
    return 0


def _attack_config(args):
    ratio = args.ratio if args.ratio is not None or args.n_fake is not None else 0.05
    try:
        return AttackConfig(n_fake=args.n_fake, ratio=ratio, alpha=args.alpha, beta=args.beta,
                            n_k=args.nk, R=args.ensemble, seed=args.seed,
                            victim_pool=args.victim_pool, recompute_smooth=not args.no_recompute,
                            target_source="raw" if args.raw_targets else "smoothed",
                            T=args.iters, tol=args.tol)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_attack(args):
    cfg = _attack_config(args)
    g = _load(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    ensemble = build_ensemble(g, R=cfg.R, seed=cfg.seed)
    plan = baseline_attack(g, ensemble, cfg, args.strategy)
    labels = attack_labels(g, ensemble.Z0)
    uses_table = args.strategy.feature_strategy != "random_copy"
    problems = audit_plan(plan, g, element_values(g, labels, cap=g.value_cap) if uses_table else None)
    for p in problems:
        log.warning("audit: %s", p)
    plan.save(out / "plan.json")
    if args.dump_scores:
        z_tilde = smooth(g, ensemble.Z0, cfg.alpha, cfg.T, cfg.tol)
        score_nodes(g, ensemble.Z0, z_tilde, cfg.beta, cfg.victim_pool,
                    cfg.target_source).to_csv(out / "scores.csv")
    name = "lpgia" if args.strategy == StrategySpec() else "+".join(args.strategy.as_dict().values())
    reports = _evaluate_all(g, plan, args, name)
    _write(out / "report.json", reports_to_json(reports, {"audit_problems": problems}))
    _write(out / "report.csv", reports_to_csv(reports))
    manifest = {
        "toolkit": "lpgia", "version": __version__, "kernel_backend": kernels.BACKEND,
        "command": "attack", "dataset": str(Path(args.dataset).resolve()), "lcc": not args.no_lcc,
        "dataset_digest": g.digest(), "config": asdict(cfg), "strategy": args.strategy.as_dict(),
        "victims": args.victims, "modes": args.modes, "eval_seeds": args.eval_seeds,
    }
    _write(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    for r in reports:
        print(f"{r.victim:4s} {r.mode:9s} clean={r.clean_acc:.4f} attacked={r.attacked_acc:.4f} "
              f"drop={r.drop:.4f}")
    print(f"plan: {plan.n_fake} fake nodes, {plan.total_edges} edges -> {out}")
    return 0


def cmd_eval(args):
    if not Path(args.plan).is_file():
        raise UsageError(f"--plan {args.plan!r} does not exist")
    g = _load(args)
    plan = InjectionPlan.load(args.plan)
    if plan.n_base != g.n or plan.dim != g.dim:
        raise UsageError(f"plan was built for n={plan.n_base}, dim={plan.dim}; dataset has n={g.n}, dim={g.dim}")
    name = args.attack_name or Path(args.plan).stem
    reports = _evaluate_all(g, plan, args, name)
    out = Path(args.out)
    _write(out / "report.json", reports_to_json(reports))
    _write(out / "report.csv", reports_to_csv(reports))
    for r in reports:
        print(f"{r.victim:4s} {r.mode:9s} clean={r.clean_acc:.4f} attacked={r.attacked_acc:.4f} "
              f"drop={r.drop:.4f}")
    return 0


def cmd_report(args):
    reports = []
    for path in args.reports:
        reports.extend(reports_from_json(Path(path).read_text(encoding="utf-8")))
    text = reports_to_csv(reports)
    if args.out:
        _write(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {"gen-synth": cmd_gen_synth, "train": cmd_train, "attack": cmd_attack,
            "eval": cmd_eval, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.error(str(exc))
    except Exception as exc:  # compute failure
        if args.verbose:
            raise
        print(f"lpgia {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
