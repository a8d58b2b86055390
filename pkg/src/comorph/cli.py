"""Command-line entry point.

Subcommands: pretrain, codesign, evaluate, transform, decompose,
bench-optim. Exit codes: 0 ok, 1 internal error, 2 parse error,
3 validation error. Primary outputs are timestamp-free so identical
arguments and seed reproduce them byte for byte.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .benchfns import get_function
from .codesign import (
    config_to_yaml,
    contribution_report,
    default_config,
    load_artifacts,
    load_config,
    run,
)
from .codesign.analysis import write_contribution_csv
from .codesign.runner import _pretrain_shared, _resolve_design, _resolve_space
from .errors import (
    ComorphError,
    ConfigError,
    InvalidBounds,
    MalformedSpec,
    MjcfParseError,
    UnknownFunction,
    UnsupportedConstruct,
)
from .mjcf import apply_factors, apply_morphology, content_hash, load_link_map, parse_file
from .morphology import write_mjcf_with_sidecar
from .morphspace import params_from_factors, sample_uniform
from .optim import make_optimizer
from .parallel import default_jobs
from .policy import load_policy
from .seeding import derive_rng
from .sim2d import build_model, evaluate

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_PARSE = 2
EXIT_VALIDATION = 3

_PARSE_ERRORS = (MjcfParseError, MalformedSpec, UnsupportedConstruct, ConfigError)
_VALIDATION_ERRORS = (InvalidBounds, UnknownFunction)

log = logging.getLogger("comorph")


def _default_out() -> str:
    return os.environ.get("COMORPH_OUT", ".")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="comorph",
        description="Morphology-controller co-design for planar fall recovery",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument(
        "--show-defaults",
        action="store_true",
        help="print the compiled-in default configuration and exit",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")

    def common(p, out=True):
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--jobs", type=int, default=None,
                       help="worker threads (default: all cores)")
        if out:
            p.add_argument("--out", default=None, help="output directory")

    p = sub.add_parser("codesign", help="run the co-design loop")
    p.add_argument("--config", required=True)
    p.add_argument("--resume", action="store_true")
    common(p)

    p = sub.add_parser("pretrain", help="pretrain the shared policy only")
    p.add_argument("--config", required=True)
    common(p)

    p = sub.add_parser("evaluate", help="evaluate a policy on a design")
    p.add_argument("--policy", required=True, help="policy checkpoint path")
    p.add_argument("--design", required=True, help="built-in name or robot.yaml path")
    p.add_argument("--factors", default=None,
                   help="YAML file of link.category: value scale factors")
    p.add_argument("--space", default="builtin")
    p.add_argument("--episodes", type=int, default=10)
    p.add_argument("--trace", default=None,
                   help="write the first episode's per-tick CSV trace here")
    common(p, out=False)

    p = sub.add_parser("transform", help="apply scale factors to an MJCF file")
    p.add_argument("--input", required=True)
    p.add_argument("--factors", default=None, help="YAML factors file")
    p.add_argument("--factor", action="append", default=[],
                   metavar="LINK.CATEGORY=VALUE")
    p.add_argument("--space", default="builtin")
    p.add_argument("--linkmap", default=None)
    p.add_argument("--sample", type=int, default=0,
                   help="also write N uniformly sampled morphologies")
    p.add_argument("--unchecked", action="store_true",
                   help="skip design-space bound checks")
    common(p)

    p = sub.add_parser("decompose", help="policy vs morphology contribution split")
    p.add_argument("--run", required=True, help="output directory of a finished run")
    p.add_argument("--step", type=int, default=None, help="lattice step size d")
    p.add_argument("--episodes", type=int, default=None)
    common(p, out=False)

    p = sub.add_parser("bench-optim", help="optimizer benchmark on a test function")
    p.add_argument("--optimizer", required=True,
                   choices=["evolutionary", "cmaes", "bayesopt", "policygrad"])
    p.add_argument("--function", required=True)
    p.add_argument("--budget", type=int, default=1000)
    p.add_argument("--batch", type=int, default=10)
    p.add_argument("--dim", type=int, default=6)
    common(p)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    if args.show_defaults:
        sys.stdout.write(config_to_yaml(default_config()))
        return EXIT_OK
    if args.command is None:
        parser.print_help()
        return EXIT_PARSE
    try:
        return _dispatch(args)
    except _PARSE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except ComorphError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


def _dispatch(args) -> int:
    return {
        "codesign": cmd_codesign,
        "pretrain": cmd_pretrain,
        "evaluate": cmd_evaluate,
        "transform": cmd_transform,
        "decompose": cmd_decompose,
        "bench-optim": cmd_bench_optim,
    }[args.command](args)


def _config_overrides(args) -> dict:
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if getattr(args, "jobs", None) is not None:
        overrides["jobs"] = args.jobs
    if getattr(args, "out", None) is not None:
        overrides["output_dir"] = str(Path(_default_out()) / args.out)
    return overrides


def cmd_codesign(args) -> int:
    config = load_config(args.config, _config_overrides(args))
    artifacts = run(config, resume=args.resume)
    print(f"{'design':<12}{'base':>12}{'co-designed':>14}{'improvement':>13}")
    improvements = []
    for name, design in artifacts.designs.items():
        if design.final_heldout is None:
            continue
        pct = (design.final_heldout - design.base_heldout) / design.base_heldout * 100
        improvements.append(pct)
        print(
            f"{name:<12}{design.base_heldout:>12.2f}"
            f"{design.final_heldout:>14.2f}{pct:>12.2f}%"
        )
    if improvements:
        print(f"average improvement: {np.mean(improvements):.2f}%")
    print(f"artifacts: {artifacts.out_dir}")
    return EXIT_OK


def cmd_pretrain(args) -> int:
    config = load_config(args.config, _config_overrides(args))
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "state").mkdir(exist_ok=True)
    contexts = [_resolve_design(d) for d in config.designs]
    jobs = config.jobs if config.jobs is not None else default_jobs()
    policy = _pretrain_shared(config, contexts, out_dir, jobs)
    print(f"pretrained policy: {out_dir / 'state' / 'pretrain.json'}")
    del policy
    return EXIT_OK


def _read_factors(args) -> dict[str, float]:
    factors: dict[str, float] = {}
    if getattr(args, "factors", None):
        with open(args.factors, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh) or {}
        if not isinstance(doc, dict):
            raise MalformedSpec("factors file must map link.category to value")
        for key, value in doc.items():
            if isinstance(value, dict):  # nested {link: {category: value}}
                for cat, v in value.items():
                    factors[f"{key}.{cat}"] = float(v)
            else:
                factors[str(key)] = float(value)
    for item in getattr(args, "factor", []):
        key, _, value = item.partition("=")
        if not value:
            raise MalformedSpec(f"--factor expects LINK.CATEGORY=VALUE, got {item!r}")
        factors[key.strip()] = float(value)
    return factors


def cmd_evaluate(args) -> int:
    policy = load_policy(args.policy)
    ctx = _resolve_design(args.design)
    model = ctx.base_model
    if args.factors:
        space = _resolve_space(args.space)
        params = params_from_factors(space, _read_factors(args))
        model = build_model(model, params)
    seed = args.seed if args.seed is not None else 0
    result = evaluate(model, policy, args.episodes, seed)
    print(f"mean return over {args.episodes} episodes: {result.mean:.4f}")
    for i, r in enumerate(result.returns):
        print(f"  episode {i}: {r:.4f}")
    if args.trace:
        from .sim2d import rollout, write_trace

        episode = rollout(model, policy, np.random.Generator(np.random.PCG64(seed)))
        write_trace(episode, args.trace)
        print(f"wrote {args.trace}")
    return EXIT_OK


def cmd_transform(args) -> int:
    doc = parse_file(args.input)
    space = _resolve_space(args.space)
    if args.linkmap:
        link_map = load_link_map(args.linkmap, from_file=True)
    else:
        data_dir = Path(__file__).resolve().parent / "data"
        link_map = load_link_map(data_dir / "linkmap.yaml", from_file=True)
    out_dir = Path(args.out if args.out else _default_out())

    factors = _read_factors(args)
    if args.unchecked:
        nested: dict[str, dict[str, float]] = {}
        for key, value in factors.items():
            link, _, cat = key.rpartition(".")
            if not link:
                raise MalformedSpec(f"factor key must be 'link.category': {key!r}")
            nested.setdefault(link, {})[cat] = value
        transformed = apply_factors(doc, nested, link_map)
        flat = {k: v for k, v in factors.items()}
    else:
        params = params_from_factors(space, factors)
        transformed = apply_morphology(doc, params, link_map)
        flat = {
            link: params.factors_for(link) for link in params.space.link_names
        }
    write_mjcf_with_sidecar(transformed, flat, out_dir, parent_file=str(args.input))
    print(content_hash(transformed).hash_hex)

    if args.sample:
        rng = derive_rng(args.seed or 0, "transform-sample")
        for _ in range(args.sample):
            params = sample_uniform(space, rng)
            sampled = apply_morphology(doc, params, link_map)
            write_mjcf_with_sidecar(
                sampled,
                {link: params.factors_for(link) for link in params.space.link_names},
                out_dir,
                parent_file=str(args.input),
            )
            print(content_hash(sampled).hash_hex)
    return EXIT_OK


def cmd_decompose(args) -> int:
    artifacts = load_artifacts(args.run)
    results = contribution_report(artifacts, d=args.step, episodes=args.episodes)
    out_path = Path(args.run) / "contributions.csv"
    write_contribution_csv(results, out_path)
    for name, r in results.items():
        if r.degenerate:
            print(
                f"{name}: delta_j={r.delta_j:.4f} (no improvement; raw "
                f"contributions policy={r.policy_contribution:.4f} "
                f"morphology={r.morph_contribution:.4f})"
            )
        else:
            print(
                f"{name}: policy {r.policy_share:.1%}, morphology "
                f"{r.morph_share:.1%} of delta_j={r.delta_j:.4f}"
            )
    print(f"wrote {out_path}")
    return EXIT_OK


def cmd_bench_optim(args) -> int:
    bench = get_function(args.function)
    seed = args.seed if args.seed is not None else 0
    optimizer = make_optimizer(args.optimizer, dim=args.dim, seed=seed)
    best = -np.inf
    rows = ["eval_index,best_so_far"]
    evals = 0
    while evals < args.budget:
        batch = min(args.batch, args.budget - evals)
        points = optimizer.ask(batch)
        scores = [bench.fn(x) for x in points]
        optimizer.tell(points, scores)
        for s in scores:
            evals += 1
            best = max(best, s)
            rows.append(f"{evals},{best!r}")
    out_dir = Path(args.out if args.out else _default_out())
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"bench_{args.optimizer}_{args.function}.csv"
    csv_path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    point, score = optimizer.best_so_far
    print(f"best score: {score!r}")
    print(f"best point: {' '.join(f'{v:.6f}' for v in point)}")
    print(f"wrote {csv_path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
