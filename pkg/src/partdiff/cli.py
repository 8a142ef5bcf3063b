"""Command-line pipeline: data generation, training, sampling,
evaluation, the sampler step-sweep benchmark, and PLY export.

Exit codes: 0 success, 2 configuration error, 3 data error,
4 numerical abort.  Every artifact embeds the resolved configuration
and the code version; wall-clock fields are the only outputs allowed to
differ between reruns with the same seed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .dataset import CATEGORIES, generate, load_dataset, save_dataset
from .errors import ConfigError, DataError, NumericalError, PartdiffError
from .fields import PoseMixtureField, equivalence_mode_components
from .geometry import assemble, export_ply
from .metrics import mmd_evaluate
from .network import ScoreNet
from .sampling import fpc_sample, pc_sample
from .training import train, write_loss_curve

SAMPLER_NAMES = ("pc", "fpc", "fpc-no-decay")


def _require_path(path, kind: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{kind} path does not exist: {p}")
    return p


def _sampler_config(cfg: ExperimentConfig, name: str, total_steps: int | None):
    """Build a SamplerConfig for a named sampler at a total step budget."""
    replacements = {}
    if name == "fpc-no-decay":
        replacements["decay_exponent"] = 0.0
    sampler = cfg.sampler(**replacements)
    if total_steps is not None:
        if name == "pc":
            replacements["n_steps"] = total_steps
        else:
            n = total_steps - sampler.final_corrector_steps
            if n < 2:
                raise ConfigError(
                    f"total steps {total_steps} leaves fewer than 2 predictor "
                    f"levels after {sampler.final_corrector_steps} final "
                    f"corrector steps"
                )
            replacements["n_steps"] = n
        sampler = cfg.sampler(**replacements)
    return sampler


def _make_sampler_fn(name: str, sampler_cfg, field_for):
    """(instance, rng) -> pose set, for mmd_evaluate."""

    def run(inst, rng):
        field_fn = field_for(inst)
        if name == "pc":
            return pc_sample(field_fn, inst.n_parts, sampler_cfg, rng)
        return fpc_sample(field_fn, inst.n_parts, sampler_cfg, rng)

    return run


def _model_field_factory(model: ScoreNet):
    cache: dict[str, object] = {}

    def field_for(inst):
        if inst.id not in cache:
            cache[inst.id] = model.bind(inst.parts)
        return cache[inst.id]

    return field_for


def _analytic_field_factory(schedule, mode_std: float):
    cache: dict[str, object] = {}

    def field_for(inst):
        if inst.id not in cache:
            comps = equivalence_mode_components(
                inst.gt_poses, inst.equivalence_classes
            )
            cache[inst.id] = PoseMixtureField(comps, schedule, mode_std=mode_std)
        return cache[inst.id]

    return field_for


def cmd_gen_data(args) -> int:
    instances = generate(args.category, args.count, args.seed, args.noise)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(instances, out)
    print(f"wrote {len(instances)} {args.category} instances to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = ExperimentConfig.resolve(
        args.config,
        {
            "seed": args.seed,
            "train.epochs": args.epochs,
            "train.batch_size": args.batch_size,
            "train.lr": args.lr,
        },
    )
    dataset = load_dataset(_require_path(args.dataset, "dataset"))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = ScoreNet.init(cfg.network(), cfg.schedule(), cfg.seed)
    model, curve = train(model, dataset, cfg.train(), out_dir=str(out_dir))
    header = [
        f"code_version = {__version__}",
        f"config = {json.dumps(cfg.echo(), sort_keys=True)}",
        f"dataset = {args.dataset}",
    ]
    write_loss_curve(out_dir / "loss.csv", curve, header)
    if cfg.train().epochs == 0:
        model.save(out_dir / "model.spa")
    print(f"trained {cfg.train().epochs} epochs; artifacts in {out_dir}")
    return 0


def cmd_sample(args) -> int:
    cfg = ExperimentConfig.resolve(args.config, {"seed": args.seed})
    model = ScoreNet.load(_require_path(args.checkpoint, "checkpoint"))
    dataset = load_dataset(_require_path(args.dataset, "dataset"))
    sampler_cfg = _sampler_config(cfg, args.sampler, args.steps)
    field_for = _model_field_factory(model)
    sampler_fn = _make_sampler_fn(args.sampler, sampler_cfg, field_for)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    echo = cfg.echo()
    echo["sampler"]["name"] = args.sampler
    echo["sampler"]["n_steps"] = sampler_cfg.n_steps
    with open(out, "w") as fh:
        for idx, inst in enumerate(dataset):
            for j in range(args.samples_per_instance):
                rng = np.random.default_rng([cfg.seed, idx, j])
                t0 = time.perf_counter()
                poses = sampler_fn(inst, rng)
                dt = time.perf_counter() - t0
                fh.write(
                    json.dumps(
                        {
                            "code_version": __version__,
                            "config": echo,
                            "instance_id": inst.id,
                            "sampler": args.sampler,
                            "sample_index": j,
                            "poses": poses.tolist(),
                            "wall_clock_s": dt,
                        }
                    )
                    + "\n"
                )
    print(f"wrote {len(dataset) * args.samples_per_instance} pose sets to {out}")
    return 0


def cmd_eval(args) -> int:
    cfg = ExperimentConfig.resolve(args.config, {"seed": args.seed})
    dataset = load_dataset(_require_path(args.dataset, "dataset"))
    if args.sampler == "gt":
        sampler_cfg = None
        sampler_fn = lambda inst, rng: inst.gt_poses.copy()  # noqa: E731
        steps_echo = 0
    else:
        if args.checkpoint is None:
            raise ConfigError("eval with a model sampler requires --checkpoint")
        model = ScoreNet.load(_require_path(args.checkpoint, "checkpoint"))
        sampler_cfg = _sampler_config(cfg, args.sampler, args.steps)
        sampler_fn = _make_sampler_fn(
            args.sampler, sampler_cfg, _model_field_factory(model)
        )
        steps_echo = (
            sampler_cfg.pc_total_steps
            if args.sampler == "pc"
            else sampler_cfg.fpc_total_steps
        )
    echo = cfg.echo()
    echo["sampler"]["name"] = args.sampler
    echo["sampler"]["total_steps"] = steps_echo
    echo["eval"] = {
        "samples_per_instance": args.samples_per_instance,
        "best_per_metric": bool(args.best_per_metric),
    }
    report = mmd_evaluate(
        sampler_fn,
        dataset,
        k=args.samples_per_instance,
        seed=cfg.seed,
        best_per_metric=args.best_per_metric,
        config_echo=echo,
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(report.table())
    print(f"report written to {out}")
    return 0


def cmd_bench(args) -> int:
    cfg = ExperimentConfig.resolve(args.config, {"seed": args.seed})
    dataset = load_dataset(_require_path(args.dataset, "dataset"))
    steps_list = [int(s) for s in args.steps_list.split(",")]
    samplers = [s.strip() for s in args.samplers.split(",")]
    for name in samplers:
        if name not in SAMPLER_NAMES:
            raise ConfigError(f"unknown sampler {name!r} in --samplers")
    schedule = cfg.schedule()
    field_for = _analytic_field_factory(schedule, args.mode_std)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    rows = []
    for name in samplers:
        for total in steps_list:
            sampler_cfg = _sampler_config(cfg, name, total)
            sampler_fn = _make_sampler_fn(name, sampler_cfg, field_for)
            report = mmd_evaluate(
                sampler_fn,
                dataset,
                k=args.samples_per_instance,
                seed=cfg.seed,
                config_echo={},
            )
            rows.append(
                [
                    name,
                    total,
                    repr(report.scd),
                    repr(report.pa),
                    repr(report.ca if report.ca is not None else float("nan")),
                    repr(report.qds),
                    repr(report.wqds),
                    repr(report.wall_clock_mean_s),
                ]
            )
            print(
                f"{name:>12} steps={total:<4d} scd={report.scd:.6f} "
                f"pa={report.pa:.3f} wall={report.wall_clock_mean_s:.3f}s"
            )
    with open(out, "w", newline="") as fh:
        fh.write(f"# code_version = {__version__}\n")
        fh.write(f"# config = {json.dumps(cfg.echo(), sort_keys=True)}\n")
        fh.write(
            f"# bench: mode_std = {args.mode_std}, samples_per_instance = "
            f"{args.samples_per_instance}, dataset = {args.dataset}\n"
        )
        writer = csv.writer(fh)
        writer.writerow(
            ["sampler", "steps", "scd", "pa", "ca", "qds", "wqds", "wall_clock_s"]
        )
        writer.writerows(rows)
    print(f"bench table written to {out}")
    return 0


def cmd_export_ply(args) -> int:
    dataset = load_dataset(_require_path(args.dataset, "dataset"))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    count = 0
    for inst in dataset[: args.limit]:
        shape = assemble(inst.parts, inst.gt_poses)
        export_ply(shape, out_dir / f"{inst.id}.ply")
        count += 1
    print(f"wrote {count} PLY files to {out_dir}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="partdiff",
        description="Diffusion-based 6-DoF pose generation for part assembly",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic assembly dataset")
    p.add_argument("--category", choices=CATEGORIES, required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="train a pose score model")
    p.add_argument("--config")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("sample", help="draw pose sets from a trained model")
    p.add_argument("--config")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--sampler", choices=SAMPLER_NAMES, default="fpc")
    p.add_argument("--steps", type=int, help="total sampling steps")
    p.add_argument("--samples-per-instance", type=int, default=4)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("eval", help="minimum-matching-distance evaluation")
    p.add_argument("--config")
    p.add_argument("--checkpoint")
    p.add_argument("--dataset", required=True)
    p.add_argument("--sampler", choices=SAMPLER_NAMES + ("gt",), default="fpc")
    p.add_argument("--steps", type=int)
    p.add_argument("--samples-per-instance", type=int, default=10)
    p.add_argument("--best-per-metric", action="store_true")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser(
        "bench", help="sweep sampler step counts on the analytic-score benchmark"
    )
    p.add_argument("--config")
    p.add_argument("--dataset", required=True)
    p.add_argument("--steps-list", default="100,150,200,250,300,350,400,450,500,550")
    p.add_argument("--samplers", default="pc,fpc,fpc-no-decay")
    p.add_argument("--samples-per-instance", type=int, default=4)
    p.add_argument("--mode-std", type=float, default=0.02)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("export-ply", help="export assembled shapes as ASCII PLY")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--limit", type=int, default=8)
    p.set_defaults(fn=cmd_export_ply)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error ({args.command}): {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error ({args.command}): {e}", file=sys.stderr)
        return 3
    except NumericalError as e:
        print(f"numerical abort ({args.command}): {e}", file=sys.stderr)
        return 4
    except PartdiffError as e:
        print(f"error ({args.command}): {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
