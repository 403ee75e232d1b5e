"""Command-line harness: generate streams, run engines, sweep ablations, check oracles.

Exit codes: 0 success, 2 configuration error, 3 container error, 4 shape
mismatch, 5 oracle disagreement. All outputs are deterministic functions of
the flags and input files.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace
from pathlib import Path

from .container import manifest_path, read_stream, write_manifest, write_stream
from .embeddings import ShapeSpec
from .engine import (
    INIT_STRATEGIES,
    REA_SOURCES,
    REA_VARIANTS,
    STRATEGIES,
    EngineConfig,
)
from .episodes import record_to_csv, record_to_summary, run_episode
from .errors import ConfigError, ContainerError, ShapeMismatchError
from .oracles import oracle_trials
from .streams import (
    StreamSpec,
    format_regime,
    generate_stream,
    make_area_fixture,
    make_permutation_fixture,
    parse_regime,
    recovered_similarity,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONTAINER = 3
EXIT_SHAPE = 4
EXIT_ORACLE = 5

_PERM_FIXTURE_SHAPE = ShapeSpec(16, 16, 12)
_AREA_FIXTURE_SHAPE = ShapeSpec(16, 16, 16)
_AREA_FRACTIONS = (0.25, 0.625)


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _add_engine_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--slots", type=int, default=20, help="memory slots (default 20)")
    parser.add_argument(
        "--sampling-interval", type=int, default=10,
        help="only every s-th frame is insertion-eligible (default 10)",
    )
    parser.add_argument("--topk", type=int, default=20, help="top-k filter width (default 20)")
    parser.add_argument(
        "--lsb", type=float, default=0.5,
        help="presence-gate similarity threshold in [-1, 1]; -1 disables (default 0.5)",
    )
    parser.add_argument("--strategy", choices=STRATEGIES, default="readmem")
    parser.add_argument("--rea", choices=REA_VARIANTS, default="argmax_columns",
                        help="association variant (default argmax_columns)")
    parser.add_argument("--rea-source", choices=REA_SOURCES, default="weights")
    parser.add_argument("--init", choices=INIT_STRATEGIES, default="every_tth")
    parser.add_argument("--adjacent", action=argparse.BooleanOptionalAction, default=True,
                        help="keep the previous frame in attention (default on)")
    parser.add_argument("--dme", action=argparse.BooleanOptionalAction, default=True,
                        help="enable diversity-driven insertion (default on)")


def _add_shape_flags(parser: argparse.ArgumentParser, required: bool) -> None:
    default = None if not required else 8
    parser.add_argument("--channels-key", type=int, default=default)
    parser.add_argument("--channels-value", type=int, default=default)
    parser.add_argument("--spatial", type=int, default=16 if required else None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="readmem",
        description="Diversity-maximizing bounded memory for streaming embeddings",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a synthetic stream container")
    _add_shape_flags(gen, required=True)
    gen.add_argument("--length", type=int, default=200)
    gen.add_argument("--regime", default="slow_drift:0.01",
                     help='e.g. "stationary", "slow_drift:0.01", "cyclic_shift:4", '
                          '"area_change:0.25:0.75", "distractor:40:80"; join with "+"')
    gen.add_argument("--noise", type=float, default=0.02)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_gen)

    run = sub.add_parser("run", help="run an engine over a stream container")
    run.add_argument("--stream", required=True)
    run.add_argument("--out-dir", required=True)
    _add_engine_flags(run)
    _add_shape_flags(run, required=False)
    run.set_defaults(func=cmd_run)

    ablate = sub.add_parser("ablate", help="sweep association variants and feature toggles")
    ablate.add_argument("--stream", required=True)
    ablate.add_argument("--out-dir", required=True)
    ablate.add_argument("--seed", type=int, default=0, help="fixture seed base")
    ablate.add_argument("--fixture-count", type=int, default=10,
                        help="fixtures averaged per row (default 10)")
    _add_engine_flags(ablate)
    ablate.set_defaults(func=cmd_ablate)

    oracle = sub.add_parser("oracle-check", help="randomized engine-vs-oracle agreement suite")
    oracle.add_argument("--trials", type=int, default=1000)
    oracle.add_argument("--slots", type=int, default=5)
    oracle.add_argument("--channels-key", type=int, default=4)
    oracle.add_argument("--spatial", type=int, default=8)
    oracle.add_argument("--seed", type=int, default=0)
    oracle.add_argument("--inject-fault", action="store_true",
                        help="corrupt one engine decision (harness self-test)")
    oracle.set_defaults(func=cmd_oracle_check)
    return parser


def cmd_gen(args) -> int:
    shape = ShapeSpec(args.channels_key, args.channels_value, args.spatial)
    regime = parse_regime(args.regime)
    spec = StreamSpec(shape, args.length, regime, args.noise, args.seed)
    frames = generate_stream(spec)
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    aliased = write_stream(out, frames)
    write_manifest(
        manifest_path(out),
        {
            "format": "1",
            "channels_key": shape.channels_key,
            "channels_value": shape.channels_value,
            "spatial": shape.spatial,
            "length": spec.length,
            "regime": format_regime(regime),
            "noise_sigma": repr(spec.noise_sigma),
            "seed": spec.seed,
            "aliased": int(aliased),
        },
    )
    print(f"wrote {len(frames)} frames to {out} (aliased={int(aliased)})")
    return EXIT_OK


def _engine_config(args, shape: ShapeSpec) -> EngineConfig:
    return EngineConfig(
        shape=shape,
        slots=args.slots,
        sampling_interval=args.sampling_interval,
        topk=args.topk,
        lsb_threshold=args.lsb,
        strategy=args.strategy,
        rea_variant=args.rea,
        rea_source=args.rea_source,
        init_strategy=args.init,
        use_adjacent=args.adjacent,
        dme_enabled=args.dme,
    )


def _resolve_shape(args, header_shape: ShapeSpec) -> ShapeSpec:
    ck = args.channels_key if args.channels_key is not None else header_shape.channels_key
    cv = args.channels_value if args.channels_value is not None else header_shape.channels_value
    hw = args.spatial if args.spatial is not None else header_shape.spatial
    return ShapeSpec(ck, cv, hw)


def cmd_run(args) -> int:
    frames, info = read_stream(args.stream)
    config = _engine_config(args, _resolve_shape(args, info["shape"]))
    record = run_episode(config, frames)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    _atomic_write_text(out_dir / "run.csv", record_to_csv(record))
    _atomic_write_text(out_dir / "summary.json", record_to_summary(record, config))
    print(f"final log|G| = {record.final_log_abs_det!r} over {len(record.rows)} frames")
    return EXIT_OK


def _fixture_means(variant: str, source: str, topk: int, seed: int, count: int):
    if variant == "off":
        source = "weights"
    perm_scores = []
    area_scores = []
    for i in range(count):
        memory, query, _ = make_permutation_fixture(_PERM_FIXTURE_SHAPE, seed + i)
        perm_scores.append(recovered_similarity(memory, query, variant, source, topk))
        memory, query = make_area_fixture(
            _AREA_FIXTURE_SHAPE, *_AREA_FRACTIONS, seed=seed + i, noise_sigma=0.01
        )
        area_scores.append(recovered_similarity(memory, query, variant, source, topk))
    return sum(perm_scores) / count, sum(area_scores) / count


def cmd_ablate(args) -> int:
    frames, info = read_stream(args.stream)
    base = _engine_config(args, info["shape"])
    rows = []

    def add_row(config: EngineConfig, dme: bool, lsb: bool, adjacent: bool) -> None:
        record = run_episode(config, frames)
        perm, area = _fixture_means(
            config.rea_variant, config.rea_source, config.topk, args.seed, args.fixture_count
        )
        rows.append(
            (
                int(dme),
                int(lsb),
                int(adjacent),
                config.rea_variant,
                config.rea_source,
                repr(record.final_log_abs_det),
                repr(perm),
                repr(area),
            )
        )

    for dme in (True, False):
        for lsb in (True, False):
            for adjacent in (True, False):
                config = replace(
                    base,
                    dme_enabled=dme,
                    lsb_threshold=base.lsb_threshold if lsb else -1.0,
                    use_adjacent=adjacent,
                )
                add_row(config, dme, lsb, adjacent)
    for variant in REA_VARIANTS:
        sources = REA_SOURCES if variant != "off" else ("weights",)
        for source in sources:
            if variant == base.rea_variant and source == base.rea_source:
                continue
            config = replace(base, rea_variant=variant, rea_source=source)
            add_row(config, True, True, base.use_adjacent)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    header = "dme,lsb,adjacent,rea_variant,rea_source,final_log_abs_det,perm_similarity,area_similarity"
    text = header + "\n" + "\n".join(",".join(map(str, row)) for row in rows) + "\n"
    _atomic_write_text(out_dir / "ablate.csv", text)
    print(f"wrote {len(rows)} configurations to {out_dir / 'ablate.csv'}")
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    agreements, total = oracle_trials(
        args.trials,
        slots=args.slots,
        channels_key=args.channels_key,
        spatial=args.spatial,
        seed=args.seed,
        inject_fault=args.inject_fault,
    )
    if total == 0:
        print("warning: zero trials requested; agreement is vacuous")
        return EXIT_OK
    print(f"agreement {agreements}/{total}")
    return EXIT_OK if agreements == total else EXIT_ORACLE


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ContainerError as exc:
        print(f"container error: {exc}", file=sys.stderr)
        return EXIT_CONTAINER
    except ShapeMismatchError as exc:
        print(f"shape mismatch: {exc}", file=sys.stderr)
        return EXIT_SHAPE


if __name__ == "__main__":
    raise SystemExit(main())
