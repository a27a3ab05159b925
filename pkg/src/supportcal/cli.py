"""Command-line driver.

Exit status: 0 success, 2 usage/config/IO error, 3 degenerate data
(no evidence, no visible points, all-zero supports), 4 rank-deficient solve.
"""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import analysis, support_map
from .config import ExperimentConfig, class_table_yaml, load_config
from .errors import (
    AllZeroMap,
    ConfigError,
    DegenerateSupport,
    EmptyInput,
    InsufficientPopulation,
    IoFailure,
    NoVisiblePoints,
    RankDeficient,
    SupportCalError,
)
from .scene_sim import (
    Correspondences,
    correspondence_csv_rows,
    derive_seed,
    generate_scene,
    read_correspondences_csv,
    scene_csv_rows,
)

EXIT_OK, EXIT_USAGE, EXIT_DEGENERATE, EXIT_RANK = 0, 2, 3, 4
_DEGENERATE = (AllZeroMap, DegenerateSupport, NoVisiblePoints, InsufficientPopulation, EmptyInput)

MAP_NAME = "support_map.smap"
IMAGE_NAME = "support_map.pgm"


def commit_files(out_dir, files: dict[str, bytes]) -> list[Path]:
    """Write every file to a temporary name first and rename only once all writes succeeded."""
    out = Path(out_dir)
    pending = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        for name, payload in files.items():
            fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=out)
            pending.append((tmp, out / name))
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
        for tmp, final in pending:
            os.replace(tmp, final)
    except OSError as exc:
        for tmp, _ in pending:
            if os.path.exists(tmp):
                os.unlink(tmp)
        raise IoFailure(f"cannot write to {out}: {exc}") from exc
    return [final for _, final in pending]


def _text(rows: list[str]) -> bytes:
    return ("\n".join(rows) + "\n").encode("utf-8")


def _config(args) -> ExperimentConfig:
    if not args.config:
        raise ConfigError(f"{args.command} requires --config")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.output_dir = args.out
    return cfg


def _usage(args, msg: str) -> int:
    args.parser.print_usage(sys.stderr)
    print(f"{args.parser.prog}: error: {msg}", file=sys.stderr)
    return EXIT_USAGE


def _out_dir(args, cfg: ExperimentConfig | None = None) -> str:
    if args.out is not None:
        return args.out
    return cfg.output_dir if cfg is not None else "."


def _read_corr_files(paths) -> list[Correspondences]:
    frames = []
    for p in paths:
        try:
            frames.append(read_correspondences_csv(p))
        except OSError as exc:
            raise IoFailure(f"cannot read {p}: {exc}") from exc
    return frames


def cmd_simulate(args) -> int:
    cfg = _config(args)
    scene = generate_scene(cfg.scene, derive_seed(cfg.seed, analysis.SCENE_STREAM))
    frames = analysis.reference_frames(scene, cfg.support_map.n_frames, cfg.seed)
    files = {
        "scene.csv": _text(scene_csv_rows(scene)),
        "classes.yaml": class_table_yaml(scene.classes).encode("utf-8"),
    }
    for t, c in enumerate(frames):
        files[f"corr_{t:03d}.csv"] = _text(correspondence_csv_rows(c))
    commit_files(_out_dir(args, cfg), files)
    counts = {c.name: int(np.sum(scene.class_ids == c.id)) for c in scene.classes}
    print(f"scene: {len(scene)} points {counts}")
    print(f"frames: {len(frames)}  visible correspondences per frame: {[len(c) for c in frames]}")
    return EXIT_OK


def _map_files(smap: support_map.SupportMap) -> dict[str, bytes]:
    view = support_map.normalize(smap)
    return {MAP_NAME: support_map.to_bytes(smap), IMAGE_NAME: support_map.pgm_bytes(view)}


def cmd_build_map(args) -> int:
    if not args.files:
        return _usage(args, "at least one correspondence file is required")
    cfg = _config(args)
    p = cfg.support_map
    smap = analysis.build_support_map(_read_corr_files(args.files), cfg.intrinsics.width, cfg.intrinsics.height,
                                      p.downsample, p.sigma, p.tau, normalized=not args.no_normalize)
    written = commit_files(_out_dir(args, cfg), _map_files(smap))
    print(f"support map {smap.cells_x}x{smap.cells_y} cells from {len(args.files)} file(s) "
          f"(normalized={smap.normalized}) -> {written[0]}")
    return EXIT_OK


def cmd_merge_maps(args) -> int:
    if not args.files:
        return _usage(args, "at least one map file is required")
    maps = [support_map.load_map(p) for p in args.files]
    merged = maps[0]
    for m in maps[1:]:
        merged = support_map.merge(merged, m)
    if not args.no_normalize:
        merged = support_map.normalize(merged)
    written = commit_files(_out_dir(args), _map_files(merged))
    print(f"merged {len(maps)} map(s) (normalized={merged.normalized}) -> {written[0]}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    if not args.files:
        return _usage(args, "at least one correspondence file is required")
    names = {}
    if args.config:
        names = {c.cls.id: c.cls.name for c in _config(args).scene.classes}
    corrs = Correspondences.concat(_read_corr_files(args.files))
    stats = analysis.class_stats(corrs)
    commit_files(_out_dir(args), {"class_stats.csv": _text(analysis.class_stats_csv_rows(stats))})
    threshold = float(np.mean([s.summary for s in stats]))
    print(f"{'class':<12}{'count':>8}{'med|du|':>10}{'med|dv|':>10}{'med|f|':>10}  above avg ({threshold:.4g} px)")
    for s in stats:
        label = names.get(s.class_id, str(s.class_id))
        print(f"{label:<12}{s.count:>8d}{s.median_abs_du:>10.4g}{s.median_abs_dv:>10.4g}{s.summary:>10.4g}  "
              f"{'yes' if s.above_average else 'no'}")
    return EXIT_OK


def cmd_refine(args) -> int:
    cfg = _config(args)
    if not args.map:
        return _usage(args, "--map is required")
    smap = support_map.normalize(support_map.load_map(args.map))
    res = analysis.run_experiment3(cfg.scene, cfg.perturbation, smap, cfg.n_runs, cfg.seed,
                                   cfg.sampling_plan(), cfg.refine, cfg.sampling.divide_by_probability)
    comp = res.comparison
    commit_files(_out_dir(args, cfg), {
        "runs.csv": _text(analysis.runs_csv_rows(comp)),
        "summary.csv": _text(analysis.summary_csv_rows(comp)),
    })
    print(comp.table())
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="supportcal", description="Support-map-driven extrinsic calibration.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, files_help=None):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="experiment YAML config")
        p.add_argument("--out", help="output directory (overrides config output_dir)")
        p.add_argument("--seed", type=int, help="base seed (overrides config seed)")
        if files_help:
            p.add_argument("files", nargs="*", help=files_help)
        p.set_defaults(func=func, parser=p)
        return p

    add("simulate", cmd_simulate, "generate a scene and reference-aligned correspondence files")
    p = add("build-map", cmd_build_map, "accumulate correspondence files into a support map", "correspondence CSVs")
    p.add_argument("--no-normalize", action="store_true", help="keep the raw accumulated map (for merge-maps)")
    p = add("merge-maps", cmd_merge_maps, "sum raw support maps and normalize", "raw .smap files")
    p.add_argument("--no-normalize", action="store_true", help="write the merged map unnormalized")
    add("analyze", cmd_analyze, "class-wise residual statistics", "correspondence CSVs")
    p = add("refine", cmd_refine, "uniform vs support-guided refinement over n_runs")
    p.add_argument("--map", help="support map file")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is not None and args.seed < 0:
        return _usage(args, "--seed must be a non-negative integer")
    try:
        return args.func(args)
    except RankDeficient as exc:
        print(f"error: rank-deficient refinement: {exc}", file=sys.stderr)
        return EXIT_RANK
    except _DEGENERATE as exc:
        print(f"error: degenerate data: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except (SupportCalError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
