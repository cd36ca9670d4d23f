"""Command-line harness: annotate, verify, bench, project.

Exit codes: 0 success, 1 usage or I/O error, 2 sample rejected by the
quality filters. Reports go to stdout as single JSON lines (one per mesh in
corpus mode) so corpus runs can be merged and plotted downstream; bench
results append to a CSV.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .annotate import (
    DEFAULT_INCONSISTENCY_THRESHOLD,
    DEFAULT_NUM_PARTS,
    DEFAULT_NUM_SAMPLES,
    DEFAULT_RATIO_THRESHOLD,
    PartAnnotator,
    load_point_features,
)
from .attention import BENCH_CSV_FIELDS, bench_attention
from .mesh import load_obj
from .projection import build_token_mask, load_camera, write_token_mask
from .verify import run_all
from .voxgrid import load_uvox, save_uvox

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_REJECTED = 2


class _Parser(argparse.ArgumentParser):
    """argparse uses exit code 2 for usage errors; 2 means rejection here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _annotate_one(annotator: PartAnnotator, mesh_path: Path, out_path: Path, args):
    mesh = load_obj(mesh_path)
    point_features = None
    if args.features:
        if args.feature_dim is None:
            raise ValueError("--features requires --feature-dim")
        point_features = load_point_features(args.features, args.feature_dim)
    result = annotator.annotate(mesh, point_features=point_features)
    save_uvox(result.grid, out_path)
    report = result.report
    print(
        json.dumps(
            {
                "mesh": str(mesh_path),
                "out": str(out_path),
                "voxels": result.grid.num_voxels,
                "parts": result.labeling.num_parts,
                "squared_ratio_sum": report.squared_ratio_sum,
                "neighborhood_inconsistency": report.neighborhood_inconsistency,
                "accepted": report.accepted,
            }
        ),
        flush=True,
    )
    return result


def _cmd_annotate(args) -> int:
    annotator = PartAnnotator(
        resolution=args.res,
        n_parts=args.parts,
        n_samples=args.samples,
        random_state=args.seed,
        ratio_threshold=args.ratio_threshold,
        inconsistency_threshold=args.inconsistency_threshold,
    )
    if args.mesh_dir:
        if args.features:
            raise ValueError("--features applies to a single mesh, not --mesh-dir")
        meshes = sorted(Path(args.mesh_dir).glob("*.obj"))
        if not meshes:
            raise ValueError(f"no .obj meshes found in {args.mesh_dir}")
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        failed = False
        for mesh_path in meshes:
            try:
                _annotate_one(
                    annotator, mesh_path, out_dir / (mesh_path.stem + ".uvox"), args
                )
            except (OSError, ValueError) as exc:
                failed = True
                print(
                    json.dumps({"mesh": str(mesh_path), "error": str(exc)}),
                    flush=True,
                )
        return EXIT_ERROR if failed else EXIT_OK
    result = _annotate_one(annotator, Path(args.mesh), Path(args.out), args)
    return EXIT_OK if result.report.accepted else EXIT_REJECTED


def _cmd_verify(args) -> int:
    results = run_all(args.cases, args.seed)
    all_ok = True
    for result in results:
        print(
            f"{result.name}: {result.passed}/{result.total} passed"
            f" (max rel err {result.max_error:.3e})"
        )
        all_ok = all_ok and result.ok
    return EXIT_OK if all_ok else EXIT_ERROR


def _cmd_bench(args) -> int:
    result = bench_attention(
        args.tokens,
        args.dim,
        args.parts,
        mode=args.mode,
        repetitions=args.reps,
        seed=args.seed,
    )
    csv_path = Path(args.csv)
    write_header = not csv_path.exists()
    with open(csv_path, "a", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        if write_header:
            writer.writerow(BENCH_CSV_FIELDS)
        writer.writerow(result.csv_row())
    print(
        json.dumps(
            {
                "mode": result.mode,
                "tokens": result.tokens,
                "dim": result.dim,
                "parts": result.parts,
                "part_ms": result.part_ms,
                "full_ms": result.full_ms,
                "flop_ratio": result.flops.ratio,
                "wall_ratio": result.wall_ratio,
                "csv": str(csv_path),
            }
        )
    )
    return EXIT_OK


def _cmd_project(args) -> int:
    grid = load_uvox(args.uvox)
    if grid.labels is None:
        print(f"partvox: error: {args.uvox} carries no part labels", file=sys.stderr)
        return EXIT_ERROR
    camera = load_camera(args.camera)
    mask = build_token_mask(grid, camera)
    with open(args.out, "w", encoding="utf-8") as fh:
        write_token_mask(mask, fh)
    rows, cols = mask.token_grid_shape
    print(
        json.dumps(
            {
                "out": str(args.out),
                "rows": rows,
                "cols": cols,
                "nonempty_tokens": sum(1 for s in mask.part_sets if s),
                "parts_covered": sorted({p for s in mask.part_sets for p in s}),
            }
        )
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="partvox", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("annotate", help="mesh -> part-labeled UVOX grid")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--mesh", help="input .obj mesh")
    src.add_argument("--mesh-dir", help="directory of .obj meshes (corpus mode)")
    p.add_argument("--res", type=int, default=64, help="grid resolution N")
    p.add_argument("--parts", type=int, default=DEFAULT_NUM_PARTS)
    p.add_argument("--samples", type=int, default=DEFAULT_NUM_SAMPLES)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--features", help="raw f32 per-point feature file")
    p.add_argument("--feature-dim", type=int, help="channels per feature row")
    p.add_argument(
        "--ratio-threshold", type=float, default=DEFAULT_RATIO_THRESHOLD
    )
    p.add_argument(
        "--inconsistency-threshold",
        type=float,
        default=DEFAULT_INCONSISTENCY_THRESHOLD,
    )
    p.add_argument("--out", required=True, help="output UVOX path (or dir)")
    p.set_defaults(func=_cmd_annotate)

    p = sub.add_parser("verify", help="run randomized equivalence suites")
    p.add_argument("--cases", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("bench", help="time blocked vs dense attention")
    p.add_argument("--mode", choices=("self", "cross"), default="self")
    p.add_argument("--tokens", type=int, required=True)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--parts", type=int, default=DEFAULT_NUM_PARTS)
    p.add_argument("--reps", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--csv", required=True, help="CSV file to append to")
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("project", help="build the image-token part sets")
    p.add_argument("--uvox", required=True)
    p.add_argument("--camera", required=True, help="camera text file")
    p.add_argument("--out", required=True, help="token mask text output")
    p.set_defaults(func=_cmd_project)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"partvox: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
