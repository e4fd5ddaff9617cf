"""Command-line entry point: extract --image-dir D --out-dir O [...]."""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

from .extract import ExtractionJob, run
from .vit import ARCHS


class _CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _CliError(message)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="extract",
                description="Run a vision transformer over a directory of images "
                            "and export per-patch Key features")
    p.add_argument("--image-dir", required=True, type=Path)
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--gt-dir", type=Path, default=None)
    p.add_argument("--arch", choices=sorted(ARCHS), default="vits8")
    p.add_argument("--resize", type=int, default=224)
    p.add_argument("--weights", type=Path, default=None,
                   help="pretrained state dict (.pth); omitted = seeded random init")
    p.add_argument("--seed", type=int, default=0,
                   help="initialization seed used when no weights are given")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        job = ExtractionJob(image_dir=args.image_dir, out_dir=args.out_dir,
                            arch=args.arch, resize=args.resize, gt_dir=args.gt_dir,
                            weights=args.weights, seed=args.seed)
        manifest = run(job)
    except (_CliError, FileNotFoundError, IsADirectoryError, NotADirectoryError,
            PermissionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2
    n = len(manifest.read_text(encoding="utf-8").splitlines())
    print(f"images={n}")
    print(f"manifest={manifest}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
