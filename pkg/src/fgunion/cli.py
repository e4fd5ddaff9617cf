"""Command-line interface.

One executable with subcommands: run (foreground union of a feature grid),
distill (train the logistic head), predict (apply a head), eval (metrics and
success rates), mce (seed-classifier error estimation), solve (the
background-fraction inequality), corner-audit (corner-prior validity).

Exit codes: 0 success, 1 user or input error, 2 internal error. Logs go to
stderr; machine-readable key=value results go to stdout.
"""

from __future__ import annotations

import argparse
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from fgunion import analysis, distill, ensemble, tensor_io
from fgunion.tensor_io import FormatError


class _CliError(Exception):
    """User-facing input error; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _CliError(message)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _require_parent(path: str) -> Path:
    p = Path(path)
    if not p.parent.exists():
        raise _CliError(f"output directory does not exist: {p.parent}")
    return p


def _load_gt_at(mask_shape, gt_path) -> np.ndarray:
    gt = tensor_io.read_mask(gt_path)
    if gt.shape != tuple(mask_shape):
        gt = analysis.downsample_gt(gt, *mask_shape)
    return gt


def _manifest_entries(path: str) -> list[tensor_io.ManifestEntry]:
    entries = tensor_io.load_manifest(path)
    if not entries:
        raise _CliError(f"manifest is empty: {path}")
    return entries


def _cmd_run(args) -> int:
    out_path = _require_parent(args.out)
    heat_path = _require_parent(args.heatmap) if args.heatmap else None
    grid = tensor_io.read_feature_grid(args.features)
    t0 = time.perf_counter()
    result = ensemble.union_cut(grid, bandwidth=args.bandwidth, workers=args.workers)
    _log(f"ran {grid.n_patches} voters on a {grid.height}x{grid.width} grid "
         f"in {time.perf_counter() - t0:.2f}s")
    tensor_io.write_mask(result.union_mask, out_path)
    if heat_path is not None:
        tensor_io.write_heatmap(result.inverted, heat_path)
    print(f"foreground_patches={int(result.union_mask.sum())}")
    print(f"corner_inverted={'true' if result.corner_inverted else 'false'}")
    return 0


def _cmd_distill(args) -> int:
    head_path = _require_parent(args.head)
    entries = _manifest_entries(args.manifest)
    mask_dir = Path(args.masks)
    samples = []
    for e in entries:
        mask_path = mask_dir / f"{e.image_id}.ucmk"
        if not mask_path.is_file():
            raise _CliError(f"missing union mask for {e.image_id}: {mask_path}")
        grid = tensor_io.read_feature_grid(e.feature_path)
        mask = tensor_io.read_mask(mask_path)
        if mask.shape != (grid.height, grid.width):
            raise _CliError(f"{e.image_id}: union mask dimensions do not match the features")
        samples.append((grid, mask))
    cfg = distill.TrainConfig(batch_size=args.batch_size, lr0=args.lr,
                              total_iterations=args.iterations, seed=args.seed)
    state = {}

    def on_iteration(it, loss, lr):
        state["loss"] = loss
        if it % 50 == 0:
            _log(f"iter={it} loss={loss:.6f} lr={lr:.6f}")

    head = distill.train(samples, cfg, on_iteration=on_iteration)
    distill.write_head(head, head_path)
    print(f"iterations={cfg.total_iterations}")
    if "loss" in state:
        print(f"final_loss={state['loss']:.6f}")
    return 0


def _cmd_predict(args) -> int:
    out_path = _require_parent(args.out)
    soft_path = _require_parent(args.soft) if args.soft else None
    head = distill.read_head(args.head)
    grid = tensor_io.read_feature_grid(args.features)
    soft, hard = distill.predict(head, grid)
    tensor_io.write_mask(hard, out_path)
    if soft_path is not None:
        tensor_io.write_heatmap(soft, soft_path)
    print(f"foreground_patches={int(hard.sum())}")
    return 0


def _cmd_eval(args) -> int:
    entries = _manifest_entries(args.manifest)
    pred_dir = Path(args.pred_dir)
    preds, gts = [], []
    for e in entries:
        pred_path = pred_dir / f"{e.image_id}.ucmk"
        if not pred_path.is_file():
            raise _CliError(f"missing prediction for {e.image_id}: {pred_path}")
        pred = tensor_io.read_mask(pred_path)
        if e.gt_mask_path is not None:
            gt_path = e.gt_mask_path
        elif args.gt_dir:
            gt_path = Path(args.gt_dir) / f"{e.image_id}.ucmk"
            if not gt_path.is_file():
                raise _CliError(f"missing ground truth for {e.image_id}: {gt_path}")
        else:
            raise _CliError(f"no ground truth for {e.image_id}: none in manifest and no --gt-dir")
        preds.append(pred)
        gts.append(_load_gt_at(pred.shape, gt_path))
    thresholds = [float(t) for t in args.thresholds.split(",") if t]
    if not thresholds:
        raise _CliError("no thresholds given")
    reports = [analysis.mask_metrics(p, g) for p, g in zip(preds, gts)]
    print(f"images={len(preds)}")
    print(f"metric={args.metric}")
    rates = []
    for thr in thresholds:
        rate = analysis.corunion(preds, gts, metric=args.metric, threshold=thr)
        rates.append(rate)
        print(f"corunion_{thr:.2f}={rate:.6f}")
    for name in ("accuracy", "iou", "precision", "recall", "f_beta"):
        print(f"mean_{name}={np.mean([getattr(r, name) for r in reports]):.6f}")
    judged = np.mean([analysis.judge_foreground(p, g, theta=args.theta) for p, g in zip(preds, gts)])
    stopped = np.mean([analysis.should_stop([p], g, gamma=args.gamma) for p, g in zip(preds, gts)])
    print(f"judged_foreground_fraction={judged:.6f}")
    print(f"coverage_stop_fraction={stopped:.6f}")
    if args.figures:
        from fgunion.figures import render_eval_figures
        per_image = [getattr(r, args.metric) for r in reports]
        for path in render_eval_figures(args.figures, args.metric, thresholds, rates, per_image):
            _log(f"wrote {path}")
    return 0


def _cmd_mce(args) -> int:
    entries = _manifest_entries(args.manifest)
    samples = []
    for e in entries:
        if e.gt_mask_path is None:
            raise _CliError(f"manifest entry {e.image_id} has no ground-truth mask")
        grid = tensor_io.read_feature_grid(e.feature_path)
        gt = _load_gt_at((grid.height, grid.width), e.gt_mask_path)
        samples.append((e.image_id, grid, gt))
    classifier = {"uv": "unit_voter", "cosine": "cosine"}[args.classifier]
    t0 = time.perf_counter()
    est = analysis.estimate_mce(samples, classifier=classifier,
                                subsample_seeds=args.subsample_seeds,
                                seed=args.seed, workers=args.workers)
    _log(f"estimated rates over {est.images_used} images / {est.seeds_used} seeds "
         f"in {time.perf_counter() - t0:.2f}s")
    for name in ("a", "b", "c", "d"):
        print(f"{name}={getattr(est, name):.6f}")
    print(f"images_used={est.images_used}")
    print(f"seeds_used={est.seeds_used}")
    print(f"images_skipped={est.images_skipped}")
    sol = analysis.solve_inequality(est)
    print(f"comparator={sol.comparator}")
    if sol.threshold is not None:
        print(f"threshold={sol.threshold:.6f}")
    return 0


def _cmd_solve(args) -> int:
    est = analysis.MceEstimate(args.a, args.b, args.c, args.d, 0, 0, 0)
    sol = analysis.solve_inequality(est)
    print(f"comparator={sol.comparator}")
    if sol.threshold is not None:
        print(f"threshold={sol.threshold:.6f}")
    return 0


def _cmd_corner_audit(args) -> int:
    entries = _manifest_entries(args.manifest)
    gts = []
    for e in entries:
        if e.gt_mask_path is None:
            raise _CliError(f"manifest entry {e.image_id} has no ground-truth mask")
        gts.append(tensor_io.read_mask(e.gt_mask_path))
    rate = analysis.corner_prior_success_rate(gts)
    print(f"corner_prior_success_rate={rate:.6f}")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="fgunion", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="detect the foreground union of a feature grid")
    run.add_argument("--features", required=True, help="input UCFT feature grid")
    run.add_argument("--out", required=True, help="output UCMK union mask")
    run.add_argument("--heatmap", help="optional output UCHT inverted heat map")
    run.add_argument("--bandwidth", type=float, default=ensemble.DEFAULT_BANDWIDTH,
                     help="mean-shift bandwidth on the 0..255 scale")
    run.add_argument("--workers", type=int, default=None, help="thread count (default: logical cores)")
    run.set_defaults(handler=_cmd_run)

    dst = sub.add_parser("distill", help="train a logistic head from union masks")
    dst.add_argument("--manifest", required=True)
    dst.add_argument("--masks", required=True, help="directory of {image_id}.ucmk union masks")
    dst.add_argument("--head", required=True, help="output UCWT head path")
    dst.add_argument("--iterations", type=int, default=600)
    dst.add_argument("--batch-size", type=int, default=50)
    dst.add_argument("--lr", type=float, default=0.05)
    dst.add_argument("--seed", type=int, default=3407)
    dst.set_defaults(handler=_cmd_distill)

    prd = sub.add_parser("predict", help="apply a trained head to a feature grid")
    prd.add_argument("--head", required=True)
    prd.add_argument("--features", required=True)
    prd.add_argument("--out", required=True, help="output UCMK mask")
    prd.add_argument("--soft", help="optional output UCHT of per-patch scores")
    prd.set_defaults(handler=_cmd_predict)

    ev = sub.add_parser("eval", help="score predictions against ground truth")
    ev.add_argument("--manifest", required=True)
    ev.add_argument("--pred-dir", required=True, help="directory of {image_id}.ucmk predictions")
    ev.add_argument("--gt-dir", help="ground-truth directory when the manifest has no gt column")
    ev.add_argument("--metric", choices=("iou", "precision", "recall"), default="iou")
    ev.add_argument("--thresholds", default="0.5,0.6,0.7,0.8,0.9",
                    help="comma-separated success thresholds")
    ev.add_argument("--theta", type=float, default=0.5, help="precision gate")
    ev.add_argument("--gamma", type=float, default=0.8, help="coverage stop fraction")
    ev.add_argument("--figures", help="directory to render report figures into")
    ev.set_defaults(handler=_cmd_eval)

    mce = sub.add_parser("mce", help="estimate seed-classifier error rates")
    mce.add_argument("--manifest", required=True)
    mce.add_argument("--classifier", choices=("uv", "cosine"), default="uv")
    mce.add_argument("--subsample-seeds", type=int, default=None)
    mce.add_argument("--seed", type=int, default=3407)
    mce.add_argument("--workers", type=int, default=None)
    mce.set_defaults(handler=_cmd_mce)

    slv = sub.add_parser("solve", help="solve the background-fraction inequality")
    slv.add_argument("a", type=float)
    slv.add_argument("b", type=float)
    slv.add_argument("c", type=float)
    slv.add_argument("d", type=float)
    slv.set_defaults(handler=_cmd_solve)

    aud = sub.add_parser("corner-audit", help="rate of ground truths leaving a corner empty")
    aud.add_argument("--manifest", required=True)
    aud.set_defaults(handler=_cmd_corner_audit)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.handler(args)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (FormatError, FileNotFoundError, IsADirectoryError, NotADirectoryError,
            PermissionError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
