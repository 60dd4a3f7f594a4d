"""Command-line surface: gen-data, train, eval, gradcheck, predict.

Exit codes: 0 success, 1 runtime failure (message on stderr), 2 usage
errors (argparse prints the usage text). Every flag overrides the
corresponding JSON config value.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .dataset import write_dataset
from .errors import RingDepthError
from .scene import generate_sample


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ringdepth",
        description="Surround-view depth estimation on procedural scenes.")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="render a procedural dataset")
    g.add_argument("--scenes", type=int, default=8)
    g.add_argument("--views", type=int, default=6)
    g.add_argument("--width", type=int, default=64)
    g.add_argument("--height", type=int, default=48)
    g.add_argument("--hfov", type=float, default=70.0)
    g.add_argument("--dmax", type=float, default=80.0)
    g.add_argument("--sparsity", type=float, default=0.3,
                   help="fraction of valid depth pixels kept for supervision")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)

    t = sub.add_parser("train", help="optimize a model on a dataset")
    t.add_argument("--config", help="run-config JSON file")
    t.add_argument("--data", help="dataset directory (overrides config)")
    t.add_argument("--out", help="output directory (overrides config)")
    t.add_argument("--seed", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--lambda-smooth", type=float)
    t.add_argument("--ablate-adjacent", action="store_true",
                   help="disable adjacent-view attention (self-attention only)")
    t.add_argument("--random-views", action="store_true",
                   help="shuffle view order per step, breaking the ring")

    e = sub.add_parser("eval", help="score a checkpoint against dense gt")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", help="write the JSON report here")
    e.add_argument("--median-scaling", action="store_true")

    c = sub.add_parser("gradcheck",
                       help="finite-difference suite on the 64-bit micro model")
    c.add_argument("--coords-per-param", type=int, default=4)
    c.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("predict", help="write per-view depth maps and previews")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    return parser


def _cmd_gen_data(args) -> int:
    samples = [generate_sample(seed=args.seed + i, n_views=args.views,
                               width=args.width, height=args.height,
                               d_max=args.dmax, hfov_deg=args.hfov,
                               keep_fraction=args.sparsity)
               for i in range(args.scenes)]
    write_dataset(samples, args.out, d_max=args.dmax)
    print(f"wrote {len(samples)} samples to {args.out}")
    return 0


def _cmd_train(args) -> int:
    from .trainer import RunConfig, train
    cfg = RunConfig.from_json_file(args.config) if args.config else RunConfig()
    for attr, value in (("data_dir", args.data), ("out_dir", args.out),
                        ("seed", args.seed), ("epochs", args.epochs),
                        ("batch_size", args.batch_size), ("lr", args.lr),
                        ("lambda_smooth", args.lambda_smooth)):
        if value is not None:
            setattr(cfg, attr, value)
    if args.ablate_adjacent:
        cfg.model.use_adjacent_attention = False
    if args.random_views:
        cfg.input_mode = "random_views"
    if not cfg.data_dir:
        print("train: no dataset given (--data or config data_dir)",
              file=sys.stderr)
        return 2
    cfg.__post_init__()
    result = train(cfg)
    last = result.log[-1]
    print(f"finished {last[0]} steps; final loss {last[3]:.6f}; "
          f"checkpoint at {result.ckpt_path}")
    return 0


def _cmd_eval(args) -> int:
    from .metrics import format_table
    from .trainer import evaluate
    frames, agg = evaluate(args.ckpt, args.data,
                           median_scaling=args.median_scaling,
                           out_path=args.out)
    print(format_table(frames, agg))
    if agg.n_pixels == 0:
        print("eval: no valid ground-truth pixels", file=sys.stderr)
        return 1
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradcheck import micro_model_suite
    report = micro_model_suite(coords_per_param=args.coords_per_param,
                               seed=args.seed)
    print(report)
    return 0 if report.passed else 1


def _cmd_predict(args) -> int:
    from .trainer import predict
    written = predict(args.ckpt, args.data, args.out)
    print(f"wrote {len(written)} depth maps under {args.out}")
    return 0


def cli(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    handlers = {"gen-data": _cmd_gen_data, "train": _cmd_train,
                "eval": _cmd_eval, "gradcheck": _cmd_gradcheck,
                "predict": _cmd_predict}
    try:
        return handlers[args.command](args)
    except RingDepthError as e:
        print(f"ringdepth {args.command}: {e}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
