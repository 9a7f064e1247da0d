"""Command-line entry point.

Subcommands::

    histrack simulate   --config F --out DIR
    histrack track      --in DIR [--assoc-config F] --out F [--with-attention]
    histrack eval       --gt F --res F [--metrics mota,idf1,hota]
    histrack complexity --n N --c C --m M --dff D [--scan-max K]
    histrack gradcheck  --loss circle|triplet|motip [--trials T] [--tol E]

Exit status: 0 on success, 1 on validation failure or bad usage, 2 on I/O errors.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import complexity as cx
from .association import AssociationConfig, Detection
from .gradcheck import CHECKS
from .metrics import MetricError, evaluate
from .sim.config import ConfigError, ScenarioConfig, dump_kv, load_association_config, load_scenario_config
from .sim.motfile import MotParseError, MotRow, ensure_dir, read_mot_file, rows_to_frames, write_mot_file
from .sim.pipeline import AttentionConfig, run_pipeline
from .sim.scenario import generate_scenario

OUT_DIR_ENV = "HISTRACK_OUT_DIR"
EXIT_OK, EXIT_INVALID, EXIT_IO = 0, 1, 2

GT_FILE = "gt.txt"
DET_FILE = "det.txt"
EMB_FILE = "det_emb.npy"
SCENARIO_FILE = "scenario.cfg"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _print_config(title: str, text: str) -> None:
    print(f"# {title}")
    sys.stdout.write(text)


def cmd_simulate(args) -> int:
    cfg = load_scenario_config(args.config) if args.config else ScenarioConfig()
    if args.seed is not None:
        cfg = ScenarioConfig(**{**cfg.__dict__, "seed": args.seed})
    _print_config("scenario", dump_kv(cfg))
    frames = generate_scenario(cfg)
    out = ensure_dir(args.out)
    gt_rows, det_rows, embs = [], [], []
    for obs in frames:
        gt_rows.extend(MotRow(obs.frame, ident, *box, conf=1.0) for ident, box in obs.ground_truth.entries)
        for d in obs.detections:
            det_rows.append(MotRow(obs.frame, -1, *d.box, conf=d.confidence))
            embs.append(d.embedding)
    write_mot_file(gt_rows, out / GT_FILE)
    write_mot_file(det_rows, out / DET_FILE)
    np.save(out / EMB_FILE, np.array(embs).reshape(len(embs), cfg.embed_dim))
    (out / SCENARIO_FILE).write_text(dump_kv(cfg))
    print(f"wrote {len(frames)} frames, {len(gt_rows)} gt rows, {len(det_rows)} detections to {out}")
    return EXIT_OK


def _load_detections(directory: Path):
    rows = read_mot_file(directory / DET_FILE)
    embs = np.load(directory / EMB_FILE)
    if embs.shape[0] != len(rows):
        raise ConfigError(f"{len(rows)} detections but {embs.shape[0]} embeddings")
    by_frame: dict[int, list[Detection]] = {}
    for row, e in zip(rows, embs):
        by_frame.setdefault(row.frame, []).append(Detection(row.box, row.conf, e / np.linalg.norm(e)))
    return by_frame


def cmd_track(args) -> int:
    directory = Path(args.input)
    assoc = load_association_config(args.assoc_config) if args.assoc_config else AssociationConfig()
    attn = AttentionConfig() if args.with_attention else None
    _print_config("association", dump_kv(assoc))
    if attn is not None:
        _print_config("attention", dump_kv(attn))
    by_frame = _load_detections(directory)
    gt_path = directory / GT_FILE
    gt = rows_to_frames(read_mot_file(gt_path)) if gt_path.exists() else []
    last = max([*by_frame, *(g.frame for g in gt), 0])
    gt_map = {g.frame: g for g in gt}
    stream = [(f, by_frame.get(f, [])) for f in range(1, last + 1)]
    result = run_pipeline(stream, assoc, attn)
    write_mot_file(result.rows, args.out)
    print(f"wrote {len(result.rows)} result rows to {args.out}")
    if gt:
        frames = [gt_map.get(f) or rows_to_frames([], [f])[0] for f in range(1, last + 1)]
        report = evaluate(frames, rows_to_frames(result.rows, range(1, last + 1)))
        sys.stdout.write(report.as_text())
    return EXIT_OK


def cmd_eval(args) -> int:
    gt = rows_to_frames(read_mot_file(args.gt))
    res = rows_to_frames(read_mot_file(args.res))
    wanted = [m.strip().lower() for m in args.metrics.split(",") if m.strip()]
    keys = []
    for m in wanted:
        if m == "hota":
            keys += ["hota", "deta", "assa"]
        elif m == "mota":
            keys += ["mota", "tp", "fp", "fn", "idsw"]
        elif m == "idf1":
            keys.append("idf1")
        else:
            raise ConfigError(f"unknown metric {m!r}")
    print(f"# eval\ngt = {args.gt}\nres = {args.res}\nmetrics = {','.join(wanted)}\niou_thresh = {args.iou}")
    report = evaluate(gt, res, args.iou)
    sys.stdout.write(report.as_text(keys))
    return EXIT_OK


def cmd_complexity(args) -> int:
    cfg = cx.DecoderCostConfig(args.n, args.c, args.m, args.dff)
    print(f"# complexity\nn = {args.n}\nc = {args.c}\nm = {args.m}\ndff = {args.dff}\nscan_max = {args.scan_max}")
    th = cx.delta_n_threshold(cfg, args.scan_max)
    print(f"b: {th.b:,}")
    print(f"constant_term: {th.c:,}")
    print(f"discriminant: {th.discriminant:,}")
    print(f"sqrt_discriminant: {th.sqrt_discriminant:.2f}")
    print(f"positive_root: {th.real_root:.4f}")
    print(f"threshold_closed_form: {th.integer_threshold}")
    print(f"threshold_scan: {th.scan_threshold}")
    print(f"agree: {th.agrees}")
    inputs = {"n_queries": args.n, "memory_len": args.m, "channel_dim": args.c, "ffn_dim": args.dff}
    if inputs == cx.PUBLISHED_INPUTS:
        pub = cx.PUBLISHED
        print("published vs computed:")
        print(f"  b: {pub['b']:,} vs {th.b:,}")
        print(f"  discriminant: {pub['discriminant']:,} vs {th.discriminant:,}")
        print(f"  sqrt_discriminant: {pub['sqrt_discriminant']:.2f} vs {th.sqrt_discriminant:.2f}")
        print(f"  positive_root: {pub['root']} vs {th.real_root:.4f}")
        print(f"  threshold: {pub['threshold']} vs {th.integer_threshold}")
        if pub["threshold"] != th.scan_threshold:
            print(f"  DISCREPANCY: direct scan gives delta_n >= {th.scan_threshold}, published figure is {pub['threshold']}")
    hi = max(args.scan_max or 0, (th.integer_threshold or 0) + 2)
    print(f"{'delta_n':>8} {'motr':>16} {'fasttracktr':>16} {'gap':>14}")
    for row in cx.sweep(cfg, range(0, hi + 1)):
        print(f"{row['delta_n']:>8} {row['motr']:>16,} {row['fasttracktr']:>16,} {row['gap']:>14,}")
    return EXIT_OK if th.agrees else EXIT_INVALID


def cmd_gradcheck(args) -> int:
    print(f"# gradcheck\nloss = {args.loss}\ntrials = {args.trials}\ntol = {args.tol}\nseed = {args.seed}")
    res = CHECKS[args.loss](trials=args.trials, seed=args.seed, tol=args.tol)
    print(f"max_rel_error: {res.max_rel_error:.3e}")
    print(f"result: {'pass' if res.passed else 'FAIL'}")
    return EXIT_OK if res.passed else EXIT_INVALID


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="histrack", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    default_out = os.environ.get(OUT_DIR_ENV, "histrack_out")

    s = sub.add_parser("simulate", help="generate a synthetic scenario")
    s.add_argument("--config", help="scenario config (key = value); defaults if omitted")
    s.add_argument("--out", default=default_out, help=f"output directory (default ${OUT_DIR_ENV} or ./histrack_out)")
    s.add_argument("--seed", type=int, help="override the scenario seed")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("track", help="track detections from a simulate directory")
    t.add_argument("--in", dest="input", default=default_out)
    t.add_argument("--assoc-config")
    t.add_argument("--out", required=True)
    t.add_argument("--with-attention", action="store_true")
    t.set_defaults(func=cmd_track)

    e = sub.add_parser("eval", help="score a result file against ground truth")
    e.add_argument("--gt", required=True)
    e.add_argument("--res", required=True)
    e.add_argument("--metrics", default="mota,idf1,hota")
    e.add_argument("--iou", type=float, default=0.5)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("complexity", help="decoder cost model and delta-N threshold")
    c.add_argument("--n", type=int, default=300)
    c.add_argument("--c", type=int, default=256)
    c.add_argument("--m", type=int, default=8400)
    c.add_argument("--dff", type=int, default=1024)
    c.add_argument("--scan-max", type=int, default=20)
    c.set_defaults(func=cmd_complexity)

    g = sub.add_parser("gradcheck", help="finite-difference check of loss gradients")
    g.add_argument("--loss", choices=sorted(CHECKS), default="circle")
    g.add_argument("--trials", type=int, default=100)
    g.add_argument("--tol", type=float, default=1e-5)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_INVALID
    try:
        return args.func(args)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, MotParseError, MetricError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
