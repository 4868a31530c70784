"""``ranksort`` command line: verification suite, training runs and sweeps.

Exit codes: 0 success, 1 a check failed or a run errored, 2 usage error,
3 unreadable or malformed config/problem file.  Failures print a one-line
JSON object ``{"error": ..., "message": ...}`` on stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .baselines import AP_DEFAULT_DELTA, ap_loss
from .config import ConfigError, ExperimentConfig, load_config, load_problem
from .core import DEFAULT_DELTA, SmoothStep
from .framework import LossReport
from .gradcheck import run_checks
from .localisation import giou_with_grad
from .rs_loss import rs_loss
from .synth import (
    EPOCH_COLUMNS,
    LossChoice,
    cross_entropy,
    focal_loss,
    imbalance_sweep,
    sorting_ablation,
    run_cells,
    train,
)

COMMANDS = ("gradcheck", "train", "sweep-imbalance", "ablate-sorting", "sweep-delta", "eval-loss")
ITERATION_COLUMNS = ("epoch", "batch", "cls_loss", "box_loss", "lambda_box", "cls_grad_l1", "box_grad_l1")
SWEEP_COLUMNS = ("ratio", "loss", "seed", "ap", "spearman_rho")
DELTA_COLUMNS = ("delta", "seed", "ap", "spearman_rho")


class CommandFailed(RuntimeError):
    pass


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file (defaults are used when omitted)")
    common.add_argument("--out", help="directory for CSV/JSON artifacts (stdout when omitted)")
    common.add_argument("--seed", type=int, help="override the configured seed(s)")
    common.add_argument("--loss", choices=("rs", "ap", "ce", "focal"), help="override the configured loss")
    common.add_argument("--delta", type=float, help="ramp half-width of the ranking losses")

    parser = argparse.ArgumentParser(prog="ranksort", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)
    sub.add_parser("gradcheck", parents=[common], help="oracle equivalence and invariant checks")
    sub.add_parser("train", parents=[common], help="one synthetic training run")
    sub.add_parser("sweep-imbalance", parents=[common], help="final AP per (ratio, loss, seed)")
    sub.add_parser("ablate-sorting", parents=[common], help="RS with and without the sorting term")
    sub.add_parser("sweep-delta", parents=[common], help="final AP and rho per ramp half-width")
    ev = sub.add_parser("eval-loss", parents=[common], help="loss report for a problem file as JSON")
    ev.add_argument("problem", help="CSV with header logit,label[,x1,y1,x2,y2,gx1,gy1,gx2,gy2]")
    return parser


def _csv_text(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


class Emitter:
    """Writes named artifacts into ``out`` or, without a directory, to stdout."""

    def __init__(self, out: str | None):
        self.out = Path(out) if out else None
        if self.out is not None:
            self.out.mkdir(parents=True, exist_ok=True)

    def emit(self, name: str, text: str):
        if self.out is None:
            sys.stdout.write(text)
        else:
            (self.out / name).write_text(text, encoding="utf-8")

    def note(self, text: str):
        if self.out is not None:
            print(text)


def _choice(cfg: ExperimentConfig, args) -> LossChoice:
    if args.loss is None:
        return cfg.train.loss
    return replace(cfg.train.loss, name="cross_entropy" if args.loss == "ce" else args.loss)


def _train_kwargs(cfg: ExperimentConfig, args) -> dict:
    kw = cfg.train.kwargs()
    if args.delta is not None:
        kw["delta"] = args.delta
    return kw


def _seeds(cfg: ExperimentConfig, args):
    return (args.seed,) if args.seed is not None else cfg.sweep.seeds


def cmd_gradcheck(cfg, args, em: Emitter) -> int:
    g = cfg.gradcheck
    seed = g.seed if args.seed is None else args.seed
    results = run_checks(g.problems, g.max_n, seed)
    for r in results:
        print(r.line())
    deviations = [r.value for r in results if r.tolerance > 0.0]
    print(f"max deviation {max(deviations)!r}")
    if em.out is not None:
        em.emit("gradcheck.json", _json_text(
            {"problems": g.problems, "max_n": g.max_n, "seed": seed,
             "checks": [asdict(r) for r in results]}))
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise CommandFailed("checks failed: " + ", ".join(failed))
    return 0


def cmd_train(cfg, args, em: Emitter) -> int:
    data = cfg.data if args.seed is None else replace(cfg.data, seed=args.seed)
    report = train(data, _choice(cfg, args), **_train_kwargs(cfg, args))
    em.emit("epochs.csv", _csv_text(
        EPOCH_COLUMNS, ([getattr(e, c) for c in EPOCH_COLUMNS] for e in report.epochs)))
    if em.out is not None:
        em.emit("iterations.csv", _csv_text(
            ITERATION_COLUMNS, ([getattr(r, c) for c in ITERATION_COLUMNS] for r in report.iterations)))
        em.emit("report.json", _json_text(report.to_dict()))
        final = report.final
        if final is None:
            em.note("trained 0 epochs")
        else:
            em.note(f"{report.loss}: final ap {final.ap!r} spearman_rho {final.spearman_rho!r}")
    return 0


def _sweep_summary(rows, ratios):
    """AP drop from the first to the last ratio, averaged over seeds, per loss."""
    out = []
    for loss in dict.fromkeys(r.loss for r in rows):
        first = [r.ap for r in rows if r.loss == loss and r.ratio == ratios[0]]
        last = [r.ap for r in rows if r.loss == loss and r.ratio == ratios[-1]]
        a, b = float(np.mean(first)), float(np.mean(last))
        out.append((loss, a, b, a - b))
    return out


def cmd_sweep_imbalance(cfg, args, em: Emitter) -> int:
    losses = cfg.sweep.losses if args.loss is None else (_choice(cfg, args),)
    ratios = [float(r) for r in cfg.sweep.ratios]
    rows = imbalance_sweep(ratios, losses, _seeds(cfg, args), cfg.data, **_train_kwargs(cfg, args))
    em.emit("sweep_imbalance.csv", _csv_text(SWEEP_COLUMNS, (
        [r.ratio, r.loss, r.seed, r.ap, r.spearman_rho] for r in rows)))
    if em.out is not None:
        summary = _sweep_summary(rows, (rows[0].ratio, rows[-1].ratio))
        em.emit("sweep_imbalance_summary.csv", _csv_text(
            ("loss", "ap_first_ratio", "ap_last_ratio", "ap_drop"), summary))
        for loss, a, b, drop in summary:
            em.note(f"{loss}: ap {a!r} -> {b!r} (drop {drop!r})")
    return 0


def cmd_ablate_sorting(cfg, args, em: Emitter) -> int:
    kw = _train_kwargs(cfg, args)
    rows = sorting_ablation(_seeds(cfg, args), cfg.data, **kw)
    em.emit("ablate_sorting.csv", _csv_text(SWEEP_COLUMNS, (
        [r.ratio, r.loss, r.seed, r.ap, r.spearman_rho] for r in rows)))
    if em.out is not None:
        for loss in dict.fromkeys(r.loss for r in rows):
            rho = float(np.mean([r.spearman_rho for r in rows if r.loss == loss]))
            em.note(f"{loss}: mean spearman_rho {rho!r}")
    return 0


def cmd_sweep_delta(cfg, args, em: Emitter) -> int:
    deltas = (args.delta,) if args.delta is not None else cfg.sweep.deltas
    base = cfg.train.kwargs()
    choice = _choice(cfg, args)
    cells = []
    for d in deltas:
        for seed in _seeds(cfg, args):
            cells.append((replace(cfg.data, seed=int(seed)), choice, dict(base, delta=float(d))))
    rows = run_cells(cells)
    em.emit("sweep_delta.csv", _csv_text(DELTA_COLUMNS, (
        [cell[2]["delta"], r.seed, r.ap, r.spearman_rho] for cell, r in zip(cells, rows))))
    return 0


def _loss_report(name: str, problem, delta: float | None) -> tuple[LossReport, float | None]:
    if name == "rs":
        d = DEFAULT_DELTA if delta is None else delta
        return rs_loss(problem, SmoothStep(d)), d
    if name == "ap":
        d = AP_DEFAULT_DELTA if delta is None else delta
        return ap_loss(problem, SmoothStep(d)), d
    fn = cross_entropy if name == "ce" else focal_loss
    value, grad = fn(problem.logits, problem.labels)
    return LossReport(value, [], grad), None


def cmd_eval_loss(cfg, args, em: Emitter) -> int:
    pf = load_problem(args.problem)
    name = args.loss or {"cross_entropy": "ce"}.get(cfg.train.loss.name, cfg.train.loss.name)
    report, delta = _loss_report(name, pf.problem, args.delta if args.delta is not None else cfg.train.delta)
    out = {"loss_name": name, "delta": delta, **report.to_dict()}
    if pf.pred_boxes is not None:
        g, _ = giou_with_grad(pf.pred_boxes, pf.gt_boxes)
        out["giou"] = [float(v) for v in g]
        out["box_loss"] = float(np.mean(1.0 - g)) if g.size else 0.0
    text = _json_text(out)
    if em.out is not None:
        em.emit("eval_loss.json", text)
    sys.stdout.write(text)
    return 0


HANDLERS = {
    "gradcheck": cmd_gradcheck,
    "train": cmd_train,
    "sweep-imbalance": cmd_sweep_imbalance,
    "ablate-sorting": cmd_ablate_sorting,
    "sweep-delta": cmd_sweep_delta,
    "eval-loss": cmd_eval_loss,
}


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        em = Emitter(args.out)
        return HANDLERS[args.command](cfg, args, em)
    except ConfigError as exc:
        return _fail("config_error", str(exc), 3)
    except CommandFailed as exc:
        return _fail("check_failed", str(exc), 1)
    except (ValueError, RuntimeError, OSError) as exc:
        return _fail(type(exc).__name__, str(exc), 1)


if __name__ == "__main__":
    sys.exit(main())
