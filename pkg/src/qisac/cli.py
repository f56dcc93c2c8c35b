"""Command-line entry point: ``qisac run ...`` and ``qisac selftest``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from collections import defaultdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, nn
from .config import RunConfig, parse_config
from .errors import QisacError
from .selftest import run_selftest
from .sweep import format_csv, run_jobs, sweep_jobs

log = logging.getLogger("qisac")


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_run_flags(p: argparse.ArgumentParser):
    S = argparse.SUPPRESS
    p.add_argument("--config", metavar="PATH", help="JSON config file or a previous manifest.json")
    p.add_argument("--d", type=_int_list, default=S, help="qudit dimension(s), e.g. 8 or 8,10")
    p.add_argument("--d-prime", type=int, default=S, help="run a single message alphabet size")
    p.add_argument("--d-prime-list", type=_int_list, default=S, help="alphabet sizes to sweep (default 1..d)")
    p.add_argument("--k", type=int, default=S, help="number of channel grid points")
    p.add_argument("--channel-variant", choices=["literal-unitary", "linear", "constant"], default=S)
    p.add_argument("--ansatz-depth", type=int, default=S)
    p.add_argument("--hidden", type=int, default=S, help="hidden layer width")
    p.add_argument("--batch", type=int, default=S)
    p.add_argument("--outer-iters", type=int, default=S)
    p.add_argument("--lr-mu", type=float, default=S)
    p.add_argument("--seeds", type=_int_list, default=S)
    p.add_argument("--jobs", type=int, default=S, help="worker processes")
    p.add_argument("--out", default=S, help="output directory")
    p.add_argument("--single", action="store_true", default=S, help="one back-off point only")
    p.add_argument("--save-params", action="store_true", default=S, help="write network checkpoints")
    preset = p.add_mutually_exclusive_group()
    preset.add_argument("--fast", action="store_true", help="small preset (d=4, hidden 128)")
    preset.add_argument("--paper", action="store_true", help="full reproduction preset (d=8,10)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qisac", description=__doc__)
    parser.add_argument("--version", action="version", version=f"qisac {__version__}")
    parser.add_argument("--selftest", action="store_true", help="same as the selftest subcommand")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command")
    run = sub.add_parser("run", help="train and evaluate a back-off sweep")
    _add_run_flags(run)
    st = sub.add_parser("selftest", help="fast invariant checks")
    st.add_argument("--corrupt-cx", action="store_true", help=argparse.SUPPRESS)
    return parser


def _flag_values(args: argparse.Namespace) -> dict:
    skip = {"command", "config", "fast", "paper", "selftest", "verbose", "corrupt_cx"}
    return {k: v for k, v in vars(args).items() if k not in skip}


def _atomic_write(path: Path, data: str | bytes):
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _summary(records) -> str:
    groups = defaultdict(list)
    for r in records:
        groups[(r.d, r.delta_b, r.d_prime, r.variant)].append(r)
    lines = [f"{'d':>3} {'d_prime':>7} {'delta_b':>8} {'variant':>9} {'p_succ':>7} {'p_acc':>7} {'throughput':>10}"]
    for (d, db, dp, variant), rs in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][3])):
        ps = np.mean([r.p_succ for r in rs])
        pa = np.mean([r.p_acc for r in rs])
        tp = np.mean([r.throughput for r in rs])
        lines.append(f"{d:>3} {dp:>7} {db:>8.3f} {variant:>9} {ps:>7.3f} {pa:>7.3f} {tp:>10.3f}")
    return "\n".join(lines)


def cmd_run(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise PermissionError(f"output directory {out} is not writable")
    except OSError as exc:
        print(f"error: cannot write to {out}: {exc}", file=sys.stderr)
        return 2

    started = datetime.now(timezone.utc).isoformat()
    jobs = []
    for d in cfg.d:
        jobs += sweep_jobs(cfg.protocol(d), cfg.training(), cfg.d_primes(d), cfg.seeds)
    log.info("running %d training jobs on %d worker(s)", len(jobs), cfg.jobs)
    results = run_jobs(jobs, cfg.jobs)
    records = [r for r, _, _ in results]

    log_lines = []
    for record, history, _ in results:
        for h in history:
            entry = {"d": record.d, "d_prime": record.d_prime, "variant": record.variant, "seed": record.seed}
            entry.update(h)
            log_lines.append(json.dumps(entry, sort_keys=True))

    manifest = {
        "artifact_version": __version__,
        "config": cfg.to_dict(),
        "seeds": cfg.seeds,
        "outputs": {"results": "results.csv", "metrics_log": "metrics.log", "manifest": "manifest.json"},
        "started_at": started,
        "finished_at": datetime.now(timezone.utc).isoformat(),
    }
    try:
        if cfg.save_params:
            _save_checkpoints(out, results)
        _atomic_write(out / "results.csv", format_csv(records))
        _atomic_write(out / "metrics.log", "\n".join(log_lines) + "\n")
        _atomic_write(out / "manifest.json", json.dumps(manifest, indent=2) + "\n")
    except OSError as exc:
        print(f"error: writing results failed: {exc}", file=sys.stderr)
        return 2
    print(_summary(records))
    print(f"wrote {out / 'results.csv'}")
    return 0


def _save_checkpoints(out: Path, results):
    ckpt = out / "checkpoints"
    ckpt.mkdir(exist_ok=True)
    for record, _, state in results:
        stem = f"d{record.d}_dp{record.d_prime}_{record.variant}_seed{record.seed}"
        nn.save_params(ckpt / f"{stem}_decoder.npz", state.theta)
        nn.save_params(ckpt / f"{stem}_estimator.npz", state.phi)
        np.save(ckpt / f"{stem}_angles.npy", state.mu.angles)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.selftest or args.command == "selftest":
        return 0 if run_selftest(corrupt_cx=getattr(args, "corrupt_cx", False)) else 1
    if args.command != "run":
        parser.print_help()
        return 2
    preset = "fast" if args.fast else "paper" if args.paper else None
    try:
        cfg = parse_config(args.config, _flag_values(args), preset)
    except QisacError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return cmd_run(cfg)


if __name__ == "__main__":
    sys.exit(main())
