"""Back-off sweep, identity-measurement baseline and the results CSV."""

from __future__ import annotations

import csv
import io
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

from .protocol import ProtocolConfig, rate_plan
from .training import TrainConfig, TrainState, run_training

CSV_HEADER = ("d", "d_prime", "delta_b", "bits", "p_succ", "p_acc", "throughput", "variant", "seed",
              "wall_time_s")
VARIANTS = ("trained", "identity")


@dataclass(frozen=True)
class MetricsRecord:
    d: int
    d_prime: int
    delta_b: float
    bits: float
    p_succ: float
    p_acc: float
    variant: str
    seed: int
    wall_time_s: float = 0.0

    @property
    def throughput(self) -> float:
        return self.bits * self.p_succ

    def sort_key(self):
        return (self.d, self.delta_b, VARIANTS.index(self.variant), self.seed)

    def csv_row(self) -> list[str]:
        return [str(self.d), str(self.d_prime), _g(self.delta_b), _g(self.bits), _g(self.p_succ),
                _g(self.p_acc), _g(self.throughput), self.variant, str(self.seed), _g(self.wall_time_s)]


def _g(v: float) -> str:
    # 6 significant digits; normalise -0
    return f"{v:.6g}" if v != 0 else "0"


def train_point(pcfg: ProtocolConfig, tcfg: TrainConfig, variant: str = "trained",
                callback=None) -> tuple[MetricsRecord, TrainState]:
    """Train one (d, d', seed) point with either the trainable or the identity measurement."""
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    pcfg = replace(pcfg, bypass=(variant == "identity"))
    start = time.perf_counter()
    state = run_training(pcfg, tcfg, callback=callback)
    elapsed = time.perf_counter() - start
    plan = rate_plan(pcfg.d, pcfg.d_prime)
    record = MetricsRecord(
        d=pcfg.d,
        d_prime=pcfg.d_prime,
        delta_b=plan.backoff,
        bits=plan.bits,
        p_succ=state.final["p_succ"],
        p_acc=state.final["p_acc"],
        variant=variant,
        seed=tcfg.seed,
        wall_time_s=elapsed,
    )
    return record, state


def identity_baseline(pcfg: ProtocolConfig, tcfg: TrainConfig) -> MetricsRecord:
    """Conventional superdense measurement: angles bypassed, same classical budgets."""
    return train_point(pcfg, tcfg, "identity")[0]


def _job(args):
    pcfg, tcfg, variant = args
    history = []
    record, state = train_point(pcfg, tcfg, variant, callback=history.append)
    return record, history, state


def sweep_jobs(pcfg: ProtocolConfig, tcfg: TrainConfig, d_primes=None, seeds=(0,)):
    d_primes = range(1, pcfg.d + 1) if d_primes is None else d_primes
    return [
        (replace(pcfg, d_prime=dp), replace(tcfg, seed=seed), variant)
        for dp in d_primes
        for seed in seeds
        for variant in VARIANTS
    ]


def run_jobs(jobs, n_workers: int = 1):
    """Run (pcfg, tcfg, variant) jobs into (record, history, state) triples.

    Results come back sorted by record, whatever the worker count.
    """
    if n_workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_job, jobs))
    else:
        results = [_job(j) for j in jobs]
    return sorted(results, key=lambda r: r[0].sort_key())


def sweep_backoff(pcfg: ProtocolConfig, tcfg: TrainConfig, d_primes=None, seeds=(0,),
                  n_workers: int = 1) -> list[MetricsRecord]:
    """Trained and identity records for every d' (default 1..d) and seed, sorted by back-off."""
    return [r for r, _, _ in run_jobs(sweep_jobs(pcfg, tcfg, d_primes, seeds), n_workers)]


def format_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow(r.csv_row())
    return buf.getvalue()


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
