"""Timing surface for the scan kernels: linear scan vs quadratic expansion.

For each sequence length the same random system is run through
``selective_scan`` (O(L)) and ``closed_form_scan`` (O(L^2)) and wall times
are recorded. The closed-to-scan time ratio must grow with L; the quadratic
signature shows up as a roughly L-fold growth of the ratio.

Numerical outputs (the checksum column) depend only on the seed; timings
are machine-dependent and informational.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass

import numpy as np

from .ssm import SsmParams, closed_form_scan, selective_scan, zoh_discretize


@dataclass
class BenchRow:
    length: int
    scan_seconds: float
    closed_seconds: float
    scan_tokens_per_s: float
    ratio: float
    checksum: float


def _case(rng: np.random.Generator, length: int, channels: int, state: int):
    params = SsmParams(
        A=-rng.uniform(0.1, 5.0, size=(channels, state)),
        B_seq=rng.normal(size=(length, channels, state)),
        C_out=rng.normal(size=(channels, state)),
        D_skip=rng.normal(size=channels),
        Delta_seq=rng.uniform(0.01, 2.0, size=(length, channels)),
    )
    x = rng.normal(size=(length, channels))
    return params, x


def _best_of(fn, repeats: int) -> tuple[float, object]:
    best = float("inf")
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = fn()
        best = min(best, time.perf_counter() - t0)
    return best, result


def run_bench(
    lengths: list[int],
    channels: int = 32,
    state: int = 16,
    seed: int = 0,
    repeats: int = 3,
) -> list[BenchRow]:
    rows = []
    for length in lengths:
        rng = np.random.default_rng([seed, length])
        params, x = _case(rng, length, channels, state)
        disc = zoh_discretize(params.A, params.B_seq, params.Delta_seq)
        scan_reps = repeats
        closed_reps = repeats if length <= 512 else 1
        t_scan, (y_scan, _) = _best_of(
            lambda: selective_scan(disc, params.C_out, params.D_skip, x), scan_reps
        )
        t_closed, _ = _best_of(lambda: closed_form_scan(params, x), closed_reps)
        rows.append(
            BenchRow(
                length=length,
                scan_seconds=t_scan,
                closed_seconds=t_closed,
                scan_tokens_per_s=length / t_scan if t_scan > 0 else float("inf"),
                ratio=t_closed / t_scan if t_scan > 0 else float("inf"),
                checksum=float(np.abs(y_scan).sum()),
            )
        )
    return rows


def ratio_grows(rows: list[BenchRow]) -> bool:
    """The quadratic-vs-linear signature: the last ratio exceeds the first."""
    return len(rows) >= 2 and rows[-1].ratio > rows[0].ratio


def rows_to_csv(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["length", "scan_seconds", "closed_seconds", "scan_tokens_per_s", "ratio", "checksum"])
    for r in rows:
        writer.writerow(
            [r.length, f"{r.scan_seconds:.6g}", f"{r.closed_seconds:.6g}", f"{r.scan_tokens_per_s:.6g}", f"{r.ratio:.6g}", repr(r.checksum)]
        )
    return buf.getvalue()
