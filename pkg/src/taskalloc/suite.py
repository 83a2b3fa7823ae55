"""Seed sweeps, CSV output and the worker-time / runtime comparison table.

Layout written under ``out_dir``::

    <config name>/seed_<s>.csv     one row per round
    <config name>/aggregate.csv    per-round mean and std over seeds
    summary.csv, summary.txt       comparison table (``table`` only)
"""
from __future__ import annotations

import csv
import io
import math
import os
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .simulator import run_experiment

COLUMNS = ("round", "round_time", "cum_runtime", "cum_worker_time", "proxy_loss", "cum_regret", "suboptimality")


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def atomic_write(path, text: str):
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    try:
        tmp.write_text(text)
        os.replace(tmp, path)
    except OSError as exc:
        tmp.unlink(missing_ok=True)
        raise OSError(f"{path}: {exc.strerror or exc}") from exc


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


@dataclass
class CellResult:
    """Outcome of one ``(config, seed)`` run."""

    name: str
    n: int
    policy: str
    seed: int
    path: Path
    rounds: int
    cum_runtime: float
    cum_worker_time: float
    reached: bool  # threshold crossed (always True when no threshold is set)
    data: np.ndarray | None = None  # rounds x len(COLUMNS)


def run_cell(config, seed: int, out_dir, keep_data: bool = True) -> CellResult:
    cell_dir = Path(out_dir) / config.name
    cell_dir.mkdir(parents=True, exist_ok=True)
    rows = [
        (r.round, r.round_time, r.cum_runtime, r.cum_worker_time, r.proxy_loss, r.cum_regret, r.suboptimality)
        for r in run_experiment(config, seed)
    ]
    path = cell_dir / f"seed_{seed}.csv"
    atomic_write(path, _csv_text(COLUMNS, ([_fmt(v) for v in row] for row in rows)))
    last = rows[-1]
    reached = config.threshold is None or last[-1] < config.threshold
    return CellResult(
        name=config.name,
        n=config.n,
        policy=config.policy.kind,
        seed=seed,
        path=path,
        rounds=last[0],
        cum_runtime=last[2],
        cum_worker_time=last[3],
        reached=reached,
        data=np.array(rows, dtype=float) if keep_data else None,
    )


def _run_cell_args(args):
    return run_cell(*args)


def write_aggregate(results, path):
    """Per-round mean and population std over seeds.

    Runs that stop at a threshold have different lengths; the aggregate
    covers the rounds that every seed reached.
    """
    data = [r.data for r in results]
    m = min(len(d) for d in data)
    stack = np.stack([d[:m] for d in data])
    mean = stack.mean(axis=0)
    std = stack.std(axis=0)
    header = ["round"]
    for col in COLUMNS[1:]:
        header += [f"{col}_mean", f"{col}_std"]
    rows = []
    for i in range(m):
        row = [str(i + 1)]
        for j in range(1, len(COLUMNS)):
            row += [_fmt(mean[i, j]), _fmt(std[i, j])]
        rows.append(row)
    atomic_write(path, _csv_text(header, rows))


def run_suite(configs, out_dir, parallel: int = 1, seeds=None):
    """Run every ``(config, seed)`` cell; returns ``CellResult``s in input order."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = [c.name for c in configs]
    if len(set(names)) != len(names):
        raise ValueError(f"config names must be unique, got {names}")
    jobs = [(c, s, out_dir) for c in configs for s in (seeds or c.seeds)]
    if parallel > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=parallel) as ex:
            results = list(ex.map(_run_cell_args, jobs))
    else:
        results = [run_cell(*job) for job in jobs]
    by_name = defaultdict(list)
    for r in results:
        by_name[r.name].append(r)
    for name, group in by_name.items():
        write_aggregate(group, out_dir / name / "aggregate.csv")
    return results


# -- comparison table ------------------------------------------------------------------


@dataclass
class SummaryRow:
    n: int
    policy: str
    worker_time_ratio: float  # GTA worker time / policy worker time
    runtime_ratio: float  # policy runtime / GTA runtime
    rounds: float  # mean rounds to threshold
    flagged: bool = False
    note: str = ""


@dataclass
class SummaryTable:
    rows: list

    @property
    def flagged(self):
        return [r for r in self.rows if r.flagged]

    def get(self, n, policy):
        for r in self.rows:
            if r.n == n and r.policy == policy:
                return r
        raise KeyError((n, policy))

    def to_csv(self):
        return _csv_text(
            ("n", "policy", "worker_time_ratio", "runtime_ratio", "rounds", "flagged", "note"),
            (
                (r.n, r.policy, _fmt(r.worker_time_ratio), _fmt(r.runtime_ratio), _fmt(r.rounds), int(r.flagged), r.note)
                for r in self.rows
            ),
        )

    def to_text(self):
        lines = [f"{'n':>5}  {'policy':<14}{'worker-time':>12}{'runtime':>10}{'rounds':>10}"]
        for r in self.rows:
            flag = f"  FLAGGED: {r.note}" if r.flagged else ""
            lines.append(
                f"{r.n:>5}  {r.policy:<14}{r.worker_time_ratio:>12.3f}{r.runtime_ratio:>10.2f}{r.rounds:>10.0f}{flag}"
            )
        return "\n".join(lines) + "\n"

    def write(self, out_dir):
        out_dir = Path(out_dir)
        atomic_write(out_dir / "summary.csv", self.to_csv())
        atomic_write(out_dir / "summary.txt", self.to_text())


POLICY_ORDER = ("GTA", "OFTA", "UTA", "ATA", "ATAEmpirical")


def table_ratios(results) -> SummaryTable:
    """Average over seeds of the per-seed ratios against GTA at the same ``n``.

    Each run's totals are taken at the round it first crossed the threshold
    (runs stop there). Cells where the policy or its GTA partner never
    crossed it, or where GTA is missing, are flagged rather than dropped.
    """
    cells = defaultdict(dict)  # (n, policy) -> seed -> result
    for r in results:
        cells[(r.n, r.policy)][r.seed] = r
    rows = []
    key = lambda k: (k[0], POLICY_ORDER.index(k[1]) if k[1] in POLICY_ORDER else len(POLICY_ORDER), k[1])
    for n, policy in sorted(cells, key=key):
        runs = cells[(n, policy)]
        gta = cells.get((n, "GTA"))
        notes = []
        if gta is None:
            notes.append("no GTA run at this n")
            gta = {}
        missing = sorted(set(runs) - set(gta))
        if gta and missing:
            notes.append(f"no GTA run for seeds {missing}")
        unreached = sorted(s for s, r in runs.items() if not r.reached)
        if unreached:
            notes.append(f"threshold not reached for seeds {unreached}")
        gta_unreached = sorted(s for s in runs if s in gta and not gta[s].reached)
        if gta_unreached and policy != "GTA":
            notes.append(f"GTA threshold not reached for seeds {gta_unreached}")
        paired = [s for s in sorted(runs) if s in gta]
        if paired:
            wt = np.mean([gta[s].cum_worker_time / runs[s].cum_worker_time for s in paired])
            rt = np.mean([runs[s].cum_runtime / gta[s].cum_runtime for s in paired])
        else:
            wt = rt = math.nan
        rows.append(
            SummaryRow(
                n=n,
                policy=policy,
                worker_time_ratio=float(wt),
                runtime_ratio=float(rt),
                rounds=float(np.mean([r.rounds for r in runs.values()])),
                flagged=bool(notes),
                note="; ".join(notes),
            )
        )
    return SummaryTable(rows)
