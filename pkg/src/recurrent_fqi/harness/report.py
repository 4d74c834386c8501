"""CSV, text-table and SVG output for experiment results.

summary.csv columns (one row per configuration)::

    world, model, algo, start_mode, runs, lt_mean, lt_std, lt_na_count,
    lp_mean, lp_std, seconds_mean

Floats are written with ``repr`` so they parse back exactly; a missing
learning time is the literal ``NA``.
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..gridworlds import START_MODES, VARIANTS
from ..recnet import ARCHITECTURES
from ..valuelearn import ALGORITHMS
from .metrics import MetricSummary, welch_t_test

SUMMARY_COLUMNS = (
    "world", "model", "algo", "start_mode", "runs",
    "lt_mean", "lt_std", "lt_na_count", "lp_mean", "lp_std", "seconds_mean",
)
RUN_COLUMNS = (
    "world", "model", "algo", "start_mode", "run", "seed", "diverged",
    "learning_time", "learning_performance", "seconds",
)
FORMATS = ("csv", "table", "svg")
NA = "NA"


def _fmt(value) -> str:
    if value is None:
        return NA
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse_float(text: str) -> float | None:
    return None if text == NA else float(text)


def summary_rows(summaries: Iterable[MetricSummary]) -> list[list[str]]:
    return [[_fmt(getattr(s, c)) for c in SUMMARY_COLUMNS] for s in summaries]


def write_summary_csv(summaries: Iterable[MetricSummary], path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SUMMARY_COLUMNS)
        writer.writerows(summary_rows(summaries))
    return path


def read_summary_csv(path) -> list[MetricSummary]:
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(MetricSummary(
                world=row["world"],
                model=row["model"],
                algo=row["algo"],
                start_mode=row["start_mode"],
                runs=int(row["runs"]),
                lt_mean=_parse_float(row["lt_mean"]),
                lt_std=_parse_float(row["lt_std"]),
                lt_na_count=int(row["lt_na_count"]),
                lp_mean=float(row["lp_mean"]),
                lp_std=float(row["lp_std"]),
                seconds_mean=float(row["seconds_mean"]),
            ))
    return out


def write_runs_csv(results, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RUN_COLUMNS)
        for res in results:
            s = res.summary
            for i, rec in enumerate(res.records):
                writer.writerow([
                    s.world, s.model, s.algo, s.start_mode, i, rec.seed, int(rec.diverged),
                    _fmt(s.learning_times[i]),
                    _fmt(s.learning_performances[i]) if i < len(s.learning_performances) else NA,
                    _fmt(rec.seconds),
                ])
    return path


def mean_curve(records) -> np.ndarray:
    """Per-episode reward averaged over the runs that reached that episode."""
    n = max((len(r.rewards) for r in records), default=0)
    sums, counts = np.zeros(n), np.zeros(n)
    for r in records:
        k = len(r.rewards)
        sums[:k] += r.rewards
        counts[:k] += 1
    return sums / np.maximum(counts, 1)


def write_curves_csv(results, path) -> Path:
    path = Path(path)
    curves = {"_".join(r.summary.key): mean_curve(r.records) for r in results}
    n = max((c.size for c in curves.values()), default=0)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["episode", *curves])
        for e in range(n):
            writer.writerow([e + 1, *(_fmt(float(c[e])) if e < c.size else "" for c in curves.values())])
    return path


# -- text tables ---------------------------------------------------------------


def _cell(mean, std) -> str:
    if mean is None or (isinstance(mean, float) and math.isnan(mean)):
        return NA
    return f"{mean:.1f}/{std:.1f}"


def format_table(summaries: Sequence[MetricSummary]) -> str:
    """Grids of ``mean/std`` cells (rows: worlds, columns: models), one per start mode and algorithm."""
    by_key = {s.key: s for s in summaries}
    worlds = [w for w in VARIANTS if any(s.world == w for s in summaries)]
    models = [m for m in ARCHITECTURES if any(s.model == m for s in summaries)]
    buf = io.StringIO()
    for title, getter in (
        ("Learning time (episodes)", lambda s: _cell(s.lt_mean, s.lt_std)),
        ("Learning performance (best window mean reward)", lambda s: _cell(s.lp_mean, s.lp_std)),
    ):
        for mode in START_MODES:
            for algo in ALGORITHMS:
                if not any(s.start_mode == mode and s.algo == algo for s in summaries):
                    continue
                buf.write(f"{title}: {mode} start, {algo}\n")
                buf.write("      " + "".join(f"{m:>16}" for m in models) + "\n")
                for w in worlds:
                    cells = [
                        getter(by_key[(w, m, algo, mode)]) if (w, m, algo, mode) in by_key else "-"
                        for m in models
                    ]
                    buf.write(f"{w:<6}" + "".join(f"{c:>16}" for c in cells) + "\n")
                buf.write("\n")
    return buf.getvalue()


def check_orderings(summaries: Sequence[MetricSummary]) -> list[tuple[str, bool]]:
    """Qualitative checks: gru <= lstm <= mut1 learning time with fixed starts,
    and gru best learning performance in po/ac. NA learning time ranks last."""
    by_key = {s.key: s for s in summaries}

    def lt(s):
        return math.inf if s.lt_mean is None else s.lt_mean

    checks = []
    for algo in ALGORITHMS:
        for w in VARIANTS:
            keys = [(w, m, algo, "fixed") for m in ("gru", "lstm", "mut1")]
            if all(k in by_key for k in keys):
                g, l, m = (lt(by_key[k]) for k in keys)
                checks.append((f"learning time gru <= lstm <= mut1 ({w}, {algo}, fixed)", g <= l <= m))
        for mode in START_MODES:
            for w in ("po", "ac"):
                present = [by_key[(w, m, algo, mode)] for m in ARCHITECTURES if (w, m, algo, mode) in by_key]
                if len(present) > 1 and any(s.model == "gru" for s in present):
                    best = max(present, key=lambda s: s.lp_mean)
                    checks.append((f"gru best learning performance ({w}, {algo}, {mode})", best.model == "gru"))
    return checks


def compare_gru_lstm(summaries: Sequence[MetricSummary]) -> list[str]:
    """Welch p-values, gru vs lstm, plus the lstm/gru wall-clock ratio."""
    by_key = {s.key: s for s in summaries}
    lines = []
    for (w, m, a, mode), gru in sorted(by_key.items()):
        if m != "gru" or (w, "lstm", a, mode) not in by_key:
            continue
        lstm = by_key[(w, "lstm", a, mode)]
        parts = [f"({w}, {a}, {mode})"]
        g_lt = [t for t in gru.learning_times if t is not None]
        l_lt = [t for t in lstm.learning_times if t is not None]
        if len(g_lt) >= 2 and len(l_lt) >= 2:
            parts.append(f"lt p={welch_t_test(g_lt, l_lt):.4g}")
        if len(gru.learning_performances) >= 2 and len(lstm.learning_performances) >= 2:
            parts.append(f"lp p={welch_t_test(gru.learning_performances, lstm.learning_performances):.4g}")
        if gru.seconds_mean > 0:
            parts.append(f"time lstm/gru={lstm.seconds_mean / gru.seconds_mean:.2f}")
        lines.append(" ".join(parts))
    return lines


def format_report(summaries: Sequence[MetricSummary]) -> str:
    out = [format_table(summaries)]
    checks = check_orderings(summaries)
    if checks:
        out.append("Orderings:")
        out.extend(f"  [{'ok' if ok else 'VIOLATED'}] {name}" for name, ok in checks)
        out.append("")
    comparisons = compare_gru_lstm(summaries)
    if comparisons:
        out.append("GRU vs LSTM:")
        out.extend(f"  {line}" for line in comparisons)
        out.append("")
    return "\n".join(out)


# -- figures -------------------------------------------------------------------


def plot_curves(results, directory) -> list[Path]:
    """One SVG per (world, algo, start mode): mean episode reward per model."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "recurrent-fqi"
    directory = Path(directory)
    groups: dict[tuple[str, str, str], list] = {}
    for res in results:
        s = res.summary
        groups.setdefault((s.world, s.algo, s.start_mode), []).append(res)

    paths = []
    for (world, algo, mode), members in groups.items():
        fig, ax = plt.subplots(figsize=(6, 4))
        for res in members:
            curve = mean_curve(res.records)
            ax.plot(np.arange(1, curve.size + 1), curve, lw=0.8, label=f"{res.summary.model} ({res.summary.runs} runs)")
        ax.set_xlabel("episode")
        ax.set_ylabel("mean episode reward")
        ax.set_title(f"{world}, {algo}, {mode} start")
        ax.legend(loc="lower right", fontsize="small")
        fig.tight_layout()
        path = directory / f"curves_{world}_{algo}_{mode}.svg"
        # fixed hash salt and no date keep the SVG byte-reproducible
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        paths.append(path)
    return paths


def emit_results(results, fmt: str, out_dir) -> list[Path]:
    """Write results in ``fmt``; the delimited files are always written too."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    summaries = [r.summary for r in results]
    paths = [write_summary_csv(summaries, out_dir / "summary.csv"), write_runs_csv(results, out_dir / "runs.csv")]
    if fmt == "table":
        path = out_dir / "table.txt"
        path.write_text(format_report(summaries))
        paths.append(path)
    elif fmt == "svg":
        paths.append(write_curves_csv(results, out_dir / "curves.csv"))
        paths.extend(plot_curves(results, out_dir))
    return paths
