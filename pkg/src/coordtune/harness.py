"""Campaign execution and on-disk artifacts.

Layout of a campaign directory::

    <output_dir>/manifest.json
    <output_dir>/table7.md, table7.csv          (when marginal and alternating both ran)
    <output_dir>/<system>/<method>/report.jsonl  (trial log, no timings)
    <output_dir>/<system>/<method>/summary.md, summary.csv, best.json, timings.csv
    <output_dir>/<system>/<method>/traces/       (per-trial loss CSVs, if enabled)

Every file except ``timings.csv`` and the manifest's ``created`` field is a pure
function of the resolved configuration; the manifest records a SHA-256 per file so
that a rerun can be checked byte for byte.
"""

from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
import platform
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import scipy
from scipy import stats

from . import __version__
from .channel import (
    AwgnParams,
    ChannelModel,
    FiberParams,
    FsoParams,
    channel_to_json,
    fiber_noise_variance,
    gg_cdf,
    gg_moment,
    gg_pdf,
    gg_sample,
    scintillation_index,
)
from .config import CampaignConfig
from .grid import render_value
from .objective import DetectorObjective
from .report import render_table7, summary_csv, summary_markdown
from .seeds import derive_seed
from .tuner import ALTERNATING, MARGINAL, BudgetExceeded, TuneReport, run_method

MANIFEST_SCHEMA = "coordtune.manifest/1"
HASHED_FILES = ("report.jsonl", "summary.md", "summary.csv", "best.json")


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _dump_json(doc: Any) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _ranked_markdown(report: TuneReport, system: str, top: int = 10) -> str:
    ranked = sorted(report.trials, key=lambda t: t.score)[:top]
    lines = [f"# {system} / {report.method}\n", "| Rank | Point | SER |", "|---|---|---|"]
    for i, t in enumerate(ranked, 1):
        lines.append(f"| {i} | `{t.key}` | {t.score:.4f} |")
    lines.append(f"\nRequests: {report.total_requests}, distinct evaluations: {report.distinct_evaluations}\n")
    return "\n".join(lines)


def _trial_csv(report: TuneReport, system: str) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["system", "method", "step", "axis", "value", "score"])
    for t in report.trials:
        value = render_value(t.point[t.axis_swept]) if t.axis_swept else t.key
        w.writerow([system, report.method, t.step_index, t.axis_swept or "", value, repr(t.score)])
    return buf.getvalue()


def best_document(report: TuneReport, system: str) -> dict:
    return {
        "system": system,
        "method": report.method,
        "key": report.best_point.key,
        "point": report.best_point.to_json(),
        "score": report.best_score,
        "steps": report.steps,
        "converged_at_step": report.converged_at_step,
        "total_requests": report.total_requests,
        "distinct_evaluations": report.distinct_evaluations,
    }


def write_run(run_dir: Path, report: TuneReport, system: str) -> None:
    """All per-run files; the single writer for ``run_dir``."""
    run_dir.mkdir(parents=True, exist_ok=True)
    report.to_jsonl(run_dir / "report.jsonl", timing=False)
    if report.method in (MARGINAL, ALTERNATING):
        _write_text(run_dir / "summary.md", summary_markdown(report, system))
        _write_text(run_dir / "summary.csv", summary_csv(report, system))
    else:
        _write_text(run_dir / "summary.md", _ranked_markdown(report, system))
        _write_text(run_dir / "summary.csv", _trial_csv(report, system))
    _write_text(run_dir / "best.json", _dump_json(best_document(report, system)))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "axis", "key", "cached", "wall_time"])
    for t in report.trials:
        w.writerow([t.step_index, t.axis_swept or "", t.key, int(t.cached), f"{t.wall_time:.6f}"])
    _write_text(run_dir / "timings.csv", buf.getvalue())


@dataclass
class CampaignResult:
    reports: list[tuple[str, TuneReport]]
    manifest: dict
    output_dir: Path


def run_campaign(cfg: CampaignConfig, log=print) -> CampaignResult:
    """Run every (system, method) pair in declaration order and write the artifacts.

    Raises ``BudgetExceeded`` before any trial runs if a joint search is over the cap.
    """
    out = Path(cfg.output_dir)
    if "joint" in cfg.methods and cfg.grid.size > cfg.search.joint_cap:
        raise BudgetExceeded(cfg.grid.size, cfg.search.joint_cap)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    files: dict[str, str] = {}
    for name, system in cfg.systems.items():
        for method in cfg.methods:
            run_dir = out / name / method
            traces = run_dir / "traces" if cfg.save_traces else None
            objective = DetectorObjective(system, traces)
            log(f"[{name}/{method}] running")
            report = run_method(method, cfg.grid, cfg.init, objective, cfg.search, cfg.random_trials)
            write_run(run_dir, report, name)
            for fname in HASHED_FILES:
                files[f"{name}/{method}/{fname}"] = sha256_file(run_dir / fname)
            log(
                f"[{name}/{method}] best {report.best_point.key} SER {report.best_score:.4f} "
                f"({report.total_requests} requests, {report.distinct_evaluations} distinct)"
            )
            reports.append((name, report))

    sweeps = [(n, r) for n, r in reports if r.method in (MARGINAL, ALTERNATING)]
    if {r.method for _, r in sweeps} == {MARGINAL, ALTERNATING}:
        md, table_csv = render_table7(sweeps)
        _write_text(out / "table7.md", md)
        _write_text(out / "table7.csv", table_csv)
        files["table7.md"] = sha256_file(out / "table7.md")
        files["table7.csv"] = sha256_file(out / "table7.csv")

    manifest = build_manifest(cfg, files)
    _write_text(out / "manifest.json", _dump_json(manifest))
    return CampaignResult(reports, manifest, out)


def build_manifest(cfg: CampaignConfig, files: dict[str, str]) -> dict:
    return {
        "schema": MANIFEST_SCHEMA,
        "config": cfg.to_dict(include_output=False),
        "config_hash": cfg.config_hash(),
        "seeds": {
            "base_seed": cfg.search.base_seed,
            "n_replicates": cfg.search.n_replicates,
        },
        "software": {
            "coordtune": __version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "scipy": scipy.__version__,
        },
        "outputs": dict(sorted(files.items())),
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),  # not hashed
    }


def load_manifest(path: str | Path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema") != MANIFEST_SCHEMA:
        raise ValueError(f"{path}: not a {MANIFEST_SCHEMA} manifest")
    return doc


def compare_outputs(expected: dict, actual: dict) -> list[str]:
    """Names of hashed outputs that differ or are missing."""
    names = sorted(set(expected) | set(actual))
    return [n for n in names if expected.get(n) != actual.get(n)]


def find_sweep_reports(run_root: str | Path) -> list[tuple[str, TuneReport]]:
    """Marginal and alternating reports under a campaign directory.

    Systems follow the manifest order when one exists, otherwise name order.
    """
    root = Path(run_root)
    order: list[str] = []
    manifest = root / "manifest.json"
    if manifest.exists():
        order = [s["name"] for s in load_manifest(manifest)["config"]["systems"]]
    found = sorted(p for p in root.glob("*/*/report.jsonl") if p.parent.name in (MARGINAL, ALTERNATING))
    systems = list(dict.fromkeys(order + [p.parent.parent.name for p in found]))
    found.sort(key=lambda p: systems.index(p.parent.parent.name))
    return [(p.parent.parent.name, TuneReport.from_jsonl(p)) for p in found]


# --------------------------------------------------------------------------- channel statistics


def _histogram_csv(samples: np.ndarray, bins: int, reference) -> str:
    density, edges = np.histogram(samples, bins=bins, density=True)
    centers = 0.5 * (edges[:-1] + edges[1:])
    ref = reference(centers)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["bin_left", "bin_right", "density", "reference_pdf"])
    for lo, hi, d, r in zip(edges[:-1], edges[1:], density, ref):
        w.writerow([repr(float(lo)), repr(float(hi)), repr(float(d)), repr(float(r))])
    return buf.getvalue()


def channel_stats(model: ChannelModel, n: int, seed: int = 0, out_dir: str | Path | None = None, bins: int = 100) -> dict:
    """Sampler diagnostics for one channel.

    FSO: intensity moments, scintillation index and the KS distance to the
    Gamma-Gamma CDF. Fiber/AWGN: requested versus empirical noise variance.
    """
    if n < 1000:
        raise ValueError(f"n must be >= 1000, got {n}")
    rng = np.random.default_rng(derive_seed(seed, "channel-stats", model.kind))
    result: dict[str, Any] = {"channel": channel_to_json(model), "n": n, "seed": seed}
    moment_rows = []
    if isinstance(model, FsoParams):
        a, b = model.alpha, model.beta
        x = gg_sample(rng, a, b, n)
        mean = float(x.mean())
        si = float(x.var() / mean**2)
        ks = stats.kstest(x, lambda v: gg_cdf(v, a, b))
        result.update(
            mean=mean,
            scintillation_index=si,
            scintillation_index_analytic=scintillation_index(a, b),
            ks_statistic=float(ks.statistic),
            ks_pvalue=float(ks.pvalue),
        )
        for k in range(1, 5):
            moment_rows.append((k, float(np.mean(x**k)), gg_moment(k, a, b)))
        hist = _histogram_csv(x, bins, lambda c: gg_pdf(c, a, b))
    else:
        if isinstance(model, FiberParams):
            noise = fiber_noise_variance(model)
            requested = noise.normalized
            result.update(
                sigma2_ase=noise.ase,
                sigma2_nlin=noise.nlin,
                sigma2_total=noise.total,
                snr_db=noise.snr_db,
            )
        else:
            assert isinstance(model, AwgnParams)
            requested = model.noise_variance
        y = model.apply(np.zeros(n, dtype=complex), rng)
        empirical = float(np.mean(np.abs(y) ** 2))
        result.update(
            requested_variance=requested,
            empirical_variance=empirical,
            relative_error=(empirical - requested) / requested if requested > 0 else float(empirical),
        )
        sd = np.sqrt(requested / 2) if requested > 0 else 1.0
        re = y.real
        for k in range(1, 5):
            analytic = 0.0 if k % 2 else sd**k * (1.0 if k == 2 else 3.0)
            moment_rows.append((k, float(np.mean(re**k)), analytic))
        hist = _histogram_csv(re, bins, lambda c: stats.norm.pdf(c, scale=sd))
    result["moments"] = [{"k": k, "empirical": e, "analytic": t} for k, e, t in moment_rows]

    if out_dir is not None:
        out = Path(out_dir)
        _write_text(out / "histogram.csv", hist)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "empirical", "analytic"])
        for k, e, t in moment_rows:
            w.writerow([k, repr(e), repr(t)])
        _write_text(out / "moments.csv", buf.getvalue())
        _write_text(out / "stats.json", _dump_json(result))
    return result
