"""Command line front end and the staged experiment pipeline.

    levyfront <subcommand> --config <path|benchmark> --out <dir> [--seed N] [--threads N]

Subcommands run the stages they need, in the fixed order
validate -> eigen -> steady -> evolve -> fronts -> bounds -> report.
Exit status: 0 when every gated acceptance row passes, 2 when one fails,
1 on any error.
"""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import html
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import (dichotomy, fit_front_rate, front_trace, hopf_cole_rescale, inner_ratio,
                          limit_profile, profile_deviation, window_grid)
from .bounds import (barrier_residuals, calibrate_barriers, sandwich_check, write_bounds_report)
from .discretize import LineGrid, TorusGrid, assemble_line_operator, assemble_torus_operator
from .evolve import SnapshotWriter, solve_cauchy
from .exceptions import FitQualityError, LevyFrontError, ReportError, StageError
from .model import ProblemSpec, validate_assumptions
from .spectral import principal_eigenpair
from .steady import positive_steady_state, weak_mean

log = logging.getLogger("levyfront")

STAGES = ("validate", "eigen", "steady", "evolve", "fronts", "bounds", "report")
REQUIRES = {"validate": (), "eigen": ("validate",), "steady": ("eigen",), "evolve": ("validate",),
            "fronts": ("steady", "evolve"), "bounds": ("eigen", "evolve"),
            "report": ()}
SUBCOMMANDS = {"validate": "validate", "eigen": "eigen", "steady": "steady", "evolve": "evolve",
               "front": "fronts", "bounds": "bounds", "run": None, "report": "report"}
EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


def _closure(stage):
    need = {stage}
    stack = [stage]
    while stack:
        for dep in REQUIRES[stack.pop()]:
            if dep not in need:
                need.add(dep)
                stack.append(dep)
    return [s for s in STAGES if s in need]


# ---------------------------------------------------------------------------
# configuration


def benchmark_names():
    root = resources.files("levyfront") / "benchmarks"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def _segments_to_times(segments):
    times = []
    for start, stop, step in segments:
        n = int(round((stop - start) / step))
        times.extend(np.round(start + step * np.arange(n + 1), 12).tolist())
    return sorted(set(times))


@dataclass
class ExperimentConfig:
    name: str
    problem: dict
    T: float
    torus: dict = field(default_factory=lambda: {"N": 1024})
    line: dict = field(default_factory=dict)
    tail: str = "algebraic"
    eigen_tol: float = 1e-10
    steady_tol: float = 1e-10
    dt: float | None = None
    scheme: str = "imex"
    snapshots: list = field(default_factory=list)
    levels: list = field(default_factory=lambda: [1e-2, 1e-3, 1e-4])
    front_level: float = 1e-3
    fit_window: list | None = None
    eps: list = field(default_factory=lambda: [0.5, 0.25, 0.125])
    profile_window: list = field(default_factory=lambda: [1.2, 2.0, 0.5, 1.0])
    dichotomy: dict = field(default_factory=lambda: {"shrink": 0.1})
    bounds: dict = field(default_factory=dict)
    gates: list | None = None
    source: str | None = None

    def __post_init__(self):
        for key in ("eigen_tol", "steady_tol"):
            if not getattr(self, key) > 0:
                raise ValueError(f"{key} must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.T < 0:
            raise ValueError("T must be nonnegative")
        starts = [s[0] for s in self.snapshots]
        for s in self.snapshots:
            if len(s) != 3 or not (s[0] <= s[1] and s[2] > 0):
                raise ValueError(f"snapshot segment {s} must be [start, stop, step] with step > 0")
        if starts != sorted(starts):
            raise ValueError("snapshot segments must be sorted")
        if list(self.levels) != sorted(self.levels, reverse=True) and list(self.levels) != sorted(self.levels):
            raise ValueError("levels must be sorted")
        if any(not 0 < e <= 1 for e in self.eps):
            raise ValueError("eps values must lie in (0, 1]")
        if self.scheme not in ("imex", "explicit"):
            raise ValueError("scheme must be imex or explicit")

    @classmethod
    def from_dict(cls, doc, base=None):
        doc = dict(doc)
        prob = doc.get("problem")
        if isinstance(prob, str):
            path = Path(base or ".") / prob
            if not path.exists():
                raise FileNotFoundError(f"problem file {path} does not exist")
            doc["problem"] = json.loads(path.read_text())
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, ref):
        """Load a config from a path or a shipped benchmark name."""
        path = Path(ref)
        if path.exists():
            cfg = cls.from_dict(json.loads(path.read_text()), base=path.parent)
            cfg.source = str(path)
            return cfg
        name = str(ref)[:-5] if str(ref).endswith(".json") else str(ref)
        if name in benchmark_names():
            res = resources.files("levyfront") / "benchmarks" / f"{name}.json"
            cfg = cls.from_dict(json.loads(res.read_text()))
            cfg.source = f"benchmark:{name}"
            return cfg
        raise FileNotFoundError(f"config {ref} is neither a file nor a benchmark "
                                f"({', '.join(benchmark_names())})")

    def to_dict(self):
        doc = asdict(self)
        doc.pop("source")
        return doc

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    @property
    def snapshot_times(self):
        times = _segments_to_times(self.snapshots) if self.snapshots else []
        return [t for t in times if t <= self.T + 1e-12]

    def spec(self):
        return ProblemSpec.from_dict(self.problem)


# ---------------------------------------------------------------------------
# manifest


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    config_hash: str
    config: dict
    seed: int
    version: str = __version__
    stages: list = field(default_factory=list)
    artifacts: dict = field(default_factory=dict)
    outdir: str = "."

    def stage(self, name):
        for s in self.stages:
            if s["name"] == name:
                return s
        return None

    def completed(self, name):
        s = self.stage(name)
        return s is not None and s["status"] == "completed"

    def add_artifact(self, path):
        rel = str(Path(path).relative_to(self.outdir))
        self.artifacts[rel] = _sha256(path)

    def verify(self):
        """Paths whose file is missing or whose checksum changed."""
        bad = []
        for rel, digest in sorted(self.artifacts.items()):
            p = Path(self.outdir) / rel
            if not p.exists() or _sha256(p) != digest:
                bad.append(rel)
        return bad

    def to_dict(self):
        return asdict(self)

    def write(self):
        path = Path(self.outdir) / "manifest.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        return path

    @classmethod
    def read(cls, outdir):
        path = Path(outdir) / "manifest.json"
        if not path.exists():
            raise ReportError(f"no manifest at {path}")
        doc = json.loads(path.read_text())
        doc["outdir"] = str(outdir)
        return cls(**doc)


# ---------------------------------------------------------------------------
# acceptance rows


def _row(name, value, threshold, passed, detail=""):
    return {"row": name, "value": value, "threshold": threshold, "passed": bool(passed),
            "detail": detail}


def _dump(path, doc):
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, default=_default))
    return Path(path)


def _default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(type(o))


def _csv(path, header, columns):
    np.savetxt(path, np.column_stack(columns), delimiter=",", header=header, comments="",
               fmt="%.17g")
    return Path(path)


# ---------------------------------------------------------------------------
# pipeline


class Pipeline:
    """Runs stages in order, keeping in-memory results for later stages."""

    def __init__(self, config: ExperimentConfig, outdir, seed: int = 0):
        self.config = config
        self.out = Path(outdir)
        self.seed = int(seed)
        self.results = {}
        self.ctx = {}
        self.manifest = RunManifest(config.config_hash(), config.to_dict(), self.seed,
                                    outdir=str(self.out))

    def run(self, stages=STAGES):
        self.out.mkdir(parents=True, exist_ok=True)
        for name in [s for s in STAGES if s in stages]:
            t0 = time.perf_counter()
            log.info("stage %s", name)
            try:
                paths = getattr(self, f"_stage_{name}")()
            except Exception as exc:
                self.manifest.stages.append({"name": name, "status": "failed",
                                             "wall_time": time.perf_counter() - t0,
                                             "error": f"{type(exc).__name__}: {exc}"})
                self.manifest.write()
                if name != "report":
                    try:
                        self._stage_report()
                    except Exception:  # noqa: BLE001  partial report is best effort
                        log.exception("partial report failed")
                raise StageError(name, exc) from exc
            for p in paths:
                self.manifest.add_artifact(p)
            self.manifest.stages.append({"name": name, "status": "completed",
                                         "wall_time": time.perf_counter() - t0, "error": None})
            self.manifest.write()
        return self.manifest

    # -- stages --------------------------------------------------------------

    def _stage_validate(self):
        spec = self.config.spec()
        report = validate_assumptions(spec, seed=self.seed)
        self.ctx["spec"] = spec
        path = self.out / "validation.json"
        path.write_text(report.to_json())
        if not report.all_passed:
            raise LevyFrontError(f"assumption checks failed: {report.failed()}")
        return [path]

    def _stage_eigen(self):
        spec = self.ctx["spec"]
        grid = TorusGrid(int(self.config.torus.get("N", 1024)))
        op = assemble_torus_operator(spec.kernel, grid)
        mu = spec.reaction.mu(grid.nodes)
        pair = principal_eigenpair(op, mu, tol=self.config.eigen_tol)
        self.ctx.update(torus=grid, torus_op=op, pair=pair)
        e = pair.eigenfunction
        rows = [_row("eigen_residual", pair.residual, 1e-8, pair.residual <= 1e-8),
                _row("eigen_positive", float(e.min()), 0.0, e.min() > 0)]
        doc = {**pair.to_dict(), "N": grid.N, "mu_mean": float(np.mean(mu)),
               "regime": "invasion" if pair.lambda1 < 0 else "extinction", "acceptance": rows}
        self.results["eigen"] = doc
        _, csv_path = pair.write(self.out / "eigen")
        return [csv_path, _dump(self.out / "eigen.json", doc)]

    def _stage_steady(self):
        spec, op, pair = self.ctx["spec"], self.ctx["torus_op"], self.ctx["pair"]
        tol = self.config.steady_tol
        sub = positive_steady_state(spec, op, pair, tol=tol, seed="sub")
        sup = positive_steady_state(spec, op, pair, tol=tol, seed="super")
        self.ctx["u_plus"] = sub.u_plus
        gap = float(np.max(np.abs(sub.u_plus.values - sup.u_plus.values)))
        worst = float(min(sub.monotonicity_log))
        u = sub.u_plus.values
        rows = [_row("steady_residual", sub.residual, 1e-6, sub.residual < 1e-6),
                _row("steady_monotone", worst, -1e-12, worst >= -1e-12),
                _row("steady_two_sided", gap, 1e-5, gap <= 1e-5)]
        doc = {"sub": sub.summary(), "super": sup.summary(), "two_sided_gap": gap,
               "min": float(u.min()), "max": float(u.max()), "weak_mean": weak_mean(sub.u_plus),
               "acceptance": rows}
        self.results["steady"] = doc
        csv_path, _ = sub.write(self.out / "steady")
        return [csv_path, _dump(self.out / "steady.json", doc)]

    def _stage_evolve(self):
        cfg = self.config
        spec = self.ctx["spec"]
        grid = LineGrid.build(**cfg.line)
        op = assemble_line_operator(spec.kernel, grid, cfg.tail)
        self.ctx.update(line=grid, line_op=op)
        snapdir = self.out / "snapshots"
        with SnapshotWriter(snapdir) as writer:
            traj = solve_cauchy(spec, grid, cfg.T, dt=cfg.dt, snapshot_times=cfg.snapshot_times,
                                scheme=cfg.scheme, op=op, writer=writer, tail=cfg.tail)
        self.ctx["traj"] = traj
        traj_manifest = _dump(snapdir / "manifest.json", traj.manifest())
        diag = traj.diagnostics
        doc = {"T": cfg.T, "dt": traj.dt, "scheme": traj.scheme, "n_snapshots": len(traj.snapshots),
               "n_steps": diag["n_steps"], "grid": grid.to_dict(), "N": grid.size,
               "min_value": min(diag["min_per_step"], default=float(traj.snapshots[0].values.min())),
               "max_value": max(diag["max_per_step"], default=float(traj.snapshots[0].values.max())),
               "cap": diag["cap"], "clipped": diag["clipped"]}
        self.results["evolve"] = doc
        paths = sorted(snapdir.glob("snapshot_*.csv"))
        return [*paths, traj_manifest, _dump(self.out / "evolve.json", doc)]

    def _stage_fronts(self):
        cfg = self.config
        spec, traj, pair = self.ctx["spec"], self.ctx["traj"], self.ctx["pair"]
        lam1 = pair.lambda1
        target = abs(lam1) / (spec.d + spec.alpha)
        paths, rows, fits, traces = [], [], {}, {}
        for h in cfg.levels:
            tr = front_trace(traj, h)
            traces[h] = tr
            paths.append(tr.to_csv(self.out / f"front_h{h:g}.csv"))
            try:
                fit = fit_front_rate(tr, cfg.fit_window)
                fits[h] = fit.to_dict()
            except FitQualityError as exc:
                fits[h] = dict(exc.fit.to_dict(), error=str(exc))
            except ValueError as exc:
                fits[h] = {"error": str(exc)}
        main = fits.get(cfg.front_level, {})
        slope = main.get("slope", float("nan"))
        ok = abs(slope - target) <= 0.1 * target and main.get("r2", 0.0) >= 0.99
        rows.append(_row("front_rate", slope, f"{target:.6g} +/- 10%, r2 >= 0.99", ok))
        if len(cfg.levels) >= 2:
            lo, hi = max(cfg.levels), min(cfg.levels)
            s1, s2 = fits[lo].get("slope", np.nan), fits[hi].get("slope", np.nan)
            rel = abs(s1 - s2) / abs(s2)
            rows.append(_row("level_independence", rel, 0.05, rel <= 0.05,
                             f"h={lo:g}: {s1:.6g}, h={hi:g}: {s2:.6g}"))
        # homogenization
        profiles, devs = [], []
        if cfg.eps:
            x_lo, x_hi, t_lo, t_hi = cfg.profile_window
            window = window_grid(x_lo, x_hi, t_lo, t_hi)
            for e in sorted(cfg.eps, reverse=True):
                p = hopf_cole_rescale(traj, e, window)
                dev = profile_deviation(p, lam1)
                devs.append((e, dev))
                profiles.append({"eps": e, "deviation": dev, "xs": p.xs, "ts": p.ts, "v": p.v})
                X, Tt = np.meshgrid(p.xs, p.ts)
                paths.append(_csv(self.out / f"profile_eps{e:g}.csv", "x,t,v,limit",
                                  [X.ravel(), Tt.ravel(), p.v.ravel(),
                                   limit_profile(X, Tt, lam1, p.d, p.alpha).ravel()]))
            d = [v for _, v in devs]
            mono = all(b < a for a, b in zip(d, d[1:]))
            rows.append(_row("profile_monotone", d, "strictly decreasing", mono))
        # dichotomy at the final time
        shrink = cfg.dichotomy.get("shrink", 0.1)
        u_plus = self.ctx["u_plus"]
        dic = dichotomy(traj, u_plus, traj.T, lam1, shrink)
        rows += [_row("dichotomy_outer", dic["outer_sup"], 1e-3, dic["outer_sup"] < 1e-3),
                 _row("dichotomy_inner", dic["inner_ratio"], 0.05, dic["inner_ratio"] < 0.05),
                 _row("inner_average", dic["average_gap"], 0.02, dic["average_gap"] <= 0.02)]
        r6 = inner_ratio(traj, u_plus, 0.6 * traj.T, shrink, lam1) if traj.T > 0 else np.nan
        r9 = inner_ratio(traj, u_plus, 0.9 * traj.T, shrink, lam1) if traj.T > 0 else np.nan
        doc = {"lambda1": lam1, "target_rate": target, "fits": {f"{h:g}": fits[h] for h in cfg.levels},
               "traces": {f"{h:g}": traces[h].to_dict() for h in cfg.levels},
               "profiles": profiles, "dichotomy": dic,
               "inner_ratio_0.6T": r6, "inner_ratio_0.9T": r9, "acceptance": rows}
        self.results["fronts"] = doc
        paths.append(_dump(self.out / "fronts.json", doc))
        return paths

    def _stage_bounds(self):
        cfg = self.config.bounds
        spec, grid, op, traj = self.ctx["spec"], self.ctx["line"], self.ctx["line_op"], self.ctx["traj"]
        lam1 = self.ctx["pair"].lambda1
        acc_times = cfg.get("acc_times", list(np.arange(0.0, 20.0001, 2.0)))
        res_times = cfg.get("residual_times", list(np.linspace(0.0, 10.0, 8)))
        n_x = int(cfg.get("n_x", 64))
        b, history = calibrate_barriers(spec, lam1, grid, acc_times, op)
        acc = history[0]
        slope = acc.decay_slope()
        target = -spec.alpha * abs(lam1) / (spec.d + spec.alpha)
        sw = sandwich_check(traj, b)
        res = barrier_residuals(b, spec, grid, res_times, op, n_x=n_x)
        b_a = b.with_constants(A0=0.5 * b.A0)
        b_b = b.with_constants(B0=spec.reaction.mu_plus + 0.5 * b.D)
        b_slow = b.with_constants(B0=0.5 * abs(lam1))
        res_a = barrier_residuals(b_a, spec, grid, res_times, op, n_x=n_x)
        res_b = barrier_residuals(b_b, spec, grid, res_times, op, n_x=n_x)
        controls = {
            "A0_halved": {"A0": b_a.A0, "sub_residual_violations": res_a.sub_violations,
                          "sandwich_violations": sandwich_check(traj, b_a).total},
            "B0_undersized": {"B0": b_b.B0, "super_residual_violations": res_b.super_violations,
                              "sandwich_violations": sandwich_check(traj, b_b).total},
            "B0_below_rate": {"B0": b_slow.B0, "sandwich_violations": sandwich_check(traj, b_slow).total},
        }
        rows = [_row("sandwich", sw.total, 0, sw.total == 0),
                _row("barrier_residuals", [res.super_min, res.sub_max], "super >= -1e-6, sub <= 1e-6",
                     res.ok),
                _row("acc_slope", slope, f"{target:.6g} +/- 15%",
                     abs(slope - target) <= 0.15 * abs(target)),
                _row("acc_stable", [h.D_hat for h in history], "no growth > 2x",
                     not any(h.flagged for h in history)),
                _row("control_A0", res_a.sub_violations, "> 0", res_a.sub_violations > 0),
                _row("control_B0", res_b.super_violations, "> 0", res_b.super_violations > 0)]
        json_path, wit_path = write_bounds_report(self.out, b, sw, res, acc, controls)
        acc_path = _csv(self.out / "acc.csv", "t,raw_max,scaled_max",
                        [acc.times, acc.raw_maxima, acc.scaled_maxima])
        doc = {"barriers": b.to_dict(), "acc": acc.to_dict(), "acc_slope": slope,
               "acc_target": target, "D_history": [h.D_hat for h in history],
               "sandwich_total": sw.total, "residuals": res.to_dict(), "controls": controls,
               "acceptance": rows}
        self.results["bounds"] = doc
        return [json_path, wit_path, acc_path, _dump(self.out / "bounds_summary.json", doc)]

    def _stage_report(self):
        self.manifest.write()
        paths = write_report(self.manifest)
        return paths


def run_pipeline(config: ExperimentConfig, outdir=None, seed: int = 0, stages=STAGES) -> RunManifest:
    """Run the requested stages (and only those) into ``outdir``."""
    outdir = outdir if outdir is not None else Path("runs") / config.name
    return Pipeline(config, outdir, seed).run(stages)


# ---------------------------------------------------------------------------
# report

STAGE_FILES = {"eigen": "eigen.json", "steady": "steady.json", "evolve": "evolve.json",
               "fronts": "fronts.json", "bounds": "bounds_summary.json"}


def acceptance_rows(manifest: RunManifest):
    """All acceptance rows of completed stages, marked gated or informational."""
    gates = manifest.config.get("gates")
    rows = []
    for stage, fname in STAGE_FILES.items():
        if not manifest.completed(stage):
            continue
        doc = json.loads((Path(manifest.outdir) / fname).read_text())
        for r in doc.get("acceptance", []):
            rows.append(dict(r, stage=stage, gated=gates is None or r["row"] in gates))
    return rows


def verdict(manifest: RunManifest):
    rows = acceptance_rows(manifest)
    failed_stage = any(s["status"] == "failed" for s in manifest.stages)
    ok = all(r["passed"] for r in rows if r["gated"])
    return ok and not failed_stage, rows


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, list):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return html.escape(str(v))


def write_report(manifest: RunManifest):
    """report.html: one self-contained page with tables and inline SVG."""
    from . import plotting
    from .asymptotics import FrontTrace, RateFit, RescaledProfile

    out = Path(manifest.outdir)
    missing = [rel for rel in manifest.artifacts if not (out / rel).exists()]
    if missing:
        raise ReportError("missing artifacts: " + ", ".join(sorted(missing)))
    docs = {s: json.loads((out / f).read_text()) for s, f in STAGE_FILES.items()
            if manifest.completed(s)}
    ok, rows = verdict(manifest)
    cfg = manifest.config
    parts = [f"<h1>levyfront report: {html.escape(cfg['name'])}</h1>",
             f"<p>version {manifest.version}, config hash <code>{manifest.config_hash[:16]}</code>, "
             f"seed {manifest.seed}. Verdict: <b>{'PASS' if ok else 'FAIL'}</b></p>"]
    parts.append("<h2>Stages</h2><table><tr><th>stage</th><th>status</th><th>wall time [s]</th>"
                 "<th>error</th></tr>")
    for s in manifest.stages:
        parts.append(f"<tr><td>{s['name']}</td><td>{s['status']}</td><td>{s['wall_time']:.2f}</td>"
                     f"<td>{html.escape(s['error'] or '')}</td></tr>")
    parts.append("</table>")
    ran = {s["name"] for s in manifest.stages}
    for stage in STAGE_FILES:
        if stage not in docs:
            state = "failed" if stage in ran else "not run"
            parts.append(f"<h2>{stage}</h2><p class='gap'>No results: stage {state}.</p>")
            continue
        doc = docs[stage]
        parts.append(f"<h2>{stage}</h2>")
        if stage == "eigen":
            parts.append(f"<p>lambda1 = {doc['lambda1']:.12g} ({doc['regime']}), residual "
                         f"{doc['residual']:.3g}, N = {doc['N']}</p>")
        elif stage == "steady":
            parts.append(f"<p>u+ in [{doc['min']:.8g}, {doc['max']:.8g}], weak mean "
                         f"{doc['weak_mean']:.10g}, sub/super gap {doc['two_sided_gap']:.3g}</p>")
        elif stage == "evolve":
            parts.append(f"<p>T = {doc['T']}, dt = {doc['dt']}, {doc['n_steps']} steps on "
                         f"{doc['N']} nodes; range [{doc['min_value']:.3g}, {doc['max_value']:.6g}] "
                         f"(cap {doc['cap']:.6g}), clipped {doc['clipped']}</p>")
        elif stage == "fronts":
            parts.append("<table><tr><th>level h</th><th>slope</th><th>target</th><th>r2</th></tr>")
            for h, fit in doc["fits"].items():
                parts.append(f"<tr><td>{h}</td><td>{_fmt(fit.get('slope', 'n/a'))}</td>"
                             f"<td>{doc['target_rate']:.6g}</td><td>{_fmt(fit.get('r2', 'n/a'))}</td></tr>")
            parts.append("</table>")
            traces = [FrontTrace(**tr) for tr in doc["traces"].values() if tr["times"]]
            fits = [RateFit(**{k: fit[k] for k in RateFit.__dataclass_fields__})
                    for fit in doc["fits"].values() if "slope" in fit]
            parts.append(plotting.front_svg(traces, doc["target_rate"], fits))
            if doc["profiles"]:
                parts.append("<h3>Homogenized profile</h3><table><tr><th>eps</th><th>sup deviation</th></tr>")
                for p in doc["profiles"]:
                    parts.append(f"<tr><td>{p['eps']:g}</td><td>{p['deviation']:.6g}</td></tr>")
                parts.append("</table>")
                profs = [RescaledProfile(p["eps"], np.asarray(p["xs"]), np.asarray(p["ts"]),
                                         np.asarray(p["v"]), cfg["problem"].get("d", 1),
                                         cfg["problem"]["alpha"]) for p in doc["profiles"]]
                parts.append(plotting.profile_svg(profs, doc["lambda1"]))
            else:
                parts.append("<p>Homogenization section omitted: empty eps list.</p>")
            dic = doc["dichotomy"]
            parts.append(f"<p>At t = {dic['t']:g}: outer sup {dic['outer_sup']:.3g}, inner ratio "
                         f"{dic['inner_ratio']:.3g}, inner average {dic['inner_average']:.8g} vs weak "
                         f"mean {dic['weak_mean']:.8g}</p>")
        elif stage == "bounds":
            b = doc["barriers"]
            parts.append(f"<p>D-hat = {b['D_hat']:.8g}, A0 = {b['A0']:.6g}, B0 = {b['B0']:.6g}, "
                         f"c0 = {b['c0']:.6g}, C0 = {b['C0']:.6g}; sandwich violations "
                         f"{doc['sandwich_total']}; ACC decay slope {doc['acc_slope']:.6g} "
                         f"(target {doc['acc_target']:.6g})</p>")
            parts.append("<table><tr><th>control</th><th>result</th></tr>")
            for k, v in doc["controls"].items():
                parts.append(f"<tr><td>{k}</td><td>{html.escape(json.dumps(v))}</td></tr>")
            parts.append("</table>")
            parts.append(plotting.series_svg(doc["acc"]["times"], doc["acc"]["raw_maxima"],
                                             ylabel="max |L h| (1 + e^{-lt}|x|^p)", logy=True))
    parts.append("<h2>Acceptance</h2><table><tr><th>stage</th><th>row</th><th>value</th>"
                 "<th>threshold</th><th>result</th></tr>")
    for r in rows:
        res = ("PASS" if r["passed"] else "FAIL") + ("" if r["gated"] else " (info)")
        parts.append(f"<tr><td>{r['stage']}</td><td>{r['row']}</td><td>{_fmt(r['value'])}</td>"
                     f"<td>{_fmt(r['threshold'])}</td><td>{res}</td></tr>")
    parts.append("</table>")
    style = ("body{font-family:sans-serif;max-width:60em;margin:auto}table{border-collapse:collapse}"
             "td,th{border:1px solid #999;padding:2px 6px}.gap{color:#a00}")
    page = (f"<!DOCTYPE html><html><head><meta charset='utf-8'><title>{html.escape(cfg['name'])}"
            f"</title><style>{style}</style></head><body>{''.join(parts)}</body></html>")
    path = out / "report.html"
    path.write_text(page)
    _dump(out / "acceptance.json", {"pass": ok, "rows": rows})
    return [path, out / "acceptance.json"]


def report(manifest: RunManifest):
    """Write the report for an existing run directory; returns its path."""
    return write_report(manifest)[0]


# ---------------------------------------------------------------------------
# entry point


def _setup_logging():
    level = os.environ.get("LEVYFRONT_LOG", "error").lower()
    if level not in ("error", "info", "debug"):
        level = "error"
    logging.basicConfig(level=getattr(logging, level.upper()),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def build_parser():
    parser = argparse.ArgumentParser(prog="levyfront", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "report",
                       help="config file or benchmark name (" + ", ".join(benchmark_names()) + ")")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=None)
    return parser


def _print_rows(rows):
    for r in rows:
        tag = "PASS" if r["passed"] else "FAIL"
        gate = "" if r["gated"] else " (info)"
        print(f"{tag}{gate} {r['stage']}.{r['row']}: {_fmt(r['value'])}")


def main(argv=None):
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.seed < 0 or args.seed >= 2 ** 64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        with contextlib.ExitStack() as stack:
            if args.threads is not None:
                from threadpoolctl import threadpool_limits
                stack.enter_context(threadpool_limits(limits=args.threads))
            if args.command == "report":
                manifest = RunManifest.read(args.out)
                path = report(manifest)
                ok, rows = verdict(manifest)
                print(path)
            else:
                config = ExperimentConfig.load(args.config)
                stage = SUBCOMMANDS[args.command]
                stages = STAGES if stage is None else _closure(stage)
                manifest = run_pipeline(config, args.out, args.seed, stages)
                ok, rows = verdict(manifest)
    except StageError as exc:
        print(f"error in stage {exc.stage}: {exc.cause}", file=sys.stderr)
        return EXIT_ERROR
    except (LevyFrontError, ValueError, FileNotFoundError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    _print_rows(rows)
    return EXIT_PASS if ok else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
