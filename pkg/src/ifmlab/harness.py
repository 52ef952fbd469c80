"""Config-driven experiment runs with deterministic CSV and manifest output.

A config is a JSON object::

    {"scenario": "kwiat-sweep", "t_values": [10, 100], "model": "default",
     "output": {"csv": "sweep.csv", "manifest": "sweep.json"}}

Input paths are resolved against the config file's directory. Output paths
are resolved against ``$IFMLAB_OUTPUT_DIR`` when it is set, otherwise
against the config file's directory. Every sweep point produces rows with a
``status`` column; numerical verification failures become failed rows.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .discrimination import discriminate, distortion_audit, prepare_round
from .errors import CapExceededError, VerificationError
from .formats import load_family, load_model, load_schedule, program_to_json, write_json
from .ifm import (
    FULL_DIM_CAP,
    InteractionModel,
    audit_chain,
    build_kwiat_schedule,
    full_layout,
    run_effective,
    run_full,
)
from .optimize import optimize_schedule
from .qpe import qpe_distribution

OUTPUT_DIR_ENV = "IFMLAB_OUTPUT_DIR"

SCENARIOS = ("kwiat-sweep", "audit", "optimize", "reduce", "discriminate", "qpe-demo")

COLUMNS = {
    "kwiat-sweep": ["T", "eps_achieved", "D_lower", "D_exact", "floor", "slack_final_chain", "status"],
    "audit": ["t", "norm_sq", "D_lower", "D_exact", "discriminability", "direct_sum_residual",
              "phi2_slack", "block_bound_slack", "step_slack", "observed_constant", "recursion_slack",
              "dist_slack", "cross_sim_residual", "final_chain_slack", "floor", "status"],
    "optimize": ["T", "eps_target", "seed", "eps_achieved", "D_lower", "kwiat_D_lower", "floor",
                 "evaluations", "angles", "status"],
    "reduce": ["seed", "step", "theta", "partner", "calls_per_use", "theta_star", "N", "selected", "status"],
    "discriminate": ["seed", "delta", "theta_hidden", "theta_hat", "rounds", "calls", "max_distortion",
                     "accepted_round_errors", "status"],
    "qpe-demo": ["phase", "ancillas", "outcome", "estimate", "probability", "status"],
}

REQUIRED = {
    "kwiat-sweep": ("t_values",),
    "audit": ("schedule",),
    "optimize": ("t_values", "eps_values", "seeds"),
    "reduce": ("family", "seeds"),
    "discriminate": ("family", "hidden", "delta_values", "seeds"),
    "qpe-demo": ("phases", "ancillas"),
}

KNOWN_KEYS = {"scenario", "model", "family", "schedule", "t_values", "delta_values", "eps_values", "seeds",
              "hidden", "runs", "full_max_t", "phases", "ancillas", "output", "tolerances", "jobs",
              "audit_mid_block"}
OUTPUT_KEYS = {"csv", "manifest", "program"}
TOLERANCE_KEYS = {"audit"}


class ConfigError(ValueError):
    """Invalid experiment config; carries line-precise diagnostics."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(str(d) for d in self.diagnostics))


@dataclass(frozen=True)
class Diagnostic:
    path: str
    line: int
    message: str

    def __str__(self):
        return f"{self.path}:{self.line}: {self.message}"


@dataclass
class ExperimentConfig:
    scenario: str
    model: object = "default"
    family: str | None = None
    schedule: str | None = None
    t_values: list = field(default_factory=list)
    delta_values: list = field(default_factory=list)
    eps_values: list = field(default_factory=list)
    seeds: list = field(default_factory=list)
    hidden: str | None = None
    runs: int = 1
    full_max_t: int = 6
    phases: list = field(default_factory=list)
    ancillas: int = 3
    output: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    jobs: int = 1
    audit_mid_block: bool = False
    base_dir: Path = field(default_factory=Path.cwd)

    def to_json(self) -> dict:
        """Canonical content used for hashing; excludes the base directory."""
        out = {k: getattr(self, k) for k in sorted(KNOWN_KEYS)}
        out["output"] = dict(sorted(self.output.items()))
        return out

    def sha256(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()

    def resolve_input(self, name) -> Path:
        path = Path(name)
        return path if path.is_absolute() else self.base_dir / path

    def resolve_output(self, name) -> Path:
        path = Path(name)
        if path.is_absolute():
            return path
        root = os.environ.get(OUTPUT_DIR_ENV)
        return (Path(root) if root else self.base_dir) / path


# ----------------------------------------------------------------- validation

def _line_of(text: str, key: str) -> int:
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else 1


def _is_int(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool)


def _is_num(x) -> bool:
    return (isinstance(x, (int, float)) and not isinstance(x, bool)) and np.isfinite(x)


def _check_list(data, key, pred, what, report):
    value = data[key]
    if not isinstance(value, list) or not value:
        report(key, f"'{key}' must be a non-empty list")
        return
    for i, x in enumerate(value):
        if not pred(x):
            report(key, f"'{key}'[{i}] = {x!r} is not {what}")


def _diagnose(data, text: str, source: str, base_dir: Path) -> list[Diagnostic]:
    out: list[Diagnostic] = []

    def report(key, message):
        out.append(Diagnostic(source, _line_of(text, key) if key else 1, message))

    if not isinstance(data, dict):
        report(None, "config must be a JSON object")
        return out
    for key in data:
        if key not in KNOWN_KEYS:
            report(key, f"unknown key '{key}'")
    scenario = data.get("scenario")
    if scenario is None:
        report(None, "missing required key 'scenario'")
        return out
    if scenario not in SCENARIOS:
        report("scenario", f"scenario {scenario!r} is not one of {', '.join(SCENARIOS)}")
        return out
    for key in REQUIRED[scenario]:
        if key not in data:
            report("scenario", f"scenario '{scenario}' requires key '{key}'")

    checks = {
        "t_values": (lambda x: _is_int(x) and x >= 1, "a positive integer"),
        "eps_values": (lambda x: _is_num(x) and 0 < x < 1, "a number in (0, 1)"),
        "delta_values": (lambda x: _is_num(x) and 0 < x < 1, "a number in (0, 1)"),
        "seeds": (lambda x: _is_int(x) and x >= 0, "a non-negative integer"),
        "phases": (lambda x: _is_num(x) and 0 <= x < 1, "a number in [0, 1)"),
    }
    for key, (pred, what) in checks.items():
        if key in data:
            _check_list(data, key, pred, what, report)
    for key, lo in (("runs", 1), ("full_max_t", 0), ("ancillas", 1), ("jobs", 1)):
        if key in data and not (_is_int(data[key]) and data[key] >= lo):
            report(key, f"'{key}' must be an integer >= {lo}")
    if "ancillas" in data and _is_int(data["ancillas"]) and data["ancillas"] > 16:
        report("ancillas", "'ancillas' above 16 is not supported")
    if "audit_mid_block" in data and not isinstance(data["audit_mid_block"], bool):
        report("audit_mid_block", "'audit_mid_block' must be true or false")
    if "hidden" in data and not isinstance(data["hidden"], (str, int)):
        report("hidden", "'hidden' must be a label")

    for key, allowed in (("output", OUTPUT_KEYS), ("tolerances", TOLERANCE_KEYS)):
        if key not in data:
            continue
        sub = data[key]
        if not isinstance(sub, dict):
            report(key, f"'{key}' must be an object")
            continue
        for k, v in sub.items():
            if k not in allowed:
                report(k, f"unknown {key} key '{k}'")
            elif key == "output" and not isinstance(v, str):
                report(k, f"output '{k}' must be a path string")
            elif key == "tolerances" and not (_is_num(v) and v > 0):
                report(k, f"tolerance '{k}' must be a positive number")

    def resolve(name):
        p = Path(name)
        return p if p.is_absolute() else base_dir / p

    model = data.get("model", "default")
    if model != "default":
        if not isinstance(model, str):
            report("model", "'model' must be \"default\" or a path")
        else:
            try:
                load_model(resolve(model))
            except OSError as exc:
                report("model", f"cannot read model file {exc.filename or data['model']}: {exc.strerror or exc}")
            except (ValueError, KeyError, TypeError) as exc:
                report("model", f"invalid model file: {exc}")
    if "schedule" in data:
        try:
            load_schedule(resolve(data["schedule"]))
        except OSError as exc:
            report("schedule", f"cannot read schedule file {exc.filename or data['schedule']}: {exc.strerror or exc}")
        except (ValueError, KeyError, TypeError) as exc:
            report("schedule", f"invalid schedule file: {exc}")
    if "family" in data:
        try:
            fam = load_family(resolve(data["family"]))
        except OSError as exc:
            report("family", f"cannot read family file {exc.filename or data['family']}: {exc.strerror or exc}")
        except (ValueError, KeyError, TypeError) as exc:
            report("family", f"invalid family file: {exc}")
        else:
            if fam.k < 2 and scenario == "discriminate":
                report("family", "family needs at least two members")
            try:
                fam.require_distinct()
            except ValueError as exc:
                report("family", str(exc))
            if "hidden" in data and str(data["hidden"]) not in fam.labels:
                report("hidden", f"hidden label {data['hidden']!r} is not in the family {list(fam.labels)}")
    return out


def validate_config(path) -> list[Diagnostic]:
    """Diagnostics for a config file; an empty list means it is valid. Never raises."""
    source = str(path)
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        return [Diagnostic(source, 0, f"cannot read config: {exc.strerror or exc}")]
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        return [Diagnostic(source, exc.lineno, f"invalid JSON: {exc.msg} (column {exc.colno})")]
    try:
        return _diagnose(data, text, source, Path(path).resolve().parent)
    except Exception as exc:  # noqa: BLE001 - validation must report, not crash
        return [Diagnostic(source, 1, f"unexpected validation failure: {exc!r}")]


def config_from_dict(data: dict, base_dir: Path | None = None) -> ExperimentConfig:
    base = Path.cwd() if base_dir is None else Path(base_dir)
    diags = _diagnose(data, json.dumps(data, indent=1), "<config>", base)
    if diags:
        raise ConfigError(diags)
    kwargs = {k: v for k, v in data.items() if k in KNOWN_KEYS}
    return ExperimentConfig(base_dir=base, **kwargs)


def load_config(path) -> ExperimentConfig:
    diags = validate_config(path)
    if diags:
        raise ConfigError(diags)
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return ExperimentConfig(base_dir=Path(path).resolve().parent,
                            **{k: v for k, v in data.items() if k in KNOWN_KEYS})


# --------------------------------------------------------------- row producers

def _failed(exc: Exception) -> str:
    kind = "verification_failed" if isinstance(exc, VerificationError) else "error"
    return f"{kind}: {exc}"


def derive_seeds(seed: int, runs: int) -> list[int]:
    """Independent per-run seeds from one base seed."""
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(runs, dtype=np.uint32)]


def _audit_tol(cfg_tolerances: dict) -> float:
    return float(cfg_tolerances.get("audit", 1e-9))


def kwiat_row(T: int, model: InteractionModel, full_max_t: int, tol: float) -> dict:
    row = {"T": T}
    try:
        schedule = build_kwiat_schedule(T, model)
        traj = run_effective(schedule, model.a1)
        full0 = full1 = None
        if T <= full_max_t and full_layout(schedule, model).dim <= FULL_DIM_CAP:
            full0 = run_full(schedule, model, 0)
            full1 = run_full(schedule, model, 1)
        report = audit_chain(traj, model, full0=full0, full1=full1, tol=tol)
        row.update(
            eps_achieved=report.final["eps_achieved"],
            D_lower=report.final["d_lower"],
            D_exact=report.final.get("d_exact"),
            floor=report.final["floor"],
            slack_final_chain=report.final["final_chain_slack"],
            status="ok" if report.ok else "verification_failed: " + "; ".join(report.violations[:3]),
        )
    except (VerificationError, ValueError, np.linalg.LinAlgError) as exc:
        row["status"] = _failed(exc)
    return row


def audit_rows(schedule, model: InteractionModel, full_max_t: int, tol: float) -> list[dict]:
    try:
        traj = run_effective(schedule, model.a1)
        full0 = full1 = None
        if schedule.T <= full_max_t:
            try:
                full0 = run_full(schedule, model, 0)
                full1 = run_full(schedule, model, 1)
            except CapExceededError:
                full0 = full1 = None
        report = audit_chain(traj, model, full0=full0, full1=full1, tol=tol)
    except (VerificationError, ValueError, np.linalg.LinAlgError) as exc:
        return [{"t": 0, "status": _failed(exc)}]
    s = report.steps
    rows = []
    for t in range(1, schedule.T + 1):
        bad = [v for v in report.violations if v.endswith(f" at t={t}") or f" at t={t}:" in v]
        row = {
            "t": t,
            "norm_sq": s["norm_sq"][t],
            "D_lower": s["d_lower"][t],
            "D_exact": s["d_exact"][t],
            "discriminability": s["discriminability"][t],
            "direct_sum_residual": s["direct_sum_residual"][t],
            "phi2_slack": s["phi2_slack"][t],
            "block_bound_slack": s["block_bound_slack"][t],
            "step_slack": s["step_slack"][t],
            "observed_constant": s["observed_constant"][t],
            "recursion_slack": s["recursion_slack"][t],
            "dist_slack": s["dist_slack"][t],
            "cross_sim_residual": s["cross_sim_residual"][t],
            "status": "ok" if not bad else "verification_failed: " + "; ".join(bad),
        }
        rows.append(row)
    final_bad = [v for v in report.violations if " at t=" not in v]
    rows[-1]["final_chain_slack"] = report.final["final_chain_slack"]
    rows[-1]["floor"] = report.final["floor"]
    if final_bad:
        prefix = rows[-1]["status"] + "; " if rows[-1]["status"] != "ok" else "verification_failed: "
        rows[-1]["status"] = prefix + "; ".join(final_bad)
    return rows


def optimize_row(T: int, eps: float, seed: int, model: InteractionModel) -> dict:
    row = {"T": T, "eps_target": eps, "seed": seed}
    try:
        res = optimize_schedule(T, model, eps, seed)
        row.update(eps_achieved=res.eps_achieved, D_lower=res.d_lower, kwiat_D_lower=res.kwiat_d_lower,
                   floor=res.floor, evaluations=res.evaluations,
                   angles=" ".join(repr(float(a)) for a in res.angles), status="ok")
    except (VerificationError, ValueError) as exc:
        row["status"] = _failed(exc)
    return row


def reduce_rows(fam, seed: int) -> tuple[list[dict], dict | None]:
    try:
        plan = prepare_round(fam, 0.01, seed)
    except (VerificationError, ValueError, np.linalg.LinAlgError) as exc:
        return [{"seed": seed, "step": 0, "status": _failed(exc)}], None
    common = {"seed": seed, "calls_per_use": plan.program.calls_per_use, "theta_star": plan.theta_star,
              "N": plan.test.N, "selected": " ".join(str(j) for j in plan.test.selected), "status": "ok"}
    rows = [{**common, "step": i, "theta": s.theta, "partner": s.partner}
            for i, s in enumerate(plan.program.steps, start=1)]
    if not rows:
        rows = [{**common, "step": 0}]
    return rows, program_to_json(plan)


def discriminate_row(fam, hidden: str, delta: float, seed: int, audit_mid_block: bool = False) -> dict:
    row = {"seed": seed, "delta": delta, "theta_hidden": str(hidden)}
    try:
        theta_hat, tr = discriminate(fam, hidden, delta, seed, audit_mid_block)
        row.update(theta_hat=theta_hat, rounds=len(tr.rounds), calls=tr.calls,
                   max_distortion=distortion_audit(tr), accepted_round_errors=tr.accepted_round_errors,
                   status="ok")
    except (VerificationError, ValueError, np.linalg.LinAlgError) as exc:
        row["status"] = _failed(exc)
    return row


def qpe_rows(phase: float, n: int) -> list[dict]:
    u = np.array([[1.0, 0.0], [0.0, np.exp(2j * np.pi * phase)]])
    try:
        probs = qpe_distribution(u, [0.0, 1.0], n)
    except ValueError as exc:
        return [{"phase": phase, "ancillas": n, "status": _failed(exc)}]
    return [{"phase": phase, "ancillas": n, "outcome": j, "estimate": j / 2**n, "probability": float(p),
             "status": "ok"} for j, p in enumerate(probs)]


# ------------------------------------------------------------------- running

def _call(task):
    fn, args = task
    return fn(*args)


def _map(tasks, jobs: int):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_call, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    return [_call(t) for t in tasks]


@dataclass
class RunResult:
    scenario: str
    columns: list[str]
    rows: list[dict]
    program: dict | None = None
    manifest: dict | None = None

    @property
    def ok(self) -> bool:
        return all(r.get("status") == "ok" for r in self.rows)


def _listify(rows):
    return rows if isinstance(rows, list) else [rows]


def execute(cfg: ExperimentConfig) -> RunResult:
    """Run every sweep point of ``cfg`` in order; no files are written."""
    scenario = cfg.scenario
    tol = _audit_tol(cfg.tolerances)
    program = None
    if scenario == "kwiat-sweep":
        model = load_model(cfg.model, cfg.base_dir)
        tasks = [(kwiat_row, (T, model, cfg.full_max_t, tol)) for T in cfg.t_values]
    elif scenario == "audit":
        schedule, embedded = load_schedule(cfg.resolve_input(cfg.schedule))
        model = embedded if cfg.model == "default" and embedded is not None else load_model(cfg.model, cfg.base_dir)
        tasks = [(audit_rows, (schedule, model, cfg.full_max_t, tol))]
    elif scenario == "optimize":
        model = load_model(cfg.model, cfg.base_dir)
        tasks = [(optimize_row, (T, eps, seed, model))
                 for T in cfg.t_values for eps in cfg.eps_values for seed in cfg.seeds]
    elif scenario == "reduce":
        fam = load_family(cfg.resolve_input(cfg.family))
        results = [reduce_rows(fam, seed) for seed in cfg.seeds]
        rows = [r for rs, _ in results for r in rs]
        program = results[0][1]
        return RunResult(scenario, COLUMNS[scenario], rows, program)
    elif scenario == "discriminate":
        fam = load_family(cfg.resolve_input(cfg.family))
        tasks = [(discriminate_row, (fam, cfg.hidden, delta, run_seed, cfg.audit_mid_block))
                 for delta in cfg.delta_values for seed in cfg.seeds
                 for run_seed in derive_seeds(seed, cfg.runs)]
    elif scenario == "qpe-demo":
        tasks = [(qpe_rows, (phase, cfg.ancillas)) for phase in cfg.phases]
    else:  # pragma: no cover - rejected by validation
        raise ConfigError([Diagnostic("<config>", 1, f"unknown scenario {scenario!r}")])
    rows = [r for out in _map(tasks, cfg.jobs) for r in _listify(out)]
    return RunResult(scenario, COLUMNS[scenario], rows, program)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return "" if np.isnan(v) else repr(v)
    return str(value)


def rows_to_csv(columns, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def build_manifest(cfg: ExperimentConfig, result: RunResult) -> dict:
    return {
        "tool": "ifmlab",
        "version": __version__,
        "kernel_backend": kernels.backend(),
        "scenario": cfg.scenario,
        "config_sha256": cfg.sha256(),
        "config": cfg.to_json(),
        "columns": result.columns,
        "row_count": len(result.rows),
        "rows": [{"row": i, "seed": r.get("seed"), "status": r.get("status")} for i, r in enumerate(result.rows)],
        "failed_rows": sum(r.get("status") != "ok" for r in result.rows),
    }


def run_config(cfg: ExperimentConfig) -> RunResult:
    """Execute ``cfg`` and write the outputs it names."""
    result = execute(cfg)
    result.manifest = build_manifest(cfg, result)
    out = cfg.output
    if out.get("csv"):
        path = cfg.resolve_output(out["csv"])
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(rows_to_csv(result.columns, result.rows))
    if out.get("manifest"):
        path = cfg.resolve_output(out["manifest"])
        path.parent.mkdir(parents=True, exist_ok=True)
        write_json(path, result.manifest)
    if out.get("program") and result.program is not None:
        path = cfg.resolve_output(out["program"])
        path.parent.mkdir(parents=True, exist_ok=True)
        write_json(path, result.program)
    return result


__all__ = [
    "COLUMNS", "ConfigError", "Diagnostic", "ExperimentConfig", "RunResult", "SCENARIOS",
    "build_manifest", "config_from_dict", "derive_seeds", "execute", "load_config",
    "rows_to_csv", "run_config", "validate_config",
]
