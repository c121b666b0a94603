"""Command-line front end: run scenarios, write trajectories, compare runs.

    patchsim simulate <scenario> --out <dir> [--seed N] [--mode M] [--runs K] [--tol X]
    patchsim compare <trajectory.csv> <trajectory.csv> ...
    patchsim validate <scenario>

Exit status: 0 success, 1 solver failure, 2 bad input, 3 certificate
failure, 4 a comparison exceeded its tolerance.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analytic
from .scenario import Scenario, ScenarioError, load_scenario, scenario_from_tree, scenario_to_tree
from .stepper import SolverFailed, simulate
from .verify import CertificateTolerances, certify_step

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_SOLVER = 1
EXIT_INPUT = 2
EXIT_CERTIFICATE = 3
EXIT_TOLERANCE = 4

DEFAULT_TOL = 1e-6

STATE_COLUMNS = ["x", "y", "z", "qw", "qx", "qy", "qz", "vx", "vy", "vz", "wx", "wy", "wz"]
PATCH_FIELDS = ["a1_x", "a1_y", "a1_z", "a2_x", "a2_y", "a2_z",
                "p_n", "p_t", "p_o", "p_r", "sigma", "mode"]
TAIL_COLUMNS = ["certificate", "iterations"]


class GridMismatch(ValueError):
    pass


def patch_labels(scenario: Scenario):
    names = [p.name for p in scenario.parts]
    if all(names) and len(set(names)) == len(names):
        return names
    return [f"patch{i}" for i in range(len(names))]


def trajectory_header(scenario: Scenario):
    cols = ["step", "time"] + STATE_COLUMNS
    for label in patch_labels(scenario):
        cols += [f"{label}_{f}" for f in PATCH_FIELDS]
    return cols + TAIL_COLUMNS


def _num(x):
    # repr round-trips a double exactly
    return repr(float(x))


def trajectory_row(k, h, result, cert_passed):
    s = result.state
    row = [str(k), _num((k + 1) * h)]
    row += [_num(c) for c in np.concatenate([s.position, s.orientation, s.velocity,
                                             s.angular_velocity])]
    for pv, mode in zip(result.patches, result.modes):
        row += [_num(c) for c in np.concatenate([pv.a1, pv.a2])]
        row += [_num(pv.p_n), _num(pv.p_t), _num(pv.p_o), _num(pv.p_r), _num(pv.sigma), mode]
    row += ["pass" if cert_passed else "fail", str(result.solution.iterations)]
    return row


CERT_HEADER = ["step", "patch", "touching", "boundary_a1", "boundary_a2", "normal_x", "normal_y",
               "normal_z", "penetration", "complementarity", "dissipative", "passed", "detail"]


def certificate_rows(k, labels, cert):
    rows = []
    for label, pc in zip(labels, cert.patches):
        normal = pc.normal if pc.normal is not None else [float("nan")] * 3
        rows.append([str(k), label, str(pc.touching).lower(), _num(pc.boundary_a1),
                     _num(pc.boundary_a2)] + [_num(c) for c in normal]
                    + [_num(pc.penetration), _num(max(pc.complementarity.values())),
                       str(pc.dissipative).lower(), "pass" if pc.passed else "fail",
                       pc.hyperplane_error])
    return rows


# ---------------------------------------------------------------------------
# plot data

def _plot_series(scenario: Scenario, results):
    """name -> (column label, values); times are the end-of-step times."""
    series = {}
    if not results:
        pos = vel = np.zeros((0, 3))
        omg = vel
    else:
        pos = np.array([r.state.position for r in results])
        vel = np.array([r.state.velocity for r in results])
        omg = np.array([r.state.angular_velocity for r in results])
    for i, axis in enumerate("xyz"):
        series[f"com_{axis}"] = pos[:, i]
        series[f"v_{axis}"] = vel[:, i]
        series[f"w_{axis}"] = omg[:, i]
    for j, label in enumerate(patch_labels(scenario)):
        for which in ("a1", "a2"):
            pts = np.array([getattr(r.patches[j], which) for r in results]).reshape(-1, 3)
            for i, axis in enumerate("xyz"):
                series[f"{label}_{which}_{axis}"] = pts[:, i]
    for name in ("p_n", "p_t", "p_o", "p_r"):
        series[f"sum_{name}"] = np.array([sum(getattr(pv, name) for pv in r.patches)
                                          for r in results])
    return series


def write_plotdata(out: Path, scenario: Scenario, results):
    pdir = out / "plotdata"
    pdir.mkdir(parents=True, exist_ok=True)
    times = [(k + 1) * scenario.h for k in range(len(results))]
    for name, values in _plot_series(scenario, results).items():
        with open(pdir / f"{name}.dat", "w") as fh:
            fh.write(f"# time {name}\n")
            for t, v in zip(times, values):
                fh.write(f"{_num(t)} {_num(v)}\n")


# ---------------------------------------------------------------------------
# single run

@dataclass
class RunOutcome:
    out_dir: str
    exit_code: int
    steps_completed: int
    certificate_failures: int = 0
    max_penetration: float = 0.0
    failure: dict | None = None
    lines: list = field(default_factory=list)


def _write_failure(out: Path, record):
    with open(out / "failure.json", "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_single(scenario: Scenario, out_dir, seed=None, tolerances=None) -> tuple[RunOutcome, list]:
    """Simulate, certify every step and write all run files into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tolerances = tolerances or CertificateTolerances()
    rng = np.random.default_rng(seed) if seed is not None else None
    patches = scenario.patches()
    labels = patch_labels(scenario)
    stale = out / "failure.json"
    if stale.exists():
        stale.unlink()

    failure = None
    try:
        results = simulate(scenario, rng=rng)
    except SolverFailed as exc:
        results = list(exc.trajectory or [])
        sol = exc.result.solution if exc.result is not None else None
        failure = {"kind": "solver-failed", "step": exc.step_index, "message": str(exc),
                   "status": sol.status if sol else None,
                   "residual": sol.residual_norm if sol else None}

    cert_fail, max_pen, first_bad = 0, 0.0, None
    with open(out / "trajectory.csv", "w", newline="") as tf, \
            open(out / "certificates.csv", "w", newline="") as cf:
        tw, cw = csv.writer(tf, lineterminator="\n"), csv.writer(cf, lineterminator="\n")
        tw.writerow(trajectory_header(scenario))
        cw.writerow(CERT_HEADER)
        for k, res in enumerate(results):
            cert = certify_step(res, patches, tolerances)
            max_pen = max([max_pen] + [p.penetration for p in cert.patches])
            if not cert.passed:
                cert_fail += 1
                if first_bad is None:
                    first_bad = (k, cert.failures())
            tw.writerow(trajectory_row(k, scenario.h, res, cert.passed))
            cw.writerows(certificate_rows(k, labels, cert))
    write_plotdata(out, scenario, results)

    code = EXIT_OK
    if failure is not None:
        code = EXIT_SOLVER
    elif cert_fail:
        code = EXIT_CERTIFICATE
        failure = {"kind": "certificate-failed", "step": first_bad[0],
                   "failed_steps": cert_fail, "details": first_bad[1]}
    if failure is not None:
        _write_failure(out, failure)

    lines = [
        f"scenario: {scenario.name}",
        f"seed: {seed if seed is not None else 'none (deterministic initial guess)'}",
        f"steps: {len(results)} of {scenario.steps} completed",
        f"solver: {'all steps converged' if failure is None or failure['kind'] != 'solver-failed' else failure['message']}",
        f"total Newton iterations: {sum(r.solution.iterations for r in results)}",
        f"certificates: {len(results) - cert_fail} passed, {cert_fail} failed",
        f"max penetration depth: {max_pen:.3e} m",
        f"friction: mu={scenario.mu} e_t={scenario.e_t} e_o={scenario.e_o} e_r={scenario.e_r}",
    ]
    outcome = RunOutcome(str(out), code, len(results), cert_fail, max_pen, failure, lines)
    return outcome, results


def _write_summary(out: Path, lines, code):
    with open(out / "summary.txt", "w") as fh:
        for line in lines:
            fh.write(line + "\n")
        fh.write(f"exit status: {code}\n")


# ---------------------------------------------------------------------------
# analytic comparison

def analytic_errors(scenario: Scenario, results):
    """Per-step |numeric - analytic| for (sum p_t, sum p_o, q_x, q_y, sum p_n, sum p_r).

    The closed form is stepped on its own (never reseeded from the numeric
    state) in the stepper's contact frame; rows stop where it reports sticking.
    """
    t, o, n = scenario.patches()[0].frame
    x = np.asarray(scenario.position, dtype=float).copy()
    v = np.asarray(scenario.velocity, dtype=float).copy()
    rows, note = [], ""
    for k, res in enumerate(results):
        J = scenario.wrench_at(k).generalized_impulse(scenario.mass, scenario.h)[:3]
        inp = analytic.TranslationStepInput(scenario.mass, t, o, n, v, J, scenario.friction())
        try:
            ref = analytic.pure_translation_step(inp)
        except analytic.StickingRegime as exc:
            note = f"closed form stops at step {k}: {exc}"
            break
        v = ref.velocity
        x = x + scenario.h * v
        sums = [sum(getattr(pv, f) for pv in res.patches) for f in ("p_t", "p_o", "p_n", "p_r")]
        rows.append([k, abs(sums[0] - ref.p_t), abs(sums[1] - ref.p_o),
                     abs(res.state.position[0] - x[0]), abs(res.state.position[1] - x[1]),
                     abs(sums[2] - ref.p_n), abs(sums[3] - ref.p_r)])
    return np.array(rows, dtype=float).reshape(-1, 7), note


ANALYTIC_HEADER = ["step", "err_sum_p_t", "err_sum_p_o", "err_q_x", "err_q_y", "err_sum_p_n",
                   "err_sum_p_r"]


def run_analytic_compare(scenario, out, seed, tol):
    outcome, results = run_single(scenario, out, seed)
    lines = list(outcome.lines)
    code = outcome.exit_code
    try:
        errs, note = analytic_errors(scenario, results)
    except ValueError as exc:
        lines.append(f"analytic comparison not applicable: {exc}")
        _write_summary(Path(out), lines, EXIT_INPUT if code == EXIT_OK else code)
        return EXIT_INPUT if code == EXIT_OK else code
    with open(Path(out) / "analytic_compare.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ANALYTIC_HEADER)
        for row in errs:
            w.writerow([str(int(row[0]))] + [_num(v) for v in row[1:]])
    worst = float(errs[:, 1:5].max()) if len(errs) else 0.0
    lines.append(f"analytic compare: max |numeric - analytic| over (sum p_t, sum p_o, q_x, q_y)"
                 f" = {worst:.3e} over {len(errs)} steps (tol {tol:g})")
    if note:
        lines.append(note)
    if code == EXIT_OK and worst > tol:
        code = EXIT_TOLERANCE
        _write_failure(Path(out), {"kind": "analytic-mismatch", "max_error": worst, "tol": tol})
    _write_summary(Path(out), lines, code)
    return code


# ---------------------------------------------------------------------------
# run comparison

@dataclass
class DeviationReport:
    columns: list
    max_deviation: dict
    state_columns: list
    contact_columns: list
    state_by_step: np.ndarray
    contact_by_step: np.ndarray

    @property
    def state_max(self):
        return max((self.max_deviation[c] for c in self.state_columns), default=0.0)

    @property
    def contact_max(self):
        return max((self.max_deviation[c] for c in self.contact_columns), default=0.0)

    def lines(self):
        out = [f"state deviation (q, nu): {self.state_max:.3e}",
               f"contact deviation (a1, a2, impulses, sigma): {self.contact_max:.3e}"]
        for c in self.columns:
            kind = "state" if c in self.state_columns else "contact"
            out.append(f"  {c:<16} {kind:<8} {self.max_deviation[c]:.3e}")
        return out


def _read_table(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise GridMismatch(f"{path}: empty file")
    return rows[0], rows[1:]


def compare_runs(paths) -> DeviationReport:
    """Per-column max absolute deviation across trajectory files on the same step grid."""
    if len(paths) < 2:
        raise ValueError("need at least two trajectories to compare")
    tables = [_read_table(p) for p in paths]
    header = tables[0][0]
    for p, (h, rows) in zip(paths, tables):
        if h != header:
            raise GridMismatch(f"{p}: columns differ from {paths[0]}")
        if len(rows) != len(tables[0][1]):
            raise GridMismatch(f"{p}: {len(rows)} steps, {paths[0]} has {len(tables[0][1])}")
    numeric = [i for i, c in enumerate(header)
               if c not in ("step", "time", "certificate", "iterations") and not c.endswith("_mode")]
    n_steps = len(tables[0][1])
    data = np.array([[[float(r[i]) for i in numeric] for r in rows] for _, rows in tables])
    data = data.reshape(len(paths), n_steps, len(numeric))
    times = np.array([[float(r[1]) for r in rows] for _, rows in tables]).reshape(len(paths), n_steps)
    if n_steps and np.max(np.abs(times - times[0])) > 1e-12:
        raise GridMismatch("time columns differ")
    spread = data.max(axis=0) - data.min(axis=0) if len(paths) else data
    cols = [header[i] for i in numeric]
    state = [c for c in cols if c in STATE_COLUMNS]
    contact = [c for c in cols if c not in STATE_COLUMNS]
    maxdev = {c: float(spread[:, j].max()) if n_steps else 0.0 for j, c in enumerate(cols)}
    s_idx = [cols.index(c) for c in state]
    c_idx = [cols.index(c) for c in contact]
    by_state = spread[:, s_idx].max(axis=1) if n_steps else np.zeros(0)
    by_contact = spread[:, c_idx].max(axis=1) if n_steps and c_idx else np.zeros(n_steps)
    return DeviationReport(cols, maxdev, state, contact, by_state, by_contact)


def ecp_deviation_by_step(paths):
    """(steps, patches) spread of each patch's a1 across runs, plus patch modes of the first run."""
    tables = [_read_table(p) for p in paths]
    header = tables[0][0]
    labels = [c[:-len("_a1_x")] for c in header if c.endswith("_a1_x")]
    spreads, modes = [], []
    for label in labels:
        idx = [header.index(f"{label}_a1_{a}") for a in "xyz"]
        pts = np.array([[[float(r[i]) for i in idx] for r in rows] for _, rows in tables])
        spreads.append((pts.max(axis=0) - pts.min(axis=0)).max(axis=-1))
        modes.append([r[header.index(f"{label}_mode")] for r in tables[0][1]])
    return labels, np.array(spreads).T, list(zip(*modes))


# ---------------------------------------------------------------------------
# uniqueness runs

def _uniqueness_worker(args):
    tree, out_dir, seed = args
    scenario = scenario_from_tree(tree)
    outcome, _ = run_single(scenario, out_dir, seed)
    _write_summary(Path(out_dir), outcome.lines, outcome.exit_code)
    return outcome.exit_code, outcome.steps_completed


def run_uniqueness(scenario: Scenario, out, seed, runs, tol, workers=None):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    base = scenario.seed if seed is None else seed
    tree = scenario_to_tree(scenario)
    jobs = [(tree, str(out / f"run_{i}"), base + i) for i in range(runs)]
    workers = workers or min(runs, os.cpu_count() or 1)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_uniqueness_worker, jobs))
    else:
        results = [_uniqueness_worker(j) for j in jobs]
    lines = [f"scenario: {scenario.name}", f"uniqueness runs: {runs}, seeds {base}..{base + runs - 1}"]
    codes = [c for c, _ in results]
    for i, (c, n) in enumerate(results):
        lines.append(f"run_{i}: exit {c}, {n} steps")
    code = max(codes) if any(codes) else EXIT_OK
    if code == EXIT_OK and runs >= 2:
        paths = [j[1] + "/trajectory.csv" for j in jobs]
        report = compare_runs(paths)
        labels, ecp, modes = ecp_deviation_by_step(paths)
        with open(out / "deviation.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["step", "state"] + [f"{lab}_a1" for lab in labels])
            for k in range(len(report.state_by_step)):
                w.writerow([str(k), _num(report.state_by_step[k])] + [_num(v) for v in ecp[k]])
        pdir = out / "plotdata"
        pdir.mkdir(exist_ok=True)
        for name, vals in [("state_deviation", report.state_by_step)] + [
                (f"{lab}_a1_deviation", ecp[:, j]) for j, lab in enumerate(labels)]:
            with open(pdir / f"{name}.dat", "w") as fh:
                fh.write(f"# time {name}\n")
                for k, v in enumerate(vals):
                    fh.write(f"{_num((k + 1) * scenario.h)} {_num(v)}\n")
        lines += report.lines()
        if len(ecp):
            lines.append("max a1 deviation per patch: "
                         + ", ".join(f"{lab}={ecp[:, j].max():.3e}" for j, lab in enumerate(labels)))
        if report.state_max > tol:
            code = EXIT_TOLERANCE
            _write_failure(out, {"kind": "state-not-unique", "max_deviation": report.state_max,
                                 "tol": tol})
    _write_summary(out, lines, code)
    return code


# ---------------------------------------------------------------------------
# entry points

def cmd_simulate(args):
    try:
        scenario = load_scenario(args.scenario)
    except (OSError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    mode = args.mode or scenario.mode
    tol = DEFAULT_TOL if args.tol is None else args.tol
    if mode == "uniqueness":
        runs = args.runs or scenario.runs
        code = run_uniqueness(scenario, args.out, args.seed, runs, tol, args.workers)
    elif mode == "analytic-compare":
        code = run_analytic_compare(scenario, args.out, args.seed, tol)
    else:
        outcome, _ = run_single(scenario, args.out, args.seed)
        code = outcome.exit_code
        _write_summary(Path(args.out), outcome.lines, code)
    print(Path(args.out, "summary.txt").read_text(), end="")
    return code


def cmd_compare(args):
    try:
        report = compare_runs(args.trajectories)
    except (GridMismatch, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    for line in report.lines():
        print(line)
    return EXIT_OK


def cmd_validate(args):
    try:
        sc = load_scenario(args.scenario)
    except (OSError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    print(f"{sc.name}: valid ({len(sc.parts)} parts, {sc.steps} steps of h={sc.h}, mode {sc.mode})")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="patchsim", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a scenario and write its outputs")
    s.add_argument("scenario")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=None, help="randomise the first step's initial guess")
    s.add_argument("--mode", choices=["single", "analytic-compare", "uniqueness"], default=None)
    s.add_argument("--runs", type=int, default=None)
    s.add_argument("--tol", type=float, default=None)
    s.add_argument("--workers", type=int, default=None, help=argparse.SUPPRESS)
    s.set_defaults(func=cmd_simulate)

    c = sub.add_parser("compare", help="cross-run deviation of trajectory files")
    c.add_argument("trajectories", nargs="+")
    c.set_defaults(func=cmd_compare)

    v = sub.add_parser("validate", help="parse and check a scenario file")
    v.add_argument("scenario")
    v.set_defaults(func=cmd_validate)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "runs", None) is not None and args.runs < 1:
        print("error: --runs must be at least 1", file=sys.stderr)
        return EXIT_INPUT
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
