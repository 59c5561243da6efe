"""Scenario execution: tasks, run manifests and verification reports."""

from __future__ import annotations

import hashlib
import math
import os
import shutil
import tempfile
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import __version__, analytic, dde, field as fld, io, poles
from .params import SystemParams, dark_frequencies, derive
from .scenario import Scenario

MAX_ROWS = 20001
ROUTE_SAMPLES = 4001
CONSERVATION_TOL = 1e-3
ROUTE_FLOOR = 1e-2
DARK_MATCH_TOL = 1e-8
STEADY_TOL = 1e-3
OSC_AMP_TOL = 1e-3
OSC_PERIOD_RTOL = 1e-3
OSC_DECAY_TOL = 1e-4
TWO_LEVEL_TOL = 1e-8
LOCAL_DECAY_RTOL = 1e-6
TRAP_RATIO_TOL = 1e-3
TRAP_MID_TOL = 1e-3
ORDER_MIN = 2.0
ORDER_RESOLUTION = 0.05  # scatter of a two-ratio order estimate around the true order


class SolverFailure(RuntimeError):
    """A numerical stage failed (non-finite values or an internal error)."""


@dataclass
class Overrides:
    dt: Optional[float] = None
    t_max: Optional[float] = None


@dataclass
class CaseContext:
    label: str
    params: SystemParams
    scn: Scenario
    overrides: Overrides
    _poles: Optional[poles.PoleSet] = None

    @property
    def solver(self):
        return self.scn.solver

    def poleset(self) -> poles.PoleSet:
        if self._poles is None:
            w = self.solver.window
            window = None if w is None else poles.Window(w.re_min, w.re_max, w.im_min, w.im_max)
            self._poles = poles.find_poles(self.params, window, self.solver.grid_n)
        return self._poles

    def dt(self) -> Optional[float]:
        dt = self.overrides.dt if self.overrides.dt is not None else self.solver.dt
        if dt is None:
            return None
        return dde.snap_dt(self.params.tau, dt)

    def t_max(self, fallback: float) -> float:
        if self.overrides.t_max is not None:
            return self.overrides.t_max
        if self.solver.t_max is not None:
            return self.solver.t_max
        return fallback

    def integrate(self, t_max: float) -> dde.Trajectory:
        traj = dde.integrate(self.params, t_max, self.dt(), self.solver.corotating)
        if not (np.all(np.isfinite(traj.c_e)) and np.all(np.isfinite(traj.c_s))):
            raise SolverFailure("integration produced non-finite amplitudes")
        return traj


def derived_dict(params: SystemParams) -> dict:
    dq = derive(params)
    out = asdict(dq)
    out["gamma_tau"] = params.gamma * params.tau
    out["dark_frequencies"] = [asdict(m) for m in dark_frequencies(params)]
    return out


def default_t_max(params: SystemParams, ps: poles.PoleSet) -> float:
    """Long enough for the slowest quasi-bound pole in the window to die out."""
    base = 50.0 * params.tau if params.tau > 0 else 10.0 / params.scale
    return max(base, 1.25 * analytic.settling_time(ps))


def _stride(n: int, requested: Optional[int]) -> int:
    if requested is not None:
        return requested
    return max(1, math.ceil((n - 1) / (MAX_ROWS - 1)))


def _finite_or_none(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


def route_deviation(traj: dde.Trajectory, series: analytic.ResidueSeries, params: SystemParams):
    """max ||Ce|²_DDE - |Ce|²_residue| on [5τ, 50τ] (clipped to the trajectory)."""
    if params.tau > 0:
        lo, hi = 5.0 * params.tau, min(50.0 * params.tau, traj.t_max)
    else:
        lo, hi = 0.0, traj.t_max
    if hi <= lo:
        return None, (lo, hi)
    ts = np.linspace(lo, hi, ROUTE_SAMPLES)
    ce = dde.amplitude_at(traj, ts)[0]
    cr = analytic.residue_ce(series, ts)
    return float(np.max(np.abs(np.abs(ce) ** 2 - np.abs(cr) ** 2))), (lo, hi)


def tail_mean(traj: dde.Trajectory, fraction: float) -> float:
    start = traj.t_max * (1.0 - fraction)
    return float(np.mean(traj.pop_e[traj.t >= start]))


def dark_mismatch(ps: poles.PoleSet, params: SystemParams) -> Optional[float]:
    """Largest |s_found - s_predicted| over dark poles, None if the counts differ."""
    pred = poles.dark_pole_predict(params)
    found = ps.dark
    if len(pred) != len(found):
        return None
    if not pred:
        return 0.0
    # pair by energy; real parts of dark poles are roundoff
    a = np.array(sorted((p.s for p in found), key=lambda z: z.imag))
    b = np.array(sorted((p.s for p in pred), key=lambda z: z.imag))
    return float(np.max(np.abs(a - b)))


def oscillation_fits(traj: dde.Trajectory, params: SystemParams, t0: float):
    """cos² fits of |Ce|² on two consecutive 10-period windows starting at t0."""
    omega = 0.5 * derive(params).omega_eff
    period = math.pi / omega
    fits = []
    for k in range(2):
        ts = np.linspace(t0 + 10 * k * period, t0 + 10 * (k + 1) * period, 4001)
        pop = np.abs(dde.amplitude_at(traj, ts)[0]) ** 2
        fits.append(analytic.fit_cos2(ts, pop, omega))
    return fits


def oscillation_start(ps: poles.PoleSet, params: SystemParams) -> float:
    return max(analytic.settling_time(ps), 5.0 * params.tau)


def oscillation_expected(params: SystemParams):
    """(A, period) of the two-dark-mode beat |Ce|² ≈ A cos²(Ω_eff t/2 + φ0)."""
    gtau = params.gamma * params.tau
    modes = dark_frequencies(params)
    amp = sum(m.overlap / (gtau * m.overlap + 1.0) for m in modes) ** 2
    return amp, 2.0 * math.pi / derive(params).omega_eff


def conservation_times(params: SystemParams, requested) -> List[float]:
    if requested is not None:
        return sorted(requested)
    if params.tau > 0:
        return [f * params.tau for f in (0.5, 1.0, 2.0, 5.0, 20.0, 50.0)]
    g = params.gamma if params.gamma > 0 else params.scale
    return [f / g for f in (0.5, 1.0, 2.0)]


# tasks: each returns (diagnostics, files) and writes into ``outdir``


def task_pole_map(ctx: CaseContext, outdir: Path):
    ps = ctx.poleset()
    series = analytic.residue_series(ps)
    fname = f"{ctx.label}_poles.csv"
    poles.write_csv(ps, outdir / fname)
    diag = {
        "pole_count": len(ps),
        "dark_count": len(ps.dark),
        "quasi_bound_count": len(ps.quasi_bound),
        "truncation": series.diagnostic,
        "weight_sum_limit": analytic.weight_sum_limit(ctx.params),
        "argument_principle_count": poles.count_roots(ctx.params, ps.window),
        "dark_prediction_mismatch": dark_mismatch(ps, ctx.params),
        "max_residual": max((p.residual for p in ps), default=0.0),
        "window": ps.window.as_dict(),
        "newton": dict(ps.diagnostics),
    }
    return diag, [fname]


def _dynamics_common(ctx: CaseContext, fallback_t_max: Optional[float] = None):
    ps = ctx.poleset()
    series = analytic.residue_series(ps)
    if fallback_t_max is None:
        fallback_t_max = default_t_max(ctx.params, ps)
    traj = ctx.integrate(ctx.t_max(fallback_t_max))
    dev, span = route_deviation(traj, series, ctx.params)
    diag = {
        "t_max": traj.t_max,
        "dt": traj.dt,
        "steps": int(traj.t.size - 1),
        "corotating": traj.frame != 0.0,
        "pole_count": len(ps),
        "dark_count": len(ps.dark),
        "truncation": series.diagnostic,
        "route_deviation": dev,
        "route_span": list(span),
        "settling_time": analytic.settling_time(ps),
        "metastable_residual": dde.metastable_check(traj, ctx.params),
    }
    return ps, series, traj, diag


def task_dynamics(ctx: CaseContext, outdir: Path):
    ps, series, traj, diag = _dynamics_common(ctx)
    p = ctx.params
    diag["tail_mean_pop_e"] = tail_mean(traj, ctx.solver.tail_fraction)
    n_dark = len(dark_frequencies(p))
    diag["steady_population"] = analytic.steady_population(p) if n_dark < 2 else None
    if p.rabi_omega == 0.0:
        upto = min(2.0 * p.tau, traj.t_max) if p.tau > 0 else traj.t_max
        sel = traj.t <= upto
        ex = analytic.two_level_exact(p, traj.t[sel])
        diag["two_level_max_error"] = float(np.max(np.abs(traj.c_e[sel] - ex)))
        diag["two_level_span"] = [0.0, float(upto)]
        if p.tau == 0.0:
            g = p.gamma if p.gamma > 0 else 1.0
            sel = traj.t <= 2.0 / g
            ref = np.exp(-4.0 * p.gamma * traj.t[sel])
            diag["local_decay_rel_error"] = float(np.max(np.abs(traj.pop_e[sel] / ref - 1.0)))
    stride = _stride(traj.t.size, ctx.solver.output_stride)
    idx = np.arange(0, traj.t.size, stride)
    if idx[-1] != traj.t.size - 1:
        idx = np.append(idx, traj.t.size - 1)
    fname = f"{ctx.label}_dynamics.csv"
    io.write_csv(
        outdir / fname,
        ["t", "re_ce", "im_ce", "re_cs", "im_cs", "pop_e", "pop_s"],
        dde.timeseries_rows(traj.t[idx], traj.c_e[idx], traj.c_s[idx]),
    )
    diag["output_stride"] = stride
    rname = f"{ctx.label}_residue.csv"
    analytic.write_csv(series, traj.t[idx], outdir / rname)
    pname = f"{ctx.label}_poles.csv"
    poles.write_csv(ps, outdir / pname)
    return diag, [fname, rname, rname[:-4] + ".json", pname]


def task_bound_analysis(ctx: CaseContext, outdir: Path):
    p = ctx.params
    modes = dark_frequencies(p)
    ps = ctx.poleset()
    fallback = default_t_max(p, ps)
    if len(modes) == 2:
        fallback = max(fallback, oscillation_start(ps, p) + 21.0 * oscillation_expected(p)[1])
    ps, series, traj, diag = _dynamics_common(ctx, fallback)
    diag["dark_prediction_mismatch"] = dark_mismatch(ps, p)
    diag["dark_weights"] = [
        {"s_imag": pl.s.imag, "re_weight": pl.weight.real, "im_weight": pl.weight.imag}
        for pl in ps.dark
    ]
    diag["dark_weights_predicted"] = [
        {"s_imag": pl.s.imag, "re_weight": pl.weight.real, "im_weight": pl.weight.imag}
        for pl in poles.dark_pole_predict(p)
    ]
    stride = _stride(traj.t.size, ctx.solver.output_stride)
    idx = np.arange(0, traj.t.size, stride)
    t = traj.t[idx]
    header = ["t", "pop_e", "pop_e_residue"]
    cols = [t, traj.pop_e[idx], np.abs(analytic.residue_ce(series, t)) ** 2]
    if len(modes) == 1:
        ce_b, _ = analytic.static_bound(p, t)
        cols.append(np.abs(ce_b) ** 2)
        header.append("pop_e_bound")
        diag["tail_mean_pop_e"] = tail_mean(traj, ctx.solver.tail_fraction)
        diag["steady_population"] = analytic.steady_population(p)
        diag["steady_error"] = abs(diag["tail_mean_pop_e"] - diag["steady_population"])
    elif len(modes) == 2:
        ce_b = analytic.oscillating_bound(p, t)
        cols.append(np.abs(ce_b) ** 2)
        header.append("pop_e_bound")
        t0 = oscillation_start(ps, p)
        expected, period = oscillation_expected(p)
        if t0 + 20.0 * period <= traj.t_max:
            f1, f2 = oscillation_fits(traj, p, t0)
            diag["oscillation"] = {
                "fit_start": t0,
                "amplitude": f1.amplitude,
                "amplitude_expected": expected,
                "period": f1.period,
                "period_expected": period,
                "amplitude_later": f2.amplitude,
                "amplitude_drift": abs(f2.amplitude - f1.amplitude),
                "rms_residual": f1.rms_residual,
            }
    fname = f"{ctx.label}_bound.csv"
    io.write_csv(outdir / fname, header, zip(*[c.tolist() for c in cols]))
    pname = f"{ctx.label}_poles.csv"
    poles.write_csv(ps, outdir / pname)
    return diag, [fname, pname]


def trapping_metrics(traj: dde.Trajectory, params: SystemParams, t: float) -> dict:
    """Density outside/inside the legs and the midpoint density at time t."""
    d = params.d
    x_in = np.linspace(0.0, d, 2049)[1:-1]
    x_out = np.concatenate([np.linspace(-d, 0.0, 1025)[:-1], np.linspace(d, 2.0 * d, 1025)[1:]])
    p_in = np.abs(fld.field_amplitude(traj, params, x_in, t)) ** 2
    p_out = np.abs(fld.field_amplitude(traj, params, x_out, t)) ** 2
    peak = float(np.max(p_in))
    out = {
        "time": t,
        "interior_peak": peak,
        "exterior_max": float(np.max(p_out)),
        "exterior_ratio": float(np.max(p_out) / peak) if peak > 0 else None,
        "midpoint_density": float(abs(fld.field_amplitude(traj, params, 0.5 * d, t)) ** 2),
    }
    if len(dark_frequencies(params)) == 1:
        out["midpoint_density_closed_form"] = float(fld.static_density(params, 0.5 * d))
        out["midpoint_error"] = abs(out["midpoint_density"] - out["midpoint_density_closed_form"])
    return out


def task_field_profile(ctx: CaseContext, outdir: Path):
    p = ctx.params
    if p.d <= 0:
        raise ValueError("field-profile needs d > 0")
    ps, series, traj, diag = _dynamics_common(ctx)
    t = traj.t_max
    x = fld.default_x_grid(p, ctx.solver.x_points)
    prof = fld.density_profile(traj, p, x, t)
    header = ["x", "re_phi", "im_phi", "p"]
    cols = [prof.x, prof.phi.real, prof.phi.imag, prof.p]
    n_dark = len(dark_frequencies(p))
    if n_dark == 1:
        header.append("p_bound")
        cols.append(fld.static_density(p, x))
    elif n_dark == 2 and p.alpha_e == p.alpha_s and p.phi == 0.0:
        header.append("p_bound")
        cols.append(fld.oscillating_density(p, x, t))
    fname = f"{ctx.label}_field.csv"
    io.write_csv(outdir / fname, header, zip(*[np.asarray(c).tolist() for c in cols]))
    files = [fname]
    if n_dark:
        diag["trapping"] = trapping_metrics(traj, p, t)
    if n_dark == 2 and "p_bound" in header:
        diag["max_abs_density_vs_bound"] = float(np.max(np.abs(prof.p - cols[-1])))
    ns = ctx.solver.spacetime_samples
    if ns:
        ts = np.linspace(0.0, t, ns)
        sname = f"{ctx.label}_spacetime.csv"
        fld.write_spacetime_csv(traj, p, x, ts, outdir / sname)
        files.append(sname)
    return diag, files


def task_conservation(ctx: CaseContext, outdir: Path):
    p = ctx.params
    times = conservation_times(p, ctx.solver.conservation_times)
    t_max = ctx.t_max(max(times) if max(times) > 0 else 1.0)
    if t_max < max(times):
        raise ValueError("t_max is shorter than the latest conservation time")
    traj = ctx.integrate(t_max)
    rows = []
    for t in times:
        ce, cs = dde.amplitude_at(traj, t)
        atom = abs(ce) ** 2 + abs(cs) ** 2
        norm = fld.field_norm(traj, p, t)
        bal = atom + norm - 1.0
        cross = fld.interior_cross_term(traj, p, t)
        rows.append((t, atom, norm, bal, cross, bal - cross))
    fname = f"{ctx.label}_conservation.csv"
    io.write_csv(outdir / fname, ["t", "atom_pop", "field_norm", "balance", "interior_cross", "split_balance"], rows)
    order = None
    vals = None
    t_order = times[-1]
    if t_order > 0:
        order, vals = fld.refinement_order(traj, p, t_order)
    diag = {
        "t_max": traj.t_max,
        "dt": traj.dt,
        "times": times,
        "max_abs_balance": max(abs(r[3]) for r in rows),
        "max_abs_split_balance": max(abs(r[5]) for r in rows),
        "refinement_order": _finite_or_none(order),
        "refinement_time": t_order,
        "refinement_integrals": vals,
    }
    return diag, [fname]


TASKS = {
    "pole-map": task_pole_map,
    "dynamics": task_dynamics,
    "bound-analysis": task_bound_analysis,
    "field-profile": task_field_profile,
    "conservation": task_conservation,
}


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def resolve_out_root(cli_out: Optional[str], scn: Scenario) -> Path:
    """--out, then the scenario's output_dir, then $GAD_OUT_DIR, then ./gad-out."""
    for candidate in (cli_out, scn.output_dir, os.environ.get("GAD_OUT_DIR")):
        if candidate is None:
            continue
        if not candidate.strip():
            raise ValueError("output path must not be empty")
        return Path(candidate)
    return Path("gad-out")


def run(scn: Scenario, out_root: Path, overrides: Optional[Overrides] = None) -> dict:
    """Execute a scenario into ``out_root/<name>`` and return its manifest.

    Outputs are staged in a hidden sibling directory and moved into place only
    after the manifest is written, so a failed run leaves no partial files.
    """
    overrides = overrides or Overrides()
    if overrides.dt is not None and not overrides.dt > 0:
        raise ValueError("dt override must be > 0")
    if overrides.t_max is not None and not overrides.t_max > 0:
        raise ValueError("t_max override must be > 0")
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=f".{scn.name}.", dir=out_root))
    try:
        cases = []
        files = []
        notes = []
        for label, params in scn.cases():
            with warnings.catch_warnings(record=True) as caught:
                warnings.simplefilter("always")
                ctx = CaseContext(label, params, scn, overrides)
                diag, case_files = TASKS[scn.task](ctx, stage)
            notes.extend(f"{label}: {w.message}" for w in caught)
            cases.append({"label": label, "derived": derived_dict(params), "diagnostics": diag})
            files.extend(case_files)
        manifest = {
            "tool": "gad",
            "version": __version__,
            "scenario": scn.echo(),
            "overrides": asdict(overrides),
            "cases": cases,
            "warnings": sorted(set(notes)),
            "files": [{"name": f, "sha256": _sha256(stage / f)} for f in files],
        }
        manifest = _jsonable(manifest)
        io.write_json(stage / "manifest.json", manifest)
        target = out_root / scn.name
        if target.exists():
            shutil.rmtree(target)
        os.replace(stage, target)
    except BaseException:
        shutil.rmtree(stage, ignore_errors=True)
        raise
    return manifest


@dataclass
class Check:
    name: str
    case: str
    value: Optional[float]
    threshold: float
    passed: bool
    note: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        val = "n/a" if self.value is None else f"{self.value:.3e}"
        tail = f"  ({self.note})" if self.note else ""
        return f"{status}  {self.case:<8} {self.name:<28} measured={val}  threshold={self.threshold:.1e}{tail}"


def _le(name, case, value, thr, note=""):
    ok = value is not None and math.isfinite(value) and value <= thr
    return Check(name, case, value, thr, ok, note)


def verify(scn: Scenario, overrides: Optional[Overrides] = None) -> List[Check]:
    """Run the route-equivalence, conservation and closed-form checks for each case."""
    overrides = overrides or Overrides()
    checks: List[Check] = []
    for label, p in scn.cases():
        ctx = CaseContext(label, p, scn, overrides)
        ps = ctx.poleset()
        series = analytic.residue_series(ps, warn=False)
        modes = dark_frequencies(p)

        mismatch = dark_mismatch(ps, p)
        checks.append(_le("dark poles vs prediction", label, mismatch, DARK_MATCH_TOL,
                          f"{len(ps.dark)} found, {len(modes)} predicted"))
        n_ap = poles.count_roots(p, ps.window)
        checks.append(Check("argument principle count", label, float(abs(n_ap - len(ps))), 0.0,
                            n_ap == len(ps), f"{len(ps)} found, {n_ap} counted"))

        t_need = default_t_max(p, ps)
        if len(modes) == 2:
            t_need = max(t_need, oscillation_start(ps, p) + 21.0 * oscillation_expected(p)[1])
        times = conservation_times(p, scn.solver.conservation_times)
        # the checks need their own horizon; a shorter scenario t_max is extended
        traj = ctx.integrate(max(ctx.t_max(t_need), max(times)))

        dev, _ = route_deviation(traj, series, p)
        thr = max(ROUTE_FLOOR, 3.0 * series.diagnostic)
        checks.append(_le("route equivalence", label, dev, thr, f"truncation {series.diagnostic:.2e}"))

        worst, worst_t, worst_split = 0.0, None, 0.0
        for t in times:
            bal = fld.excitation_balance(traj, p, t)
            split = bal - fld.interior_cross_term(traj, p, t)
            if abs(bal) >= worst:
                worst, worst_t = abs(bal), t
            worst_split = max(worst_split, abs(split))
        checks.append(_le("conservation", label, worst, CONSERVATION_TOL,
                          f"worst at t={worst_t:.4g}; split-interior {worst_split:.1e}"))
        if times[-1] > 0:
            order, _ = fld.refinement_order(traj, p, times[-1])
            checks.append(Check("conservation order", label, _finite_or_none(order), ORDER_MIN,
                                order >= ORDER_MIN - ORDER_RESOLUTION,
                                f"minimum, estimate resolution {ORDER_RESOLUTION}"))

        if len(modes) == 1:
            err = abs(tail_mean(traj, scn.solver.tail_fraction) - analytic.steady_population(p))
            checks.append(_le("steady-state population", label, err, STEADY_TOL))
        if len(modes) == 2:
            f1, f2 = oscillation_fits(traj, p, oscillation_start(ps, p))
            expected, period = oscillation_expected(p)
            checks.append(_le("oscillation amplitude", label, abs(f1.amplitude - expected), OSC_AMP_TOL))
            checks.append(_le("oscillation period", label, abs(f1.period / period - 1.0), OSC_PERIOD_RTOL,
                              f"period {f1.period:.6f}"))
            checks.append(_le("oscillation amplitude drift", label, abs(f2.amplitude - f1.amplitude), OSC_DECAY_TOL))
        if modes and p.d > 0:
            tm = trapping_metrics(traj, p, traj.t_max)
            checks.append(_le("trapping exterior ratio", label, tm["exterior_ratio"], TRAP_RATIO_TOL))
            if "midpoint_error" in tm:
                checks.append(_le("midpoint static density", label, tm["midpoint_error"], TRAP_MID_TOL))
        if p.rabi_omega == 0.0:
            upto = min(2.0 * p.tau, traj.t_max) if p.tau > 0 else traj.t_max
            sel = traj.t <= upto
            err = float(np.max(np.abs(traj.c_e[sel] - analytic.two_level_exact(p, traj.t[sel]))))
            checks.append(_le("two-level closed form", label, err, TWO_LEVEL_TOL, f"on [0, {upto:.4g}]"))
            if p.tau == 0.0:
                g = p.gamma if p.gamma > 0 else 1.0
                sel = traj.t <= 2.0 / g
                rel = float(np.max(np.abs(traj.pop_e[sel] / np.exp(-4.0 * p.gamma * traj.t[sel]) - 1.0)))
                checks.append(_le("local decay e^-4gt", label, rel, LOCAL_DECAY_RTOL))
    return checks
