"""Command-line entry points.

One subcommand per run mode; every run reads an optional YAML configuration,
applies ``--set key.path=value`` overrides, streams NDJSON diagnostics to the
output path, and exits nonzero with the failing check named when a gate
fails.  Identical configurations produce byte-identical output except for the
timestamp field of the header record.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
import time

import numpy as np

from . import lab
from .checkpoint import read_state, write_state
from .config import (
    ConfigError,
    RunConfig,
    apply_overrides,
    parse_config,
    serialize_config,
)
from .integrator import (
    BlowupError,
    SimParams,
    integrate,
    random_state,
    twin_run,
)
from .lab import twin_monotonicity
from .noise import build_noise_model, check_noise_conditions
from .operators import project_state
from .records import RecordWriter
from .spectral import Lattice, Parity, sobolev_norm, zero_field


def _default_output(mode: str) -> str:
    base = os.environ.get("STOCHPE_OUTPUT_DIR", ".")
    return os.path.join(base, f"{mode.replace('-', '_')}.ndjson")


def _load_config(args, mode: str) -> RunConfig:
    text = ""
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            text = fh.read()
    if args.set:
        text = apply_overrides(args.set, text)
    cfg = parse_config(text, mode=mode)
    if args.output:
        cfg = RunConfig(**{**cfg.__dict__, "output": args.output})
    return cfg


def _initial_state(cfg: RunConfig, lattice: Lattice):
    init = cfg.initial
    if init.kind == "zero":
        return zero_field(lattice, 2, (Parity.EVEN, Parity.EVEN)), 0
    if init.kind == "random":
        return random_state(lattice, init.amplitude, init.decay, init.seed), 0
    field, step, _ = read_state(init.path, parity=(Parity.EVEN, Parity.EVEN))
    if field.lattice.n != lattice.n:
        raise ConfigError(
            f"initial.path: checkpoint is for n={field.lattice.n}, run wants n={lattice.n}"
        )
    return field, step


def _open_writer(cfg: RunConfig):
    path = cfg.output or _default_output(cfg.mode)
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    run_id = hashlib.sha256(serialize_config(cfg).encode()).hexdigest()[:12]
    fh = open(path, "w", encoding="utf-8")
    writer = RecordWriter(fh, run_id)
    writer.emit("header", mode=cfg.mode, timestamp=time.strftime("%Y-%m-%dT%H:%M:%S"))
    return fh, writer, path


def _emit_warnings(writer: RecordWriter, params: SimParams, fitted_c_sigma) -> None:
    for note in params.warnings(fitted_c_sigma):
        writer.emit("event", level="warning", message=note)


# ---------------------------------------------------------------------------
# modes
# ---------------------------------------------------------------------------


def _run_simulate(cfg: RunConfig, writer: RecordWriter) -> tuple[int, str]:
    params = cfg.params
    noise = build_noise_model(cfg.noise, sigma_ref=params.sigma)
    _emit_warnings(writer, params, cfg.fitted_c_sigma)
    lattice = params.lattice

    start_step = 0
    if cfg.checkpoint.resume:
        V0, start_step, _ = read_state(cfg.checkpoint.resume, parity=(Parity.EVEN, Parity.EVEN))
        prepared = True
    else:
        V0, _ = _initial_state(cfg, lattice)
        prepared = False

    failing = ""
    final_diag = None
    for member in range(params.ensemble_size):
        try:
            diag = integrate(
                params, noise, V0, member=member,
                start_step=start_step, initial_prepared=prepared,
            )
        except BlowupError as exc:
            diag = exc.diagnostics
            failing = f"blowup (member {member}, step {exc.step})"
        for i, t in enumerate(diag.times):
            writer.emit(
                "timeseries",
                member=diag.member,
                t=float(t),
                norm_sigma=float(diag.norm_sigma[i]),
                norm_sigma_s2=float(diag.norm_sigma_s2[i]),
                w1inf=float(diag.w1inf[i]),
                theta=float(diag.theta[i]),
                energy=float(diag.energy[i]),
                energy_integral=float(diag.energy_integral[i]),
            )
        if member == 0:
            final_diag = diag
        if failing:
            break
    if cfg.checkpoint.write and final_diag is not None and not failing:
        write_state(
            cfg.checkpoint.write,
            final_diag.final_state,
            final_diag.final_step,
            final_diag.final_step * params.dt,
        )
    writer.emit(
        "summary",
        status="failed" if failing else "ok",
        failing=failing,
        members=params.ensemble_size,
        tau_rho=final_diag.tau_rho if final_diag else None,
        cutoff_activation=final_diag.cutoff_activation if final_diag else None,
    )
    return (1 if failing else 0), failing


def _run_twin(cfg: RunConfig, writer: RecordWriter) -> tuple[int, str]:
    params = cfg.params
    noise = build_noise_model(cfg.noise, sigma_ref=params.sigma)
    V0, _ = _initial_state(cfg, params.lattice)
    worst = 0.0
    bitwise = True
    for member in range(cfg.twin.paths):
        twin = twin_run(params, noise, V0, cfg.twin.delta, cfg.twin.perturb_seed, member)
        audit = twin_monotonicity(twin)
        for i, t in enumerate(twin.times):
            writer.emit("twin", member=member, t=float(t), diff_norm=float(twin.diff_norm[i]))
        writer.emit(
            "twin_audit",
            member=member,
            c_fit=audit.c_fit,
            residual=audit.residual,
            max_violation=audit.max_violation,
            bitwise_equal=twin.bitwise_equal,
        )
        worst = max(worst, float(twin.diff_norm[-1]))
        bitwise = bitwise and twin.bitwise_equal
    failing = ""
    if cfg.twin.delta == 0.0 and not bitwise:
        failing = "twin determinism (delta = 0 not bitwise identical)"
    writer.emit("summary", status="failed" if failing else "ok", failing=failing,
                max_final_diff=worst, bitwise_equal=bitwise)
    return (1 if failing else 0), failing


def _run_verify_lemmas(cfg: RunConfig, writer: RecordWriter) -> tuple[int, str]:
    spec = cfg.lemmas
    reports = []
    for lid in spec.ids:
        if lid == "kato_ponce":
            reports.extend(lab.verify_kato_ponce(
                spec.samples, spec.resolutions, spec.s, spec.seed, spec.decay))
        elif lid == "commutator_alpha":
            for alpha in spec.alpha_values:
                reports.append(lab.verify_commutator_alpha(
                    spec.samples, spec.resolutions, spec.s, alpha, spec.seed,
                    spec.decay, spec.b_wavenumber))
        elif lid == "double_commutator":
            reports.append(lab.verify_double_commutator(
                spec.samples, spec.resolutions, spec.s, spec.seed, spec.decay,
                spec.b_wavenumber))
        elif lid == "negative_sobolev":
            for alpha in spec.alpha_values:
                if alpha < 0:
                    continue
                reports.append(lab.verify_negative_sobolev(
                    spec.samples, spec.resolutions, spec.s, alpha, spec.beta,
                    spec.seed, spec.decay, spec.b_wavenumber))
        elif lid == "leray_commutator":
            reports.extend(lab.verify_leray_commutator(
                spec.samples, spec.resolutions, spec.s, spec.seed, spec.decay,
                spec.b_wavenumber))
        elif lid == "multiplier_commutator":
            reports.append(lab.verify_multiplier_commutator(
                spec.samples, spec.resolutions, spec.s, 0.5, spec.seed, spec.decay))
        elif lid == "cancellation":
            noise = build_noise_model(cfg.noise, sigma_ref=cfg.params.sigma)
            rep = lab.verify_cancellation(noise, max(spec.samples // 10, 4),
                                          cfg.params.sigma, (4, 6, 8), seed=spec.seed)
            for n, vals in rep.combined_ratios.items():
                for i, v in enumerate(vals):
                    writer.emit("lemma_sample", lemma_id="cancellation", n=n,
                                sample=i, ratio=float(v))
            writer.emit("lemma_summary", lemma_id="cancellation",
                        resolutions=rep.resolutions,
                        max_ratio=[rep.max_combined[n] for n in rep.resolutions],
                        slope=rep.trend_slope, passes=bool(rep.trend_slope <= spec.slope_limit))
            continue
    failing = ""
    for rep in reports:
        for n, vals in rep.ratios.items():
            for i, v in enumerate(vals):
                writer.emit("lemma_sample", lemma_id=rep.lemma_id, n=n, sample=i,
                            ratio=float(v))
        ok = rep.trend_slope <= spec.slope_limit
        writer.emit(
            "lemma_summary",
            lemma_id=rep.lemma_id,
            resolutions=rep.resolutions,
            max_ratio=[rep.max_ratio[n] for n in rep.resolutions],
            slope=rep.trend_slope,
            inside_hypotheses=rep.inside_hypotheses,
            passes=bool(ok),
        )
        if not ok and rep.inside_hypotheses and not failing:
            failing = f"lemma-trend:{rep.lemma_id} (slope {rep.trend_slope:.3f})"
    writer.emit("summary", status="failed" if failing else "ok", failing=failing,
                lemmas=len(reports))
    return (1 if failing else 0), failing


def _run_example_1d(cfg: RunConfig, writer: RecordWriter) -> tuple[int, str]:
    spec = cfg.example1d
    rep = lab.weighted_cancellation_1d(spec.r, spec.tau, spec.kmax)
    for i, k in enumerate(rep.ks):
        writer.emit(
            "example1d",
            k=int(k),
            a_direct=float(rep.a_direct[i]),
            a_closed=float(rep.a_closed[i]),
            b_direct=float(rep.b_direct[i]),
            b_closed=float(rep.b_closed[i]),
        )
    ok = rep.max_rel_discrepancy <= spec.tolerance
    failing = "" if ok else f"example-1d kernel mismatch ({rep.max_rel_discrepancy:.3e})"
    writer.emit("summary", status="ok" if ok else "failed", failing=failing,
                r=spec.r, tau=spec.tau, kmax=spec.kmax,
                max_rel_discrepancy=rep.max_rel_discrepancy,
                functional_residual=rep.functional_residual)
    return (0 if ok else 1), failing


def _run_convergence(cfg: RunConfig, writer: RecordWriter) -> tuple[int, str]:
    spec = cfg.convergence
    noise = build_noise_model(cfg.noise, sigma_ref=cfg.params.sigma)
    diffs = []
    for dt in spec.dts:
        steps = round(spec.T / dt)
        if abs(steps * dt - spec.T) > 1e-9:
            raise ConfigError(f"convergence.T: {spec.T} is not a multiple of dt={dt}")
        base = cfg.params
        vals = []
        for member in range(spec.paths):
            pe = SimParams(n=base.n, s=base.s, sigma=base.sigma, rho=base.rho,
                           dt=dt, T=spec.T, f0=base.f0, scheme="em_ito",
                           seed=base.seed, p=base.p, record_every=10 ** 9)
            ph = SimParams(n=base.n, s=base.s, sigma=base.sigma, rho=base.rho,
                           dt=dt, T=spec.T, f0=base.f0, scheme="heun_stratonovich",
                           seed=base.seed, p=base.p, record_every=10 ** 9)
            V0, _ = _initial_state(cfg, pe.lattice)
            de = integrate(pe, noise, V0, member=member)
            dh = integrate(ph, noise, V0, member=member)
            diff = sobolev_norm(de.final_state - dh.final_state, base.sigma)
            vals.append(diff)
            writer.emit("convergence", dt=float(dt), member=member, diff=float(diff))
        diffs.append(float(np.mean(vals)))
    order = float(np.polyfit(np.log(spec.dts), np.log(np.maximum(diffs, 1e-300)), 1)[0])
    ok = order >= spec.min_order
    failing = "" if ok else f"convergence order {order:.3f} < {spec.min_order}"
    writer.emit("summary", status="ok" if ok else "failed", failing=failing,
                order=order, dts=list(spec.dts), diffs=diffs)
    return (0 if ok else 1), failing


def _run_check_noise(cfg: RunConfig, writer: RecordWriter) -> tuple[int, str]:
    noise = build_noise_model(cfg.noise, sigma_ref=cfg.params.sigma)
    check = check_noise_conditions(noise, cfg.params.sigma, cfg.params.s,
                                   cfg.noise_check.smallness_threshold)
    writer.emit(
        "noise_check",
        regularity=check.regularity,
        smallness=check.smallness.value,
        threshold=check.smallness.threshold,
        tail_summable=check.tail_summable,
        required=check.required,
        passes=check.passes,
    )
    failing = "" if check.passes else (
        f"noise smallness {check.smallness.value:.3e} > {check.smallness.threshold:.3e}"
    )
    writer.emit("summary", status="ok" if check.passes else "failed", failing=failing)
    return (0 if check.passes else 1), failing


_RUNNERS = {
    "simulate": _run_simulate,
    "twin": _run_twin,
    "verify-lemmas": _run_verify_lemmas,
    "example-1d": _run_example_1d,
    "convergence": _run_convergence,
    "check-noise": _run_check_noise,
}


def run(cfg: RunConfig) -> int:
    fh, writer, path = _open_writer(cfg)
    try:
        code, failing = _RUNNERS[cfg.mode](cfg, writer)
    finally:
        fh.close()
    if failing:
        print(f"stochpe {cfg.mode}: FAILED: {failing} (diagnostics: {path})", file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="stochpe",
        description="Pseudo-spectral simulator and estimate lab for rotating "
        "hydrostatic flow with fractional dissipation and transport noise.",
    )
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in _RUNNERS:
        p = sub.add_parser(mode)
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a configuration key (dotted path)")
        p.add_argument("--output", help="NDJSON output path")
    args = parser.parse_args(argv)
    try:
        cfg = _load_config(args, args.mode)
    except (ConfigError, OSError) as exc:
        print(f"stochpe: configuration error: {exc}", file=sys.stderr)
        return 2
    try:
        return run(cfg)
    except BlowupError as exc:
        print(f"stochpe: blowup at step {exc.step}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
