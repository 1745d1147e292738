"""Command-line front end.

Exit status: 0 success, 2 configuration error, 3 numerical failure,
4 inconclusive verdict under ``--strict``.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import AnalysisConfig, ConfigError, load_config
from .cycle import find_cycle, nontrivial_multiplier_2d
from .hopf import (
    find_equilibrium,
    holling_tanner_positive_equilibrium,
    hopf_period_eps_slope,
    hopf_report,
    jacobian_at_equilibrium,
)
from .ode import IntegratorConfig
from .patch import (
    SynchronousCycle,
    build_patch_system,
    largest_lyapunov_exponent,
    linearize_about_sync,
    patch_floquet,
    predict_and_verify,
)
from .period import fd_p1, identical_diffusion_p1, max_workers, urabe_p1
from . import presets
from .report import emit_orbit_plot, emit_trace_plot, write_summary, write_table

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_INCONCLUSIVE = 0, 2, 3, 4


class _Ctx:
    def __init__(self, args, cfg: AnalysisConfig | None):
        self.args = args
        self.cfg = cfg
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        src = cfg.source if cfg is not None else f"builtin:{args.command}"
        self.hash = hashlib.sha256(src.encode()).hexdigest()

    @property
    def integrator(self) -> IntegratorConfig:
        base = self.cfg.integrator if self.cfg is not None else IntegratorConfig()
        if self.args.tol is not None:
            base = replace(base, rtol=self.args.tol, atol=self.args.tol * 1e-2)
        if self.args.fixed_step is not None:
            base = replace(base, fixed_step=self.args.fixed_step)
        return base

    @property
    def probes(self) -> list[float]:
        if self.args.probes:
            return self.args.probes
        return self.cfg.probes if self.cfg is not None else [1e-3, 2e-3, 4e-3]

    def finish(self, body: dict) -> str:
        text = write_summary(self.out, self.args.command, self.hash, body)
        print(text, end="")
        return text


def _float_list(text: str) -> list[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals or any(v <= 0 for v in vals):
        raise argparse.ArgumentTypeError("probe values must be positive")
    return vals


def _cycle(ctx: _Ctx):
    cfg = ctx.cfg
    if cfg.seed is None:
        raise ConfigError("[cycle] seed is required")
    return find_cycle(cfg.kinetics, cfg.seed, ctx.integrator, section=cfg.section, burn_in=cfg.burn_in)


def _equilibrium_near(ks, cycle):
    try:
        ts, ys = cycle.samples(256)
        return find_equilibrium(ks, ys[:-1].mean(axis=0))
    except (ArithmeticError, np.linalg.LinAlgError, ValueError):
        return None


def _cycle_body(ks, cyc) -> dict:
    body = cyc.summary()
    body["liouville_ratio"] = cyc.liouville_ratio
    body["closure_error"] = cyc.closure_error()
    if ks.dim == 2:
        body["gamma_tilde_quadrature"] = nontrivial_multiplier_2d(ks, cyc)
    return body


# -- subcommands -------------------------------------------------------------------


def cmd_cycle(ctx: _Ctx) -> int:
    ks = ctx.cfg.kinetics
    cyc = _cycle(ctx)
    ts, ys = cyc.samples(1000)
    cyc.to_csv(ctx.out / "cycle.csv", names=ks.variables)
    if ks.dim >= 2:
        emit_orbit_plot(ctx.out, ts, ys, ks.variables, _equilibrium_near(ks, cyc))
    ctx.finish({"model": ks.name, "params": ks.params, "cycle": _cycle_body(ks, cyc)})
    return EXIT_OK


def _period_body(ks, cyc, E, workers=None) -> dict:
    body = {"E": E}
    if ks.dim == 2:
        body["urabe"] = urabe_p1(ks, cyc, E).summary()
    body["finite_difference"] = fd_p1(ks, cyc, E, workers=workers).summary()
    if np.allclose(E, E[0, 0] * np.eye(ks.dim), rtol=0, atol=0):
        body["identical_diffusion"] = identical_diffusion_p1(cyc, E[0, 0]).summary()
    if "urabe" in body:
        fd = body["finite_difference"]["P1"]
        body["relative_difference"] = abs(body["urabe"]["P1"] - fd) / max(abs(fd), 1e-8)
    return body


def cmd_period(ctx: _Ctx) -> int:
    ctx.cfg.require_patch()
    ks = ctx.cfg.kinetics
    cyc = _cycle(ctx)
    ctx.finish({"period": cyc.period, "P_prime": _period_body(ks, cyc, ctx.cfg.E)})
    return EXIT_OK


def _conditions(rep, E, k, k1) -> dict:
    coeffs = [rep.c1] + [None] * (k - 1)
    cond = hopf_period_eps_slope(rep.jacobian, rep.mu0, E, k, k1, coeffs)
    return cond.summary()


def cmd_hopf(ctx: _Ctx) -> int:
    cfg = ctx.cfg
    if cfg.hopf_guess is None:
        raise ConfigError("[hopf] guess is required")
    rep = hopf_report(cfg.kinetics, cfg.hopf_guess, cfg.hopf_parameter, weak_focus_order=cfg.hopf_order)
    body = rep.summary()
    if cfg.E is not None:
        body["conditions"] = _conditions(rep, cfg.E, cfg.hopf_order, cfg.hopf_k1)
    s = rep.summary()
    write_table(ctx.out / "hopf.csv",
                ["u", "v", "J11", "J12", "J21", "J22", "mu0", "A_prime", "Re_C1", "Im_C1"],
                [[*s["equilibrium"], s["J11"], s["J12"], s["J21"], s["J22"], s["mu0"],
                  s["A_prime"] if s["A_prime"] is not None else float("nan"), s["Re_C1"], s["Im_C1"]]])
    ctx.finish(body)
    return EXIT_OK


def _multiplier_rows(results):
    for r in results:
        for j, g in enumerate(r.multipliers):
            yield [r.delta, j, float(g.real), float(g.imag), float(abs(g)), int(j == r.trivial_index)]


def cmd_floquet(ctx: _Ctx) -> int:
    cfg = ctx.cfg
    cfg.require_patch()
    ks = cfg.kinetics
    cyc = _cycle(ctx)
    sc = SynchronousCycle(cyc, cfg.n)
    with ThreadPoolExecutor(max_workers=max_workers()) as pool:
        res = list(pool.map(lambda d: patch_floquet(build_patch_system(ks, cfg.n, cfg.E, d), sc, ctx.integrator),
                            cfg.deltas))
    write_table(ctx.out / "multipliers.csv", ["delta", "index", "re", "im", "modulus", "trivial"],
                _multiplier_rows(res))
    ctx.finish({
        "period": cyc.period,
        "n": cfg.n,
        "spectra": [{"delta": r.delta, "multipliers": r.multipliers, "trivial": r.trivial_multiplier,
                     "liouville_ratio": r.liouville_ratio, "classification": r.classification} for r in res],
    })
    return EXIT_OK


def cmd_lle(ctx: _Ctx) -> int:
    cfg = ctx.cfg
    cfg.require_patch()
    cyc = _cycle(ctx)
    lin = linearize_about_sync(build_patch_system(cfg.kinetics, cfg.n, cfg.E, cfg.delta), cyc)
    res = largest_lyapunov_exponent(lin, horizon=cfg.horizon, burn_in=cfg.lle_burn_in, cfg=ctx.integrator)
    emit_trace_plot(ctx.out, res.trace)
    ctx.finish({"delta": cfg.delta, "n": cfg.n, **res.summary()})
    return EXIT_OK


def cmd_verdict(ctx: _Ctx) -> int:
    cfg = ctx.cfg
    cfg.require_patch()
    cyc = _cycle(ctx)
    v = predict_and_verify(cfg.kinetics, cyc, cfg.E, cfg.n, ctx.probes, horizon=cfg.horizon,
                           burn_in=cfg.lle_burn_in, cfg=ctx.integrator)
    write_table(ctx.out / "multipliers.csv", ["delta", "index", "re", "im", "modulus", "trivial"],
                _multiplier_rows(v.floquet))
    if v.lyapunov is not None:
        emit_trace_plot(ctx.out, v.lyapunov.trace)
    ctx.finish(v.summary())
    if ctx.args.strict and v.verdict == "inconclusive":
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def cmd_sweep(ctx: _Ctx) -> int:
    cfg = ctx.cfg
    cfg.require_patch()
    if not cfg.sweep:
        raise ConfigError("[sweep] section is required")
    ks = cfg.kinetics
    cyc = _cycle(ctx)
    target, values = cfg.sweep["target"], cfg.sweep["values"]
    sc = SynchronousCycle(cyc, cfg.n)

    def run(val):
        E, d = cfg.E.copy(), cfg.delta
        if target == "delta":
            d = val
        else:
            i, j = int(target[1]) - 1, int(target[2]) - 1
            E[i, j] = val
        p1 = urabe_p1(ks, cyc, E).p1 if ks.dim == 2 else fd_p1(ks, cyc, E).p1
        r = patch_floquet(build_patch_system(ks, cfg.n, E, d), sc, ctx.integrator)
        rest = np.delete(np.abs(r.multipliers), r.trivial_index)
        return [val, d, p1, float(rest.max()), float(np.log(np.abs(r.multipliers).max()) / cyc.period),
                r.classification]

    with ThreadPoolExecutor(max_workers=max_workers()) as pool:
        rows = list(pool.map(run, values))
    header = [target if target != "delta" else "value", "delta", "P_prime_0", "max_nontrivial_modulus",
              "lle_floquet", "classification"]
    write_table(ctx.out / "sweep.csv", header, rows)
    ctx.finish({"target": target, "rows": [dict(zip(header, r)) for r in rows]})
    return EXIT_OK


def cmd_example1(ctx: _Ctx) -> int:
    ks = presets.example1()
    integ = ctx.integrator
    cyc = find_cycle(ks, presets.EXAMPLE1_SEED, integ)
    ts, ys = cyc.samples(1000)
    emit_orbit_plot(ctx.out, ts, ys, ks.variables, presets.EXAMPLE1_EQUILIBRIUM, title="example 1")
    cases = {"identical": presets.EXAMPLE1_IDENTICAL, "cross": presets.EXAMPLE1_CROSS}
    body = {"cycle": _cycle_body(ks, cyc), "equilibrium": presets.EXAMPLE1_EQUILIBRIUM, "cases": {}}
    horizon = ctx.cfg.horizon if ctx.cfg else 20000.0
    burn = ctx.cfg.lle_burn_in if ctx.cfg else 500.0
    for name, E in cases.items():
        case = {"E": E, "P_prime": _period_body(ks, cyc, E), "lle": {}}
        for d in ((0.01,) if name == "identical" else (0.01, 0.1)):
            lin = linearize_about_sync(build_patch_system(ks, 2, E, d), cyc)
            res = largest_lyapunov_exponent(lin, horizon=horizon, burn_in=burn, cfg=integ)
            emit_trace_plot(ctx.out, res.trace, stem=f"lle_trace_{name}_delta{d:g}")
            case["lle"][f"delta={d:g}"] = res.summary()
        probes = ctx.probes if name == "identical" else [p / 10 for p in ctx.probes]
        v = predict_and_verify(ks, cyc, E, 2, probes, run_lyapunov=False, cfg=integ)
        case["verdict"] = {k: v.summary()[k] for k in ("verdict", "prediction", "measured", "predicted_slope",
                                                       "fitted_slopes", "probes", "max_multiplier_modulus")}
        body["cases"][name] = case
    lles = {k: body["cases"]["cross"]["lle"][k]["lle_qr"] for k in body["cases"]["cross"]["lle"]}
    body["cross_lle_reference"] = {"value": 0.0031, "tolerance": 0.0015,
                                   "matching_deltas": [k for k, v in lles.items() if abs(v - 0.0031) <= 0.0015]}
    ctx.finish(body)
    return EXIT_OK


def cmd_example2(ctx: _Ctx) -> int:
    p = presets.EXAMPLE2
    ks = presets.example2()
    integ = ctx.integrator
    u, v = holling_tanner_positive_equilibrium(p["a"], p["h"], p["s"])
    J = jacobian_at_equilibrium(ks, (u, v))
    rep = hopf_report(ks, (u, v), "s", weak_focus_order=presets.EXAMPLE2_ORDER)
    body = {
        "equilibrium": [u, v],
        "J_at_s0.1": {"J11": J[0, 0], "J12": J[0, 1], "J21": J[1, 0], "J22": J[1, 1]},
        "eigenvalues": np.linalg.eigvals(J),
        "hopf": rep.summary(),
        "cases": {},
    }
    ks_c = presets.example2(presets.EXAMPLE2_S_CYCLE)
    seed, section = presets.example2_cycle_seed()
    cyc = find_cycle(ks_c, seed, integ, section=section, burn_in=0.0)
    ts, ys = cyc.samples(1000)
    emit_orbit_plot(ctx.out, ts, ys, ks.variables, (u, v), title="example 2")
    body["cycle"] = _cycle_body(ks_c, cyc)
    horizon = ctx.cfg.horizon if ctx.cfg else 20000.0
    burn = ctx.cfg.lle_burn_in if ctx.cfg else 500.0
    for name, E in (("d21=+100", presets.EXAMPLE2_PLUS), ("d21=-100", presets.EXAMPLE2_MINUS)):
        cond = _conditions(rep, E, presets.EXAMPLE2_ORDER, 1)
        lin = linearize_about_sync(build_patch_system(ks_c, 2, E, presets.EXAMPLE2_DELTA), cyc)
        res = largest_lyapunov_exponent(lin, horizon=horizon, burn_in=burn, cfg=integ)
        emit_trace_plot(ctx.out, res.trace, stem=f"lle_trace_{name.replace('=', '').replace('+', 'p').replace('-', 'm')}")
        # the Floquet route is the converged value; the QR average carries a slow transient here
        simulated = "destabilized" if res.floquet_value > 1e-4 else "stable"
        scan = {}
        for d in (1e-6, 1e-5, 1e-4, 1e-3, 1e-2):
            r = patch_floquet(build_patch_system(ks_c, 2, E, d), cyc, integ)
            scan[f"delta={d:g}"] = float(np.delete(np.abs(r.multipliers), r.trivial_index).max())
        body["cases"][name] = {
            "E": E,
            "conditions": cond,
            "P_prime_urabe": urabe_p1(ks_c, cyc, E).p1,
            "lle": res.summary(),
            "simulated": simulated,
            "bracket_rule_agrees_with_simulation": cond["bracket_rule"] == simulated,
            "max_nontrivial_multiplier_by_delta": scan,
        }
    body["note"] = (
        "The bracket rule (destabilization iff d22 J11 + d11 J22 - d12 J21 - d21 J12 < 0) and the simulated "
        "exponent are reported side by side; where they disagree the discrepancy is left unresolved."
    )
    ctx.finish(body)
    return EXIT_OK


COMMANDS = {
    "cycle": (cmd_cycle, "locate the limit cycle and its multipliers"),
    "period": (cmd_period, "period derivative P'(0) by quadrature and finite differences"),
    "hopf": (cmd_hopf, "Hopf point data, first Lyapunov coefficient and coupling conditions"),
    "floquet": (cmd_floquet, "patch Floquet multipliers at each coupling strength"),
    "lle": (cmd_lle, "largest Lyapunov exponent of the linearized patch system"),
    "verdict": (cmd_verdict, "predict destabilization from P'(0) and verify it"),
    "example1": (cmd_example1, "reproduce the stable-cycle Holling-Tanner case study"),
    "example2": (cmd_example2, "reproduce the weak-focus Holling-Tanner case study"),
    "sweep": (cmd_sweep, "grid over the coupling strength or one entry of E"),
}
CONFIG_OPTIONAL = {"example1", "example2"}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="floquet-patch", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"floquet-patch {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, helptext) in COMMANDS.items():
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("config", nargs="?" if name in CONFIG_OPTIONAL else None, help="analysis config file")
        sp.add_argument("--out", default="floquet_out", help="output directory (default: %(default)s)")
        sp.add_argument("--tol", type=float, help="relative tolerance (absolute = tol/100)")
        sp.add_argument("--fixed-step", type=float, nargs="?", const=0.01, default=None, metavar="H",
                        help="use fixed-step RK4 with step H (default 0.01) for reproducibility studies")
        sp.add_argument("--strict", action="store_true", help="exit 4 on an inconclusive verdict")
        sp.add_argument("--probes", type=_float_list, help="coupling probes, e.g. '1e-3,2e-3,4e-3'")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    func = COMMANDS[args.command][0]
    try:
        cfg = load_config(args.config) if args.config else None
        if args.tol is not None and not args.tol > 0:
            raise ConfigError("--tol must be positive")
        return func(_Ctx(args, cfg))
    except ConfigError as exc:
        print(f"floquet-patch: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, ArithmeticError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"floquet-patch: numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"floquet-patch: I/O failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
