"""``isslab`` command line: simulate, estimate, lyapunov, lattice, replay.

Runs are described by an INI file. Exit codes: 0 when no violation was
found, 3 when a property was falsified, 1 on any error.
"""

from __future__ import annotations

import argparse
import ast
import configparser
import csv
import os
import platform
import sys

import numpy as np

from . import __version__
from .comparison_functions import parse_gain
from .estimators import (
    FALSIFIED,
    NO_VIOLATION,
    OBJECTIVES,
    EstimationBudget,
    EstimationReport,
    Witness,
    adversarial_search,
    check_ag,
    check_brs,
    check_cep,
    check_limit,
    check_stability,
    check_zero_ugatt,
    estimate_flow_lipschitz,
    fit_iss_bound,
)
from .integrator import IntegrationError, IntegratorConfig, trajectory, write_events_csv, write_trajectory_csv
from .lattice import closure, load_rules, parse_atoms, query, seed_kb
from .lyapunov import (
    CandidateLF,
    PreconditionError,
    check_dissipation,
    nclf_ulim_bound,
    parse_lyapunov,
    verify_integral_inequality,
    verify_ulim_from_nclf,
)
from .signals import parse_signal, random_signal
from .systems import StateVector, format_state, make_system, parse_state

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FALSIFIED = 3

_INTEGRATOR_KEYS = {
    "rel_tol": float,
    "abs_tol": float,
    "max_step": float,
    "hard_state_cap": float,
    "min_step": float,
    "max_steps": int,
}
_BUDGET_TUPLES = {"radii": float, "eps_grid": float, "input_values": float, "truncations": int, "modes": int}
_BUDGET_SCALARS = {
    "horizon": float,
    "n_random_inputs": int,
    "max_switches": int,
    "n_random_states": int,
    "local_radius": float,
}
_STABILITY = ("ULS", "UGS", "UGB", "ZeroULS", "ZeroUGS")


class ConfigError(ValueError):
    pass


# config ----------------------------------------------------------------------


def _read_config(path: str) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return cp


def _literal(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def _section(cp, name) -> dict[str, str]:
    return dict(cp[name]) if cp.has_section(name) else {}


def _unknown(name: str, got: dict, allowed) -> None:
    extra = sorted(set(got) - set(allowed))
    if extra:
        raise ConfigError(f"[{name}] unknown key(s): {', '.join(extra)}")


def _system(cp):
    sec = _section(cp, "system")
    if "id" not in sec:
        raise ConfigError("[system] needs id")
    sid = sec.pop("id")
    n = int(sec.pop("n_modes", "8"))
    if n < 1:
        raise ConfigError("[system] n_modes must be positive")
    params = {k: _literal(v) for k, v in sec.items()}
    if params and not sid.startswith("user:"):
        raise ConfigError(f"[system] catalog system {sid} takes no parameters, got {', '.join(sorted(params))}")
    return make_system(sid, n, params)


def _integrator(cp) -> IntegratorConfig:
    sec = _section(cp, "integrator")
    _unknown("integrator", sec, list(_INTEGRATOR_KEYS) + ["event_threshold", "use_oracle"])
    kw = {k: conv(sec[k]) for k, conv in _INTEGRATOR_KEYS.items() if k in sec}
    if "event_threshold" in sec:
        thr = sec["event_threshold"].strip()
        kw["event_threshold"] = None if thr in ("", "none") else thr if thr == "mode_index" else float(thr)
    if "use_oracle" in sec:
        kw["use_oracle"] = cp.getboolean("integrator", "use_oracle")
    return IntegratorConfig(**kw)


def _run(cp, out_override=None) -> dict:
    sec = _section(cp, "run")
    _unknown("run", sec, ["T", "output", "seed", "workers", "n_output"])
    return {
        "T": float(sec["T"]) if "T" in sec else None,
        "output": out_override or sec.get("output", "isslab_out"),
        "seed": int(sec.get("seed", "0")),
        "workers": int(sec.get("workers", "1")),
        "n_output": int(sec.get("n_output", "0")),
    }


def _tuple(text: str, conv):
    v = _literal(text)
    if isinstance(v, (int, float)):
        v = (v,)
    return tuple(conv(x) for x in v)


def _budget(cp, run: dict, cfg: IntegratorConfig, extra_keys=()) -> EstimationBudget:
    sec = _section(cp, "estimate")
    _unknown("estimate", sec, list(_BUDGET_TUPLES) + list(_BUDGET_SCALARS) + ["directions", "property"] + list(extra_keys))
    kw = {k: _tuple(sec[k], conv) for k, conv in _BUDGET_TUPLES.items() if k in sec}
    kw.update({k: conv(sec[k]) for k, conv in _BUDGET_SCALARS.items() if k in sec})
    if "directions" in sec:
        d = _literal(sec["directions"])
        kw["directions"] = tuple(tuple(float(c) for c in (x if isinstance(x, (list, tuple)) else (x,))) for x in d)
    return EstimationBudget(seed=run["seed"], workers=run["workers"], integrator=cfg, **kw)


# output ----------------------------------------------------------------------


def _manifest(path: str, command: str, cp: configparser.ConfigParser, results: list[tuple[str, str]]) -> None:
    lines = [
        f"command = {command}",
        f"isslab = {__version__}",
        f"numpy = {np.__version__}",
        f"python = {platform.python_version()}",
    ]
    for name in cp.sections():
        for k, v in cp[name].items():
            lines.append(f"config.{name}.{k} = {v}")
    lines.extend(f"result.{k} = {v}" for k, v in results)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _finish(report: EstimationReport, outdir: str, command: str, cp) -> int:
    paths = report.write(outdir)
    _manifest(
        os.path.join(outdir, "manifest.txt"),
        command,
        cp,
        [("verdict", report.verdict), ("value", repr(report.value))],
    )
    print(report.text(), end="")
    print("wrote " + ", ".join(paths))
    return EXIT_FALSIFIED if report.falsified else EXIT_OK


# subcommands -----------------------------------------------------------------


def cmd_simulate(args) -> int:
    cp = _read_config(args.config)
    sys_ = _system(cp)
    cfg = _integrator(cp)
    run = _run(cp, args.out)
    if run["T"] is None or not run["T"] >= 0:
        raise ConfigError("[run] needs T >= 0")
    x0 = parse_state(_section(cp, "initial").get("state", "zero"), sys_)
    u = parse_signal(_section(cp, "input").get("signal", "const(0.0)"))
    t_eval = np.linspace(0.0, run["T"], run["n_output"]) if run["n_output"] > 1 else ()
    traj = trajectory(sys_, run["T"], x0, u, cfg, t_eval)
    os.makedirs(run["output"], exist_ok=True)
    write_trajectory_csv(traj, os.path.join(run["output"], "trajectory.csv"))
    write_events_csv(traj, os.path.join(run["output"], "events.csv"))
    final = traj.state(-1)
    results = [
        ("final_time", repr(float(traj.times[-1]))),
        ("final_norm", repr(float(final.norm()))),
        ("final_state", format_state(final)),
        ("events", str(len(traj.events))),
    ]
    _manifest(os.path.join(run["output"], "manifest.txt"), "simulate", cp, results)
    for k, v in results:
        print(f"{k} = {v}")
    print(f"wrote {run['output']}/trajectory.csv, events.csv, manifest.txt")
    return EXIT_OK


_ESTIMATE_KEYS = ("C", "tau", "gamma", "eps", "h", "R", "n_pairs", "n_times", "objective", "rounds")


def _search_report(sys_, objective, budget, rounds) -> EstimationReport:
    w = adversarial_search(sys_, objective, budget, rounds)
    notes = [f"objective {objective}"]
    if w is None:
        return EstimationReport(f"search:{objective}", NO_VIOLATION, None, None, {}, budget, notes, sys_.catalog_id)
    return EstimationReport(f"search:{objective}", FALSIFIED, w, w.measured, {}, budget, notes, sys_.catalog_id)


def cmd_estimate(args) -> int:
    cp = _read_config(args.config)
    sys_ = _system(cp)
    cfg = _integrator(cp)
    run = _run(cp, args.out)
    budget = _budget(cp, run, cfg, _ESTIMATE_KEYS)
    sec = _section(cp, "estimate")
    prop = args.property or sec.get("property")
    if not prop:
        raise ConfigError("[estimate] needs property")
    gamma = parse_gain(sec.get("gamma", "zero"))
    if prop == "BRS":
        rep = check_brs(sys_, float(sec.get("C", "1.0")), float(sec.get("tau", "1.0")), budget)
    elif prop in _STABILITY:
        rep = check_stability(sys_, prop, budget)
    elif prop in ("ULIM", "sLIM", "LIM"):
        rep = check_limit(sys_, prop, gamma, budget)
    elif prop in ("UAG", "sAG", "AG"):
        rep = check_ag(sys_, prop, gamma, budget)
    elif prop in ("0-UGATT", "ZeroUGATT"):
        rep = check_zero_ugatt(sys_, budget)
    elif prop == "ISS":
        rep = fit_iss_bound(sys_, budget)
    elif prop == "CEP":
        rep = check_cep(sys_, float(sec.get("eps", "0.1")), float(sec.get("h", "1.0")), budget)
    elif prop == "Lipschitz":
        rep = estimate_flow_lipschitz(
            sys_, float(sec.get("R", "1.0")), float(sec.get("tau", "1.0")), budget,
            int(sec.get("n_pairs", "16")), int(sec.get("n_times", "21")),
        )
    elif prop == "search":
        objective = sec.get("objective", "")
        if objective not in OBJECTIVES:
            raise ConfigError(f"[estimate] objective must be one of {', '.join(OBJECTIVES)}")
        rep = _search_report(sys_, objective, budget, int(sec.get("rounds", "3")))
    else:
        raise ConfigError(f"unknown property {prop!r}")
    return _finish(rep, run["output"], f"estimate {prop}", cp)


_LYAPUNOV_KEYS = ("V", "psi1", "psi2", "alpha", "sigma", "R", "input_cap", "checks", "n_integral", "integral_T")


def _candidate(sec) -> CandidateLF:
    try:
        return CandidateLF(
            parse_lyapunov(sec.get("V", "norm_sq")),
            parse_gain(sec["psi2"]),
            parse_gain(sec["alpha"]),
            parse_gain(sec.get("sigma", "zero")),
            parse_gain(sec["psi1"]) if "psi1" in sec else None,
        )
    except KeyError as exc:
        raise ConfigError(f"[lyapunov] needs {exc.args[0]}") from None


def _write_csv(path, cols, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])


def _integral_samples(sys_, cand, n, T, seed, cfg):
    rng = np.random.default_rng(seed)
    rows, ok = [], True
    for _ in range(n):
        r = float(rng.uniform(0.0, 2.0))
        modes = rng.standard_normal((sys_.n_modes, sys_.mode_dim))
        modes *= r / max(float(StateVector(modes, sys_.norm_tag).norm()), 1e-300)
        x = StateVector(modes, sys_.norm_tag)
        u = random_signal(rng, float(rng.uniform(0.0, 2.0)), 2, T, sys_.input_dim)
        t = float(rng.uniform(0.0, T))
        chk = verify_integral_inequality(cand, sys_, x, u, t, cfg=cfg)
        ok &= chk.holds
        rows.append((format_state(x), u.text(), t, chk.integral, chk.bound, chk.holds))
    return ok, rows


def cmd_lyapunov(args) -> int:
    cp = _read_config(args.config)
    sys_ = _system(cp)
    cfg = _integrator(cp)
    run = _run(cp, args.out)
    budget = _budget(cp, run, cfg)
    sec = _section(cp, "lyapunov")
    _unknown("lyapunov", sec, _LYAPUNOV_KEYS)
    cand = _candidate(sec)
    checks = [c.strip() for c in sec.get("checks", "dissipation,tau").split(",") if c.strip()]
    bad = sorted(set(checks) - {"dissipation", "tau", "integral", "ulim"})
    if bad:
        raise ConfigError(f"[lyapunov] unknown check(s): {', '.join(bad)}")
    R = float(sec.get("R", repr(max(budget.radii))))
    cap = float(sec.get("input_cap", repr(max(budget.input_values))))
    out = run["output"]
    os.makedirs(out, exist_ok=True)
    falsified = False
    lines = [f"system: {sys_.catalog_id}", f"V: {cand.V.label}", f"psi2: {cand.psi2}", f"alpha: {cand.alpha}", f"sigma: {cand.sigma}"]
    results = []

    if "dissipation" in checks:
        rep = check_dissipation(cand, sys_, R, cap, budget)
        rep.write(os.path.join(out, "dissipation"))
        falsified |= rep.falsified
        lines.append(f"dissipation on |x| <= {R!r}, |u| <= {cap!r}: {rep.verdict} (largest margin {rep.value!r})")
        results.append(("dissipation", rep.verdict))
    if "tau" in checks:
        gamma, tau = nclf_ulim_bound(cand)
        rows = [(r, e, tau(r, e), gamma(r)) for r in budget.radii for e in budget.eps_grid]
        _write_csv(os.path.join(out, "tau.csv"), ("r", "eps", "tau", "gamma"), rows)
        lines.append(f"attainment gain: {gamma}")
        lines.extend(f"tau({r!r}, {e!r}) = {t!r}" for r, e, t, _ in rows)
    if "integral" in checks:
        ok, rows = _integral_samples(
            sys_, cand, int(sec.get("n_integral", "20")), float(sec.get("integral_T", "5.0")), run["seed"], cfg
        )
        _write_csv(os.path.join(out, "integral.csv"), ("state", "input", "t", "integral", "bound", "holds"), rows)
        falsified |= not ok
        lines.append(f"integral inequality on {len(rows)} samples: {'holds' if ok else 'fails'}")
        results.append(("integral", "holds" if ok else "fails"))
    if "ulim" in checks:
        try:
            rep = verify_ulim_from_nclf(cand, sys_, budget)
        except PreconditionError as exc:
            exc.report.write(os.path.join(out, "dissipation"))
            lines.append(f"ulim: not run, {exc}")
            results.append(("ulim", "precondition failed"))
            falsified = True
        else:
            rep.write(os.path.join(out, "ulim"))
            falsified |= rep.falsified
            lines.append(f"ulim: {rep.verdict}, largest attainment time {rep.value!r}")
            results.append(("ulim", rep.verdict))
    verdict = FALSIFIED if falsified else NO_VIOLATION
    lines.append(f"verdict: {verdict}")
    with open(os.path.join(out, "lyapunov_report.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    _manifest(os.path.join(out, "manifest.txt"), "lyapunov", cp, results + [("verdict", verdict)])
    print("\n".join(lines))
    return EXIT_FALSIFIED if falsified else EXIT_OK


def cmd_lattice(args) -> int:
    kb = load_rules(open(args.rules).read()) if args.rules else seed_kb()
    facts = parse_atoms(args.facts) if args.facts else frozenset()
    context = [c.strip() for c in args.context.split(",") if c.strip()]
    if args.target:
        print(query(kb, facts, args.target.strip(), context).text())
        return EXIT_OK
    for atom, d in sorted(closure(kb, facts, context).items(), key=lambda kv: (kv[1].depth, kv[0])):
        how = "given" if d.given else " <- ".join(r.location for r in d.trace)
        print(f"{atom}  [{how}]")
    return EXIT_OK


def cmd_replay(args) -> int:
    with open(args.witness) as fh:
        w = Witness.from_text(fh.read())
    value, ok = w.replay()
    print(f"kind = {w.kind}")
    print(f"recorded = {w.measured!r}")
    print(f"replayed = {value!r}")
    print(f"bound = {w.bound!r}")
    print(f"tolerance = {w.tolerance()!r}")
    print("violation reproduced" if ok else "violation NOT reproduced")
    return EXIT_FALSIFIED if ok else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="isslab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"isslab {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="integrate one trajectory and write CSV output")
    s.add_argument("config")
    s.add_argument("-o", "--out", help="output directory (overrides [run] output)")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("estimate", help="estimate or falsify a stability property")
    s.add_argument("config")
    s.add_argument("-o", "--out")
    s.add_argument("-p", "--property", help="overrides [estimate] property")
    s.set_defaults(func=cmd_estimate)

    s = sub.add_parser("lyapunov", help="check a Lyapunov candidate")
    s.add_argument("config")
    s.add_argument("-o", "--out")
    s.set_defaults(func=cmd_lyapunov)

    s = sub.add_parser("lattice", help="query the implication lattice")
    s.add_argument("--facts", default="", help="comma-separated atoms, e.g. ULIM,UGS")
    s.add_argument("--target", help="atom to decide; without it the closure is printed")
    s.add_argument("--context", default="General", help="comma-separated context flags")
    s.add_argument("--rules", help="rule file replacing the built-in one")
    s.set_defaults(func=cmd_lattice)

    s = sub.add_parser("replay", help="re-run a witness file")
    s.add_argument("witness")
    s.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, IntegrationError, configparser.Error) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
