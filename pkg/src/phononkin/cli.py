"""Command line front end.

Exit codes: 0 success, 1 invalid input, 2 runtime failure.  Errors are
reported as one ``key=value`` line on stderr.  Every run writes its resolved
parameters to ``<out>/config.json``; passing that file back through
``--config`` reproduces the run.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, PhononKinError
from .reporting import SCHEMA_VERSION, canonical_json, ensure_dir, header_block, write_csv, write_text


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _common_model(p):
    p.add_argument("--model", default="nn-nnn-311", help="nn, nn-nnn-311, flat or stencil:{json}")
    p.add_argument("--omega0", type=float, default=1.0)


def _common_collision(p, N=8):
    _common_model(p)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--N", type=int, default=N, help="momentum grid points per axis")
    p.add_argument("--eta", type=float, default=None, help="mollifier width (default: resolution floor)")
    p.add_argument("--mollifier", choices=("gaussian", "lorentzian"), default="gaussian")
    p.add_argument("--w0", default="1/omega", help="initial W(k) expression")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="phononkin", description="Phonon kinetics: lattice dynamics, Boltzmann solver, diagrams.")
    ap.add_argument("--version", action="version", version=f"phononkin {__version__}")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", default=None, help="JSON file of option values")
        p.add_argument("--out", default="phononkin-out", help="output directory")
        p.add_argument("--threads", type=int, default=1, help="worker cap")
        return p

    p = add("simulate", "evolve a sampled lattice field and write snapshots")
    _common_model(p)
    p.add_argument("--L", type=int, default=16)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--quartic", action="store_true", help="add the stabilizing quartic term")
    p.add_argument("--w0", default="1/omega")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--T", type=float, default=1.0, help="microscopic duration")
    p.add_argument("--h", type=float, default=None)
    p.add_argument("--snapshot-every", type=int, default=0, help="steps between snapshots (0: first and last)")
    p.add_argument("--method", choices=("direct", "spectral"), default="direct")

    p = add("wigner", "estimate the Wigner function of an ensemble")
    _common_model(p)
    p.add_argument("--L", type=int, default=16)
    p.add_argument("--w0", default="1/omega")
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--snapshots", nargs="*", default=None, help="snapshot files to use instead of fresh samples")
    p.add_argument("--eps", type=float, default=None, help="position-resolved estimate at y = eps x")

    p = add("dispersion-check", "energy-shell gap and collision-measure diagnostics")
    _common_model(p)
    p.add_argument("--levels", default="8,12,16")
    p.add_argument("--measure-N", type=int, default=0, help="also run collision_measure and c0_bound on this grid")

    p = add("boltzmann", "solve the Boltzmann equation")
    _common_collision(p)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--dt", type=float, default=0.1)
    p.add_argument("--adaptive", action="store_true")
    p.add_argument("--save-every", type=int, default=1)
    p.add_argument("--inhomogeneous", action="store_true")
    p.add_argument("--Y", type=int, default=4, help="spatial cells per axis")
    p.add_argument("--dr", type=float, default=1.0)
    p.add_argument("--envelope", default="1", help="spatial profile in y1, y2, y3")

    p = add("series", "Taylor terms of the Boltzmann flow")
    _common_collision(p, N=6)
    p.add_argument("--t", type=float, default=0.1)
    p.add_argument("--order", type=int, default=4)

    p = add("diagrams", "enumerate, classify and evaluate Feynman diagrams")
    p.add_argument("--order", type=int, default=1)
    p.add_argument("--census", action="store_true")
    p.add_argument("--classify", default=None, help="encoded diagram")
    p.add_argument("--evaluate", action="store_true", help="evaluate W_n^eps on a grid")
    _common_model(p)
    p.add_argument("--L", type=int, default=4)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--w0", default="1/omega")
    p.add_argument("--eps", type=float, default=0.1)
    p.add_argument("--t", type=float, default=0.05)
    p.add_argument("--q", default=None, help="comma-separated flat grid indices")
    p.add_argument("--include-degenerate", action="store_true")

    p = add("kinetic-compare", "microscopic ensembles against Boltzmann or diagrams against the series")
    p.add_argument("--mode", choices=("kinetic", "diagrams"), default="kinetic")
    p.add_argument("--manifest", default=None, help="re-run a stored report (directory or plan.json)")
    _common_model(p)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--w0", default="(1 + 0.3*c1)/omega")
    p.add_argument("--eps", default="0.2,0.1,0.05")
    p.add_argument("--L", type=int, default=None)
    p.add_argument("--samples", type=int, default=256)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--h", type=float, default=None)
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--dt", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-quartic", action="store_true")
    p.add_argument("--no-control", action="store_true")
    p.add_argument("--order", type=int, default=1)
    return ap


_META = {"command", "config", "out"}


def _load_config(path, parser: argparse.ArgumentParser) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    schema = data.pop("schema", SCHEMA_VERSION)
    if schema != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema {schema}")
    data.pop("command", None)
    data.pop("header", None)
    known = {a.dest for a in parser._actions}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return data


def parse(argv):
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.command is None:
        raise ConfigError("no subcommand given")
    if args.config:
        sub = ap._subparsers._group_actions[0].choices[args.command]
        sub.set_defaults(**_load_config(args.config, sub))
        args = ap.parse_args(argv)
    if args.threads < 1:
        raise ConfigError("--threads must be positive")
    return args


def resolved_config(args) -> dict:
    d = {k: v for k, v in vars(args).items() if k not in _META and k != "threads"}
    d["command"] = args.command
    d["schema"] = SCHEMA_VERSION
    return d


# -- subcommands ---------------------------------------------------------------------


def _model(args):
    from .spectral import model_from_name

    return model_from_name(args.model, args.omega0)


def _collision_cfg(args, model):
    from .collision import CollisionConfig, MollifierSpec, resolution_floor

    eta = args.eta if args.eta is not None else resolution_floor(model, args.N)
    return CollisionConfig(model, args.lam, args.N, MollifierSpec(args.mollifier, eta))


def cmd_simulate(args, out, meta):
    from .ensemble import GaussianFieldSpec, eval_k_expression, rng_stream, sample
    from .lattice import PotentialSpec, default_timestep, energy, evolve, shadow_energy, write_snapshot
    from .spectral import afield_to_state

    model = _model(args)
    model.stencil.check_stability(args.L)
    pot = PotentialSpec(args.lam, args.eps, args.omega0, args.quartic)
    h = args.h or default_timestep(model.stencil, args.omega0, args.L)
    spec = GaussianFieldSpec(eval_k_expression(args.w0, args.L, model), args.seed)
    state = afield_to_state(sample(spec, rng_stream(args.seed, 0, "ensemble")), model)
    nsteps = max(1, math.ceil(args.T / h - 1e-12))
    stride = args.snapshot_every or nsteps
    hh = args.T / nsteps
    rows, files = [], []

    def observe(s, step):
        e = float(energy(s, model.stencil, pot, args.method))
        sh = float(shadow_energy(s, hh, model.stencil, pot, args.method))
        rows.append((s.t, e, sh))
        name = f"snapshot_{step:08d}.bin"
        write_snapshot(out / name, s, pot)
        files.append({"file": name, "step": step, "t": s.t})

    evolve(state, args.T, h, model.stencil, pot, observe, stride, method=args.method)
    write_csv(out / "energy.csv", ["t", "H", "shadow"], rows, meta)
    write_text(out / "snapshots.json", canonical_json({"header": meta, "format": "lattice-snapshot-v1",
                                                       "snapshots": files}))
    drift = abs(rows[-1][1] - rows[0][1]) / abs(rows[0][1])
    print(f"steps={nsteps} h={hh!r} snapshots={len(files)} energy_rel_change={drift:.3e}")


def cmd_wigner(args, out, meta):
    from .ensemble import (GaussianFieldSpec, eval_k_expression, sample_set, table_totals, wigner_homogeneous,
                           wigner_inhomogeneous, wigner_rows)
    from .lattice import read_snapshot
    from .spectral import state_to_afield

    model = _model(args)
    if args.snapshots:
        fields = [state_to_afield(read_snapshot(f)[0], model) for f in args.snapshots]
        samples = np.stack(fields)
    else:
        spec = GaussianFieldSpec(eval_k_expression(args.w0, args.L, model), args.seed)
        samples = sample_set(spec, args.samples)
    if args.eps is None:
        table = wigner_homogeneous(samples)
        write_csv(out / "wigner.csv", ["k1", "k2", "k3", "W", "stderr"], wigner_rows(table), meta)
        tot = table_totals(table, model)
        print(f"samples={table.sample_count} phonon_number={tot['phonon_number']!r} energy={tot['energy']!r}")
        return
    table = wigner_inhomogeneous(samples, args.eps)
    L = table.L
    rows = []
    for idx, v in np.ndenumerate(table.values):
        x, k = idx[:3], idx[3:]
        rows.append(tuple(args.eps * c for c in x) + tuple(c / L for c in k) + (v,))
    write_csv(out / "wigner_yk.csv", ["y1", "y2", "y3", "k1", "k2", "k3", "W"], rows, meta)
    print(f"samples={table.sample_count} phonon_number={table.phonon_number()!r} imag_residual={table.imag_residual:.3e}")


def cmd_dispersion_check(args, out, meta):
    from .collision import CollisionConfig, MollifierSpec, c0_bound, collision_measure, no_collision_check, resolution_floor

    model = _model(args)
    try:
        levels = tuple(int(v) for v in args.levels.split(","))
    except ValueError as exc:
        raise ConfigError(f"bad --levels {args.levels!r}") from exc
    rep = no_collision_check(model, levels)
    lines = [f"model: {model.name}", f"omega0: {model.omega0!r}"] + list(rep.lines())
    if args.measure_N:
        N = args.measure_N
        cfg = CollisionConfig(model, 1.0, N, MollifierSpec("gaussian", resolution_floor(model, N)))
        m = collision_measure(cfg)
        c = c0_bound(cfg)
        lines += [f"collision_measure_etas: {m.etas}", f"collision_measure_values: {m.values}",
                  f"collision_measure: {m.extrapolated!r} +- {m.error!r}",
                  f"collision_measure_positive: {m.positive}",
                  f"c0_etas: {c.etas}", f"c0_sups: {c.sups}", f"c0_variation: {c.variation!r}",
                  f"c0_stable: {c.stable}"]
    text = "\n".join(lines) + "\n"
    write_text(out / "dispersion.txt", text, meta)
    sys.stdout.write(text)


def cmd_boltzmann(args, out, meta):
    from .boltzmann import solve_homogeneous, solve_inhomogeneous
    from .ensemble import eval_k_expression, eval_y_expression

    model = _model(args)
    cfg = _collision_cfg(args, model)
    W0 = eval_k_expression(args.w0, args.N, model)
    if not args.inhomogeneous:
        traj = solve_homogeneous(W0, args.t, args.dt, cfg, adaptive=args.adaptive, save_every=args.save_every)
        write_csv(out / "trajectory.csv", ["t", "k1", "k2", "k3", "W"], traj.rows(), meta)
        write_csv(out / "energy.csv", ["t", "energy"], zip(traj.times, traj.energy), meta)
        print(f"steps={traj.steps} rejected={traj.rejected} energy_drift={traj.energy_drift:.3e}")
        return
    env = eval_y_expression(args.envelope, args.Y)
    Wi = env[..., None, None, None] * W0
    traj = solve_inhomogeneous(Wi, args.t, args.dt, cfg, args.dr, args.save_every)
    Y = args.Y
    rows = []
    for t, v in zip(traj.times, traj.values):
        dens = v.sum(axis=(3, 4, 5)) / args.N**3
        for idx, d in np.ndenumerate(dens):
            rows.append((t,) + tuple(c / Y for c in idx) + (d,))
    write_csv(out / "density.csv", ["t", "y1", "y2", "y3", "density"], rows, meta)
    write_csv(out / "energy.csv", ["t", "energy"], zip(traj.times, traj.energy), meta)
    print(f"steps={traj.steps} energy_drift={traj.energy_drift:.3e}")


def cmd_series(args, out, meta):
    from .boltzmann import perturbative_series
    from .ensemble import eval_k_expression

    model = _model(args)
    cfg = _collision_cfg(args, model)
    W0 = eval_k_expression(args.w0, args.N, model)
    ser = perturbative_series(W0, args.t, args.order, cfg)
    terms = ser.terms
    N = args.N
    rows = []
    for idx in np.ndindex(N, N, N):
        rows.append(tuple(c / N for c in idx) + tuple(terms[(slice(None),) + idx]))
    write_csv(out / "series.csv", ["k1", "k2", "k3"] + [f"W_{n}" for n in range(args.order + 1)], rows, meta)
    sups = [float(np.max(np.abs(x))) for x in terms]
    write_csv(out / "term_norms.csv", ["n", "sup_norm"], enumerate(sups), meta)
    print("sup_norms=" + ",".join(f"{s:.6e}" for s in sups))


def cmd_diagrams(args, out, meta):
    from .diagrams import (FeynmanDiagram, assign_momenta, census, census_summary, classify, example_diagram,
                           wigner_correction)
    from .ensemble import eval_k_expression

    did = False
    if args.census:
        recs = census(args.order)
        summ = census_summary(recs)
        body = "".join(r.line() + "\n" for r in recs)
        write_text(out / f"census_order{args.order}.txt", body,
                   {**meta, **{k: str(v) for k, v in summ.items()}})
        print(" ".join(f"{k}={v}" for k, v in summ.items()))
        if args.order == 2:
            ex = example_diagram()
            print("example: " + next(r.line() for r in recs if r.diagram == ex))
        did = True
    if args.classify:
        try:
            d = FeynmanDiagram.decode(args.classify)
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"cannot decode diagram: {exc}") from exc
        asg = assign_momenta(d)
        c = classify(d, asg)
        print(f"{d.encode()} class={c.label} reason={(c.reason or '-').replace(' ', '_')} degenerate={int(asg.degenerate)}")
        did = True
    if args.evaluate:
        model = _model(args)
        W = eval_k_expression(args.w0, args.L, model)
        qs = None if args.q is None else [int(v) for v in args.q.split(",")]
        res = wigner_correction(args.order, args.eps, args.t, W, model, args.lam, qs=qs,
                                include_degenerate=args.include_degenerate)
        L = args.L
        rows = []
        for q, v in zip(res.qs, res.values):
            n = np.unravel_index(int(q), (L, L, L))
            rows.append((int(q),) + tuple(c / L for c in n) + (v.real, v.imag))
        write_csv(out / f"correction_order{args.order}.csv", ["q", "k1", "k2", "k3", "re", "im"], rows, meta)
        print(f"diagrams={res.diagrams} excluded_degenerate={res.excluded_degenerate} imag_ratio={res.imag_ratio:.2e}")
        did = True
    if not did:
        raise ConfigError("diagrams needs --census, --classify or --evaluate")


def cmd_kinetic_compare(args, out, meta):
    from .experiments import (DiagramPlan, ExperimentPlan, load_manifest, run_diagram_vs_series,
                              run_kinetic_comparison)

    if args.manifest:
        plan = load_manifest(args.manifest)
        if isinstance(plan, ExperimentPlan):
            import dataclasses

            plan = dataclasses.replace(plan, threads=args.threads)
    else:
        try:
            eps = tuple(float(v) for v in args.eps.split(","))
        except ValueError as exc:
            raise ConfigError(f"bad --eps {args.eps!r}") from exc
        common = dict(model=args.model, omega0=args.omega0, lam=args.lam, w0=args.w0, eps=eps, eta=args.eta)
        if args.mode == "kinetic":
            plan = ExperimentPlan(**common, L=args.L or 16, samples=args.samples, t=args.t or 0.1, h=args.h,
                                  dt=args.dt, seed=args.seed, quartic_stabilizer=not args.no_quartic,
                                  control=not args.no_control, threads=args.threads)
        else:
            plan = DiagramPlan(**common, L=args.L or 12, t=args.t or 0.02, n=args.order)
    if isinstance(plan, ExperimentPlan):
        rep = run_kinetic_comparison(plan, out)
    else:
        rep = run_diagram_vs_series(plan, out)
    s = rep.summary()
    print(" ".join(f"{k}={s[k]}" for k in s if k.startswith("verdict")))


COMMANDS = {
    "simulate": cmd_simulate,
    "wigner": cmd_wigner,
    "dispersion-check": cmd_dispersion_check,
    "boltzmann": cmd_boltzmann,
    "series": cmd_series,
    "diagrams": cmd_diagrams,
    "kinetic-compare": cmd_kinetic_compare,
}


def _error_record(exc, code) -> str:
    msg = str(exc).replace("\n", " ").replace('"', "'")
    return f'phononkin: error type={type(exc).__name__} exit={code} message="{msg}"'


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        build_parser().print_usage(sys.stderr)
        return 1
    try:
        args = parse(argv)
        cfg = resolved_config(args)
        out = ensure_dir(Path(args.out))
        meta = header_block(cfg, cfg.get("seed"))
        write_text(out / "config.json", canonical_json({**cfg, "header": meta}))
        COMMANDS[args.command](args, out, meta)
    except SystemExit as exc:
        return int(exc.code or 0)
    except PhononKinError as exc:
        print(_error_record(exc, exc.exit_code), file=sys.stderr)
        return exc.exit_code
    except (ValueError, OSError) as exc:
        print(_error_record(exc, 1), file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        print(_error_record(exc, 2), file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
