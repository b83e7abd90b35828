"""Command-line entry point: ``sinrcast <subcommand> [flags]``.

Exit codes: 0 success, 1 a check or run failed, 2 usage error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import facts
from .coloring import make_profile, verify_lemma1, verify_lemma1_strict, verify_lemma2
from .errors import CalibrationFailed, InvalidInputError, SinrCastError, TopologyParseError
from .geometry import FAMILIES, generate_topology, read_topology, write_topology, format_topology
from .harness import PROTOCOLS, ExperimentConfig, calibrate_profile, fit_scaling, run_trial, write_overrides
from .sinr import SinrParams

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


def _add_physics(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--noise", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--gamma", type=float)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config file; flags override its values")
    p.add_argument("--seed", type=int)
    p.add_argument("--protocol", choices=PROTOCOLS)
    p.add_argument("--n", type=int)
    p.add_argument("--family", choices=FAMILIES + ("line-diameter",))
    p.add_argument("--topology", help="topology file (overrides --family)")
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="topology parameter such as diameter=8 or side=2")
    _add_physics(p)
    p.add_argument("--profile", choices=("theory", "tuned", "file"))
    p.add_argument("--profile-file")
    p.add_argument("--budget-mult", type=float)
    p.add_argument("--out-dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sinrcast", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a topology file")
    g.add_argument("--family", choices=FAMILIES, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--epsilon", type=float, default=0.5)
    g.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                   help="family parameter such as side=2 or spacing=0.05")
    g.add_argument("--out-dir")

    r = sub.add_parser("run", help="run one trial")
    _add_run_flags(r)

    v = sub.add_parser("verify", help="check a stored coloring against both coloring properties")
    v.add_argument("--topology", required=True)
    v.add_argument("--coloring", required=True, help="CSV lines 'station, color'")
    v.add_argument("--profile", choices=("theory", "tuned", "file"), default="tuned")
    v.add_argument("--profile-file")
    v.add_argument("--strict", action="store_true", help="also run the radius-2 coverage variant")
    _add_physics(v)

    f = sub.add_parser("facts", help="run the probability and reception fact oracles")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--vectors", type=int, default=100_000)
    f.add_argument("--trials", type=int, default=10_000)

    c = sub.add_parser("calibrate", help="grid-search a tuned profile")
    c.add_argument("--family", action="append", choices=FAMILIES)
    c.add_argument("--n", type=int, action="append")
    c.add_argument("--seeds", type=int, default=5)
    c.add_argument("--out-dir")
    _add_physics(c)

    s = sub.add_parser("sweep", help="run a protocol over seeds and diameters and fit its scaling")
    _add_run_flags(s)
    s.add_argument("--seeds", type=int, default=10)
    s.add_argument("--diameters", default="4,8,16,32")
    s.add_argument("--per-hop", type=int, default=8, help="stations per unit of diameter")
    s.add_argument("--parallel", type=int, default=1)
    return parser


def _physics(args, base: SinrParams | None = None) -> SinrParams:
    base = base or SinrParams()
    pick = lambda name: getattr(args, name, None) if getattr(args, name, None) is not None else getattr(base, name)  # noqa: E731
    return SinrParams(pick("alpha"), pick("beta"), pick("noise"), None, pick("epsilon"))


def _parse_params(items) -> dict:
    params = {}
    for item in items:
        key, _, val = item.partition("=")
        try:
            params[key.strip()] = float(val)
        except ValueError:
            raise InvalidInputError(f"--param expects KEY=VALUE, got {item!r}") from None
    return params


def _config_from_args(args) -> ExperimentConfig:
    cfg = ExperimentConfig.read(args.config) if args.config else ExperimentConfig()
    changes = {}
    for flag, fieldname in (("protocol", "protocol"), ("n", "n"), ("family", "family"),
                            ("alpha", "alpha"), ("beta", "beta"), ("noise", "noise"),
                            ("epsilon", "epsilon"), ("gamma", "gamma"), ("profile", "profile"),
                            ("profile_file", "profile_file"), ("budget_mult", "budget_mult"),
                            ("out_dir", "out_dir"), ("topology", "topology_file")):
        val = getattr(args, flag, None)
        if val is not None:
            changes[fieldname] = val
    if getattr(args, "param", None):
        changes["topology_params"] = {**cfg.topology_params, **_parse_params(args.param)}
    if getattr(args, "seed", None) is not None:
        changes["seeds"] = [args.seed]
    return dataclasses.replace(cfg, **changes)


def cmd_gen(args) -> int:
    params = {"epsilon": args.epsilon, **_parse_params(args.param)}
    topo = generate_topology(args.family, args.n, params, seed=args.seed)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{args.family}-n{args.n}-s{args.seed}.topo"
        write_topology(topo, path)
        print(path)
    else:
        sys.stdout.write(format_topology(topo))
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _config_from_args(args)
    seed = cfg.seeds[0]
    summary, trace = run_trial(cfg, seed)
    text = summary.to_text()
    sys.stdout.write(text)
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"summary-{seed}.txt").write_text("# config\n" + "".join(
            f"# {line}\n" for line in cfg.dumps().splitlines()) + text)
        if trace is not None:
            trace.to_csv(out / f"trace-{seed}.csv")
    return EXIT_OK if summary.success else EXIT_FAIL


def _read_coloring(path, n: int) -> np.ndarray:
    colors = np.full(n, np.nan)
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            s, c = (x.strip() for x in line.split(","))
            colors[int(s)] = float(c)
        except (ValueError, IndexError):
            raise InvalidInputError(f"{path}:{lineno}: expected 'station, color'") from None
    return colors


def cmd_verify(args) -> int:
    topo = read_topology(args.topology)
    params = _physics(args, SinrParams(epsilon=topo.epsilon))
    gamma = args.gamma if args.gamma is not None else topo.space.gamma
    prof = make_profile(args.profile, params, gamma, topo.n, args.profile_file)
    colors = _read_coloring(args.coloring, topo.n)
    l1 = verify_lemma1(colors, topo, prof.lemma1_threshold)
    l2 = verify_lemma2(colors, topo, params.epsilon, prof.lemma2_threshold)
    print(f"unit-ball color mass: {'pass' if l1.passed else 'FAIL'} worst={l1.worst_sum:.6g} "
          f"color={l1.worst_color} center={l1.worst_center} threshold={prof.lemma1_threshold:.6g}")
    print(f"local color mass: {'pass' if l2.passed else 'FAIL'} worst={l2.worst_mass:.6g} "
          f"station={l2.worst_station} threshold={prof.lemma2_threshold:.6g}")
    ok = l1.passed and l2.passed
    if args.strict:
        l1s = verify_lemma1_strict(colors, topo, prof.lemma1_threshold)
        print(f"radius-2 coverage: {'pass' if l1s.passed else 'FAIL'} worst={l1s.worst_sum:.6g}")
        ok &= l1s.passed
    return EXIT_OK if ok else EXIT_FAIL


def cmd_facts(args) -> int:
    rng = np.random.default_rng(args.seed)
    ok = True
    vec = facts.random_probability_vectors(rng, args.vectors)
    _, good = facts.fact_sum_batch(vec)
    print(f"exactly-one bounds: {args.vectors} vectors, {int((~good).sum())} violations")
    ok &= bool(good.all())
    vec = facts.random_probability_vectors(rng, args.vectors, total=6.0, cap=0.5)
    _, good = facts.fact_notransmit_batch(vec)
    print(f"no-transmission bound: {args.vectors} vectors, {int((~good).sum())} violations")
    ok &= bool(good.all())
    for name, rep in facts.check_reception_facts(rng, args.trials).items():
        print(f"{name}: {rep.instances} instances, {rep.skipped} skipped, "
              f"{rep.counterexamples} counterexamples")
        ok &= rep.passed
    return EXIT_OK if ok else EXIT_FAIL


def cmd_calibrate(args) -> int:
    params = _physics(args)
    families = args.family or ["uniform-square"]
    ns = args.n or [50, 100, 200]
    out = Path(args.out_dir) if args.out_dir else None
    log = sys.stdout
    try:
        overrides, _ = calibrate_profile(families, ns, args.seeds, params=params, log=log)
    except CalibrationFailed as exc:
        best = exc.best
        print(f"calibration failed; best near-miss {best.overrides} "
              f"lemma={best.lemma_rate:.3f} broadcast={best.broadcast_rate:.3f}")
        return EXIT_FAIL
    print("selected:", overrides)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        write_overrides(overrides, out / "tuned.cfg")
        print(out / "tuned.cfg")
    return EXIT_OK


def _sweep_one(job):
    cfg, seed = job
    summary, _ = run_trial(cfg, seed, record=False)
    return summary


def cmd_sweep(args) -> int:
    cfg = _config_from_args(args)
    if args.protocol is None and not args.config:
        cfg = dataclasses.replace(cfg, protocol="s-broadcast")
    diameters = [int(d) for d in args.diameters.split(",")]
    jobs = []
    for D in diameters:
        c = dataclasses.replace(cfg, family="line-diameter", n=args.per_hop * D,
                                topology_params={"diameter": D})
        jobs += [(c, s) for s in range(args.seeds)]
    if args.parallel > 1:
        with ProcessPoolExecutor(max_workers=args.parallel) as ex:
            summaries = list(ex.map(_sweep_one, jobs))
    else:
        summaries = [_sweep_one(j) for j in jobs]
    rows = ["diameter,n,seed,success,rounds"]
    for (c, s), summ in zip(jobs, summaries):
        rows.append(f"{c.topology_params['diameter']},{c.n},{s},{int(summ.success)},"
                    f"{'' if summ.rounds is None else summ.rounds}")
    formula = "nos" if cfg.protocol == "nos-broadcast" else "sb"
    rep = fit_scaling(summaries, formula)
    print("\n".join(rows))
    print(f"fit {formula}: slope={rep.slope:.6g} intercept={rep.intercept:.6g} r2={rep.r2:.4f} "
          f"leave-one-out ratio={rep.loo_ratio:.3f}")
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "sweep.csv").write_text("\n".join(rows) + "\n")
    return EXIT_OK if all(s.success for s in summaries) else EXIT_FAIL


COMMANDS = {"gen": cmd_gen, "run": cmd_run, "verify": cmd_verify, "facts": cmd_facts,
            "calibrate": cmd_calibrate, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except (InvalidInputError, TopologyParseError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SinrCastError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
