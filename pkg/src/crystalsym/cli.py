"""Command-line entry point: simulate, extract, rigidity, constants, verify."""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import warnings
from importlib import resources

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, config_dict, dump_config, load_config, parse_config

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3

BUNDLED_N = 4
SUBCOMMANDS = ("simulate", "extract", "rigidity", "constants", "verify")


class InvariantViolation(RuntimeError):
    pass


def bundled_points_path() -> str:
    return str(resources.files("crystalsym").joinpath("data/standard_triangular_N4.csv"))


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _load(args) -> RunConfig:
    if args.config is None:
        cfg = RunConfig()
    elif str(args.config).endswith(".json"):
        try:
            with open(args.config) as fh:
                man = json.load(fh)
            cfg = parse_config(man["config_ini"])
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot read manifest {args.config}: {exc}") from exc
    else:
        cfg = load_config(args.config)
    if args.seed is not None:
        cfg.sampler.seed = int(args.seed)
        cfg.rigidity.seed = int(args.seed)
    if args.out is not None:
        cfg.io.output_dir = args.out
    cfg.validate()
    return cfg


def _prepare_out(path: str) -> str:
    try:
        os.makedirs(path, exist_ok=True)
        probe = os.path.join(path, ".write_probe")
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as exc:
        raise ConfigError(f"output directory {path!r} is not writable: {exc}") from exc
    return path


def _write_manifest(out: str, cmd: str, cfg: RunConfig, outputs: list, extra: dict) -> None:
    man = {
        "command": cmd,
        "version": __version__,
        "config": config_dict(cfg),
        "config_ini": dump_config(cfg),
        "seeds": {"sampler": cfg.sampler.seed, "rigidity": cfg.rigidity.seed},
        "outputs": {os.path.basename(p): _sha256(p) for p in outputs},
        **extra,
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(man, fh, indent=2, sort_keys=True)


# subcommands ------------------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, out: str, threads: int) -> tuple:
    from .sampler import SamplerSettings, chain_seeds, run_chains, summarize, write_summary_json, write_trace_csv

    if cfg.sampler.seed is None:
        raise ConfigError("simulate needs a seed (--seed or sampler.seed)")
    s = cfg.sampler
    settings = SamplerSettings(steps=s.steps, burn_in=s.burn_in, thin=s.thin,
                               move_probs=tuple(float(x) for x in s.move_probs), step_scale=s.step_scale,
                               validate_every=s.validate_every)
    tess = cfg.tessellation()
    params = cfg.model_params()
    try:
        recs = run_chains(s.initial, tess, params, cfg.model.N, settings, s.seed, s.chains, threads, s.blur)
    except RuntimeError as exc:
        raise InvariantViolation(str(exc)) from exc
    outputs = []
    for i, r in enumerate(recs):
        p = os.path.join(out, f"chain_{i:03d}.csv")
        write_trace_csv(r, p)
        outputs.append(p)
    summ = summarize(recs, params, s.seed, settings)
    p = os.path.join(out, "summary.json")
    write_summary_json(summ, p)
    outputs.append(p)
    seeds = [int(sq.generate_state(1)[0]) for sq in chain_seeds(s.seed, s.chains)]
    return outputs, {"chain_seed_words": seeds}


def cmd_extract(cfg: RunConfig, out: str, input_path: str, n_cells: int) -> tuple:
    from .extraction import complex_to_json, extract, read_points_csv

    tess = cfg.tessellation()
    prm = cfg.model_params()
    try:
        P = read_points_csv(input_path, tess.domain(n_cells))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read points {input_path}: {exc}") from exc
    cx = extract(P, tess, prm.eps, prm.rho, verify=True)
    p = os.path.join(out, "complex.json")
    with open(p, "w") as fh:
        fh.write(complex_to_json(cx))
    return [p], {"input": os.path.abspath(input_path), "input_sha256": _sha256(input_path), "N": n_cells}


def cmd_rigidity(cfg: RunConfig, out: str) -> tuple:
    from .rigidity import (append_gap_csv, estimate_constants, mixed_ensemble, rigidity_gap,
                           scaling_experiment)

    r = cfg.rigidity
    gap_path = os.path.join(out, "gap_reports.csv")
    if os.path.exists(gap_path):
        os.remove(gap_path)
    kinds = tuple(str(k) for k in r.kinds)
    fits = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fields = mixed_ensemble(kinds, r.ensemble_size, r.resolution, r.seed)
        for p in r.ps:
            reps = [rigidity_gap(f, p) for f in fields]
            C1, C2 = estimate_constants(reps)
            append_gap_csv(gap_path, reps, C1, C2)
            sc = scaling_experiment(tuple(r.etas), p, resolution=r.resolution, seed=r.seed)
            fits[repr(float(p))] = {"C1": C1, "C2": C2, "scaling": {
                "etas": [float(e) for e in sc.etas], "C1": sc.C1, "C2": sc.C2,
                "slope_C1": sc.slope_C1, "slope_C2": sc.slope_C2,
                "expected_slope_C2": 2 / 2 - 2 / p + 1}}
    fit_path = os.path.join(out, "scaling_fit.json")
    with open(fit_path, "w") as fh:
        json.dump(fits, fh, indent=2, sort_keys=True)
    return [gap_path, fit_path], {}


def cmd_constants(cfg: RunConfig, out: str) -> tuple:
    from .energetics import compute_m0, verify_local_bound
    from .tessellation import compute_constants

    tess = cfg.tessellation()
    prm = cfg.model_params()
    consts = compute_constants(tess)
    rng = np.random.default_rng(cfg.rigidity.seed)
    fit = verify_local_bound(tess, prm.phi, prm.ell, prm.eps, 10000, rng)
    res = {
        "tessellation": tess.name,
        "d": tess.d,
        "constants": consts.to_json(),
        "local_bound": {"c1": fit.c1, "c2": fit.c2, "violations": fit.violations, "samples": fit.n_samples},
        "m0": compute_m0(tess, fit.c2, prm.phi, prm.ell),
    }
    p = os.path.join(out, "constants.json")
    with open(p, "w") as fh:
        json.dump(res, fh, indent=2, sort_keys=True, default=float)
    if fit.violations:
        raise InvariantViolation(f"local bound violated on {fit.violations} fitted samples")
    return [p], {}


def verify_suite(cfg: RunConfig, log=print) -> list:
    """Quick invariant checks; returns a list of failure messages."""
    from .deformation import build_deformation, order_parameter
    from .energetics import ModelParams, standard_configuration, total_hamiltonian, verify_local_bound
    from .extraction import PointConfig, extract, verify_complex
    from .rigidity import box_axes, discrete_d, make_field, rigidity_gap
    from .sampler import SamplerSettings, init_chain, mcmc_step, propose_move, validate_state
    from .tessellation import build, compute_constants, gamma_sum

    fails = []

    def check(name, ok, detail=""):
        log(f"{'PASS' if ok else 'FAIL'} {name}{(': ' + detail) if detail else ''}")
        if not ok:
            fails.append(name)

    prm = cfg.model_params()
    tri = build("triangular")
    consts = compute_constants(tri)
    for N in (4, 6):
        P = standard_configuration(tri, N)
        cx = extract(P, tri, prm.eps, prm.rho)
        op, R = order_parameter(build_deformation(cx, tri))
        H = total_hamiltonian(cx, tri, prm)
        ok = (len(cx.tiles) == 2 * N * N and not cx.surface_points and op <= 1e-12
              and np.allclose(R, np.eye(2), atol=1e-12)
              and abs(H - (-prm.m * N * N)) <= 1e-9 * max(1.0, abs(prm.m) * N * N))
        check(f"standard configuration N={N}", ok, f"|T|={len(cx.tiles)} op={op:.3g} H={H:.6g}")

    rng = np.random.default_rng(cfg.rigidity.seed)
    bad = 0
    for k in range(6):
        P = standard_configuration(tri, 6)
        pts = P.points + rng.uniform(-1, 1, P.points.shape) * prm.eps / 4
        drop = rng.choice(len(pts), size=1 + k % 3, replace=False)
        P = PointConfig(P.dom, np.delete(pts, drop, axis=0))
        cx = extract(P, tri, prm.eps, prm.rho, verify=False)
        lhs = len(cx.surface_points)
        mid = len(P) - gamma_sum(tri, consts, cx.counts_by_type())
        if not (lhs >= mid >= 0) or verify_complex(cx, P, tri, prm.eps, prm.rho):
            bad += 1
    check("surface inequality and complex conditions on defected crystals", bad == 0, f"{bad} failures")

    A, o = box_axes((1.0, 1.0))
    g = rigidity_gap(make_field("constant_rotation", A, o, 32, {}, np.random.default_rng(1)), 2.0)
    check("constant rotation has zero gap", max(g.lhs, g.rhs1, g.rhs2) <= 1e-12)
    gf = make_field("gradient", A, o, 32, {}, np.random.default_rng(2), periodic=True)
    check("discrete gradient is closed", discrete_d(gf, 2.0)[0] <= 1e-12)

    fit = verify_local_bound(tri, prm.phi, prm.ell, prm.eps, 1000, np.random.default_rng(3))
    check("local energy bound", fit.violations == 0 and fit.c1 > 0, f"c1={fit.c1:.4g} c2={fit.c2:.4g}")

    sp = ModelParams(**{**prm.as_dict(), "sigma": 0.2, "m": 0.0, "beta": 5.0})
    st = init_chain(tri, sp, standard_configuration(tri, 6), np.random.default_rng(4), balance_cap=10 ** 6)
    settings = SamplerSettings(steps=400, burn_in=0, thin=1)
    srng = np.random.default_rng(5)
    try:
        for i in range(400):
            mcmc_step(st, propose_move(st, srng, settings), srng)
            st.step += 1
            if (i + 1) % 100 == 0:
                validate_state(st)
        ok = all(abs(a - b) <= 1e-10 for _, _, a, b in st.balance_log)
        check("sampler cache and detailed balance", ok, f"{len(st.balance_log)} logged transitions")
    except RuntimeError as exc:
        check("sampler cache and detailed balance", False, str(exc))
    return fails


def cmd_verify(cfg: RunConfig, out: str) -> tuple:
    lines = []

    def log(s):
        print(s)
        lines.append(s)

    fails = verify_suite(cfg, log)
    p = os.path.join(out, "verify.json")
    with open(p, "w") as fh:
        json.dump({"checks": lines, "failures": fails}, fh, indent=2)
    if fails:
        raise InvariantViolation(f"{len(fails)} invariant checks failed")
    return [p], {}


# entry ------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="crystalsym", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", default=None, help="INI config or a previous manifest.json")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--out", default=None)
        if name == "extract":
            sp.add_argument("--input", default=None, help="point CSV (default: bundled triangular N=4)")
            sp.add_argument("--cells", type=int, default=None, help="torus size N (default: model.N, 4 for the bundled file)")
    return ap


def run(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        cfg = _load(args)
        out = _prepare_out(cfg.io.output_dir)
        if args.threads < 1:
            raise ConfigError("--threads must be positive")
        if args.command == "simulate":
            outputs, extra = cmd_simulate(cfg, out, args.threads)
        elif args.command == "extract":
            path = args.input or bundled_points_path()
            n_cells = args.cells or (BUNDLED_N if args.input is None else cfg.model.N)
            outputs, extra = cmd_extract(cfg, out, path, n_cells)
        elif args.command == "rigidity":
            outputs, extra = cmd_rigidity(cfg, out)
        elif args.command == "constants":
            outputs, extra = cmd_constants(cfg, out)
        else:
            outputs, extra = cmd_verify(cfg, out)
        _write_manifest(out, args.command, cfg, outputs, extra)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        try:
            _write_manifest(out, args.command, cfg, [], {"invariant_violation": str(exc)})
        except (OSError, NameError):
            pass
        return EXIT_INVARIANT
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
