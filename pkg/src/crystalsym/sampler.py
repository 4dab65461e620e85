"""Grand-canonical Metropolis-Hastings sampler over point configurations on the torus."""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .deformation import build_deformation, order_parameter
from .energetics import (
    ModelParams,
    blurred_configuration,
    local_energy,
    standard_configuration,
    total_hamiltonian,
)
from .extraction import ExtractionState, PointConfig, classify_tiles, extract
from .tessellation import Tessellation, compute_constants, gamma_sum

MOVE_KINDS = ("birth", "death", "displace")
TRACE_HEADER = ["step", "order_param", "energy_gap_per_tile", "n_points", "n_tiles", "n_surface",
                "acc_birth", "acc_death", "acc_disp"]
VALIDATE_EVERY = 1000
H_TOL = 1e-8


@dataclass
class SamplerSettings:
    steps: int = 10000
    burn_in: int = 0
    thin: int = 100
    move_probs: tuple = (0.25, 0.25, 0.5)
    step_scale: Optional[float] = None  # defaults to eps / 2
    validate_every: int = VALIDATE_EVERY
    log_balance: int = 0  # number of accepted transitions to check for detailed balance


@dataclass
class Proposal:
    kind: str
    pid: int
    x_new: Optional[np.ndarray]
    log_q_fwd: float
    log_q_rev: float


@dataclass
class ObservableRecord:
    step: int
    order_parameter: float
    energy_gap_per_tile: float
    n_points: int
    n_tiles: int
    n_surface: int
    acc_birth: float
    acc_death: float
    acc_disp: float

    def row(self) -> list:
        return [self.step, self.order_parameter, self.energy_gap_per_tile, self.n_points, self.n_tiles,
                self.n_surface, self.acc_birth, self.acc_death, self.acc_disp]


@dataclass
class ChainState:
    tess: Tessellation
    params: ModelParams
    ext: ExtractionState
    rng: np.random.Generator
    H: float
    admitted: list
    surface: set
    next_id: int
    step: int = 0
    proposed: dict = field(default_factory=lambda: dict.fromkeys(MOVE_KINDS, 0))
    accepted: dict = field(default_factory=lambda: dict.fromkeys(MOVE_KINDS, 0))
    energy_cache: dict = field(default_factory=dict)
    balance_log: list = field(default_factory=list)
    balance_cap: int = 0

    @property
    def dom(self):
        return self.ext.dom

    @property
    def n_points(self) -> int:
        return len(self.ext.points)

    def config(self) -> PointConfig:
        ids = sorted(self.ext.points)
        pts = np.array([self.ext.points[q] for q in ids]).reshape(-1, self.dom.d)
        return PointConfig(self.dom, pts)

    def id_map(self) -> dict:
        return {q: i for i, q in enumerate(sorted(self.ext.points))}

    def complex(self):
        return self.ext.complex(self.id_map())


# energy bookkeeping -----------------------------------------------------------------


def _tile_energy(state: ChainState, key) -> float:
    c = state.ext.cands[key]
    tag = (key, c.coords.tobytes())
    e = state.energy_cache.get(tag)
    if e is None:
        e = local_energy(c, state.tess, state.params.phi, state.params.ell)
        state.energy_cache[tag] = e
    return e


def _evaluate(state: ChainState) -> tuple:
    """(H, admitted keys, surface ids) of the current extraction state."""
    admitted, _ = state.ext.extract()
    tiles = [state.ext.cands[k] for k in admitted]
    surface, _, _ = classify_tiles(tiles, state.tess, state.ext.points.keys())
    loc = math.fsum(_tile_energy(state, k) for k in admitted)
    p = state.params
    H = loc + p.sigma * len(surface) - p.m * len(state.ext.points)
    return H, admitted, surface


def _in_omega(state: ChainState, n_tiles: int) -> bool:
    return n_tiles >= state.params.c0 * state.dom.N ** state.dom.d


# proposals ----------------------------------------------------------------------------


def _effective_probs(probs, n: int) -> tuple:
    pb, pd, pm = probs
    if n == 0:
        # no point to kill or move: those draws become births
        return 1.0, 0.0, 0.0
    return pb, pd, pm


def _log_gauss(delta: np.ndarray, scale: float) -> float:
    d = len(delta)
    return float(-0.5 * (delta @ delta) / scale ** 2 - d * math.log(scale * math.sqrt(2 * math.pi)))


def log_proposal(kind: str, n_before: int, volume: float, probs, delta=None, scale=None) -> float:
    """Log density of proposing a specific move from a configuration with ``n_before`` points."""
    pb, pd, pm = _effective_probs(probs, n_before)
    if kind == "birth":
        return math.log(pb) - math.log(volume)
    if kind == "death":
        return math.log(pd) - math.log(n_before)
    return math.log(pm) - math.log(n_before) + _log_gauss(np.asarray(delta), scale)


def propose_move(state: ChainState, rng: np.random.Generator, settings: SamplerSettings) -> Proposal:
    n = state.n_points
    dom = state.dom
    probs = settings.move_probs
    scale = settings.step_scale or state.params.eps / 2
    u = rng.random()
    pb, pd, _ = _effective_probs(probs, n)
    if u < pb:
        kind = "birth"
    elif u < pb + pd:
        kind = "death"
    else:
        kind = "displace"
    if kind == "birth":
        x = dom.from_fractional(rng.random(dom.d))
        fwd = log_proposal("birth", n, dom.volume, probs)
        rev = log_proposal("death", n + 1, dom.volume, probs)
        return Proposal("birth", state.next_id, x, fwd, rev)
    ids = sorted(state.ext.points)
    pid = ids[int(rng.integers(n))]
    if kind == "death":
        fwd = log_proposal("death", n, dom.volume, probs)
        rev = log_proposal("birth", n - 1, dom.volume, probs)
        return Proposal("death", pid, None, fwd, rev)
    delta = rng.normal(0.0, scale, dom.d)
    x = dom.wrap(state.ext.points[pid] + delta)
    fwd = log_proposal("displace", n, dom.volume, probs, delta, scale)
    rev = log_proposal("displace", n, dom.volume, probs, -delta, scale)
    return Proposal("displace", pid, x, fwd, rev)


def log_acceptance(log_pi_old: float, log_pi_new: float, log_q_fwd: float, log_q_rev: float) -> float:
    return min(0.0, log_pi_new - log_pi_old + log_q_rev - log_q_fwd)


# one step -----------------------------------------------------------------------------


def _apply(state: ChainState, prop: Proposal):
    ext = state.ext
    if prop.kind == "birth":
        ext.add_point(prop.pid, prop.x_new)
        return None
    snap = ext.snapshot_point(prop.pid)
    ext.remove_point(prop.pid)
    if prop.kind == "displace":
        ext.add_point(prop.pid, prop.x_new)
    return snap


def _undo(state: ChainState, prop: Proposal, snap):
    ext = state.ext
    if prop.kind == "birth":
        ext.remove_point(prop.pid)
        return
    if prop.kind == "displace":
        ext.remove_point(prop.pid)
    ext.restore_point(snap)


def mcmc_step(state: ChainState, prop: Proposal, rng: np.random.Generator) -> tuple:
    """Metropolis-Hastings accept/reject; returns (state, accepted)."""
    beta = state.params.beta
    state.proposed[prop.kind] += 1
    u = rng.random()
    snap = _apply(state, prop)
    H_new, admitted, surface = _evaluate(state)
    if not _in_omega(state, len(admitted)):
        _undo(state, prop, snap)
        return state, False
    log_a = log_acceptance(-beta * state.H, -beta * H_new, prop.log_q_fwd, prop.log_q_rev)
    if not u < math.exp(log_a):
        _undo(state, prop, snap)
        return state, False
    if len(state.balance_log) < state.balance_cap:
        back = log_acceptance(-beta * H_new, -beta * state.H, prop.log_q_rev, prop.log_q_fwd)
        lhs = -beta * state.H + prop.log_q_fwd + log_a
        rhs = -beta * H_new + prop.log_q_rev + back
        state.balance_log.append((state.step, prop.kind, lhs, rhs))
    state.H, state.admitted, state.surface = H_new, admitted, surface
    if prop.kind == "birth":
        state.next_id += 1
    state.accepted[prop.kind] += 1
    return state, True


# initialization, validation, observables ----------------------------------------------


def init_chain(tess: Tessellation, params: ModelParams, P: PointConfig, rng: np.random.Generator,
               balance_cap: int = 0) -> ChainState:
    ext = ExtractionState(P.dom, tess, params.eps, params.rho)
    ext.build_all(enumerate(P.points))
    state = ChainState(tess, params, ext, rng, 0.0, [], set(), len(P.points), balance_cap=balance_cap)
    state.H, state.admitted, state.surface = _evaluate(state)
    if not _in_omega(state, len(state.admitted)):
        raise ValueError(f"initial configuration is not admissible: {len(state.admitted)} tiles "
                         f"< c0 N^d = {params.c0 * P.dom.N ** P.dom.d:g}")
    return state


def validate_state(state: ChainState) -> None:
    """Compare cached quantities against a fresh extraction; raises on any mismatch."""
    P = state.config()
    fresh = extract(P, state.tess, state.params.eps, state.params.rho, verify=False)
    idm = state.id_map()
    mine = sorted(tuple(idm[q] for q in k) for k in state.admitted)
    theirs = sorted(t.key for t in fresh.tiles)
    if mine != theirs:
        raise RuntimeError(f"step {state.step}: incremental extraction differs from fresh extraction")
    if sorted(idm[q] for q in state.surface) != sorted(fresh.surface_points):
        raise RuntimeError(f"step {state.step}: surface points differ from fresh extraction")
    H = total_hamiltonian(fresh, state.tess, state.params)
    if abs(H - state.H) > H_TOL:
        raise RuntimeError(f"step {state.step}: cached H {state.H!r} differs from recomputed {H!r}")


def _rate(state: ChainState, kind: str) -> float:
    n = state.proposed[kind]
    return state.accepted[kind] / n if n else 0.0


def observe(state: ChainState, H_ref: float, consts=None) -> ObservableRecord:
    cx = state.complex()
    n_tiles = len(cx.tiles)
    if n_tiles:
        op, _ = order_parameter(build_deformation(cx, state.tess))
        gap = (state.H - H_ref) / n_tiles
    else:
        op, gap = math.nan, math.nan
    if consts is not None:
        # surface points bound the uncovered mass: |dP| >= |P| - sum gamma_i |T^i| >= 0
        slack = cx.n_points - gamma_sum(state.tess, consts, cx.counts_by_type())
        if not (len(cx.surface_points) >= slack >= 0):
            raise RuntimeError(f"step {state.step}: surface-point inequality violated")
    return ObservableRecord(state.step, float(op), float(gap), state.n_points, n_tiles,
                            len(cx.surface_points), _rate(state, "birth"), _rate(state, "death"),
                            _rate(state, "displace"))


def initial_configuration(kind, tess: Tessellation, N: int, params: ModelParams, rng: np.random.Generator,
                          blur: float = 0.0) -> PointConfig:
    if isinstance(kind, PointConfig):
        return kind
    if kind == "standard":
        return standard_configuration(tess, N)
    if kind == "blurred":
        return blurred_configuration(tess, N, blur, rng, eps=params.eps)
    raise ValueError(f"unknown initial configuration {kind!r}")


def run_chain(initial, tess: Tessellation, params: ModelParams, N: int, settings: SamplerSettings,
              seed, blur: float = 0.0, state_out: Optional[list] = None) -> list:
    """Run one chain; returns the observable records taken every ``thin`` steps after burn-in."""
    if settings.steps <= settings.burn_in:
        raise ValueError("steps must exceed burn_in")
    rng = np.random.default_rng(seed)
    P = initial_configuration(initial, tess, N, params, rng, blur)
    std = standard_configuration(tess, P.dom.N)
    H_ref = total_hamiltonian(extract(std, tess, params.eps, params.rho, verify=False), tess, params)
    consts = compute_constants(tess)
    state = init_chain(tess, params, P, rng, settings.log_balance)
    records = []
    for _ in range(settings.steps):
        prop = propose_move(state, rng, settings)
        mcmc_step(state, prop, rng)
        state.step += 1
        if settings.validate_every and state.step % settings.validate_every == 0:
            validate_state(state)
        if state.step > settings.burn_in and (state.step - settings.burn_in) % settings.thin == 0:
            records.append(observe(state, H_ref, consts))
    if state_out is not None:
        state_out.append(state)
    return records


# output -----------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % v


def write_trace_csv(records: list, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in records:
            w.writerow([_fmt(v) for v in r.row()])


def read_trace_csv(path) -> list:
    out = []
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header != TRACE_HEADER:
            raise ValueError(f"unexpected trace header {header}")
        for row in rd:
            v = [float(x) for x in row]
            out.append(ObservableRecord(int(v[0]), v[1], v[2], int(v[3]), int(v[4]), int(v[5]), v[6], v[7], v[8]))
    return out


def chain_seeds(master: int, chains: int) -> list:
    """Independent per-chain seed sequences derived from (master seed, chain index)."""
    return np.random.SeedSequence(master).spawn(chains)


def _chain_job(args):
    initial, tess, params, N, settings, seed, blur = args
    return run_chain(initial, tess, params, N, settings, seed, blur)


def run_chains(initial, tess: Tessellation, params: ModelParams, N: int, settings: SamplerSettings,
               master_seed: int, chains: int = 1, threads: int = 1, blur: float = 0.0) -> list:
    """Independent chains, results ordered by chain index."""
    seeds = chain_seeds(master_seed, chains)
    jobs = [(initial, tess, params, N, settings, s, blur) for s in seeds]
    if threads <= 1 or chains == 1:
        return [_chain_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=min(threads, chains)) as pool:
        return list(pool.map(_chain_job, jobs))


def summarize(records_by_chain: list, params: ModelParams, master_seed: int, settings: SamplerSettings) -> dict:
    def stats(key):
        vals = [getattr(r, key) for recs in records_by_chain for r in recs]
        vals = [v for v in vals if not math.isnan(v)]
        if not vals:
            return {"mean": None, "median": None}
        return {"mean": float(np.mean(vals)), "median": float(np.median(vals))}

    return {
        "master_seed": int(master_seed),
        "chains": len(records_by_chain),
        "params": params.as_dict(),
        "settings": {k: (list(v) if isinstance(v, tuple) else v) for k, v in settings.__dict__.items()},
        "order_param": stats("order_parameter"),
        "energy_gap_per_tile": stats("energy_gap_per_tile"),
        "n_tiles": stats("n_tiles"),
        "n_surface": stats("n_surface"),
        "per_chain_median_order_param": [
            float(np.median([r.order_parameter for r in recs])) if recs else None for recs in records_by_chain
        ],
    }


def write_summary_json(summary: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
