import math

import numpy as np
import pytest

from crystalsym.energetics import ModelParams, standard_configuration
from crystalsym.extraction import PointConfig
from crystalsym.sampler import (TRACE_HEADER, Proposal, SamplerSettings, chain_seeds, init_chain,
                                log_acceptance, log_proposal, mcmc_step, propose_move, read_trace_csv,
                                run_chain, run_chains, summarize, validate_state, write_trace_csv)
from crystalsym.tessellation import build

TRI = build("triangular")
STD = standard_configuration(TRI, 4)


def _state(params=None, P=STD, seed=0, cap=0):
    return init_chain(TRI, params or ModelParams(), P, np.random.default_rng(seed), cap)


def test_move_frequencies_within_binomial_bounds():
    st = _state()
    rng = np.random.default_rng(1)
    n = 100_000
    kinds = [propose_move(st, rng, SamplerSettings()).kind for _ in range(n)]
    for kind, p in zip(("birth", "death", "displace"), (0.25, 0.25, 0.5)):
        k = kinds.count(kind)
        assert abs(k - n * p) <= 3 * math.sqrt(n * p * (1 - p))


def test_empty_configuration_only_proposes_births():
    empty = PointConfig(TRI.domain(4), np.zeros((0, 2)))
    st = _state(ModelParams(c0=0.0), empty)
    rng = np.random.default_rng(2)
    assert all(propose_move(st, rng, SamplerSettings()).kind == "birth" for _ in range(200))
    assert log_proposal("birth", 0, 10.0, (0.25, 0.25, 0.5)) == pytest.approx(-math.log(10.0))


def test_proposals_are_deterministic_given_seed():
    def seq(seed):
        st = _state()
        rng = np.random.default_rng(seed)
        out = []
        for _ in range(50):
            p = propose_move(st, rng, SamplerSettings())
            out.append((p.kind, p.pid, None if p.x_new is None else tuple(p.x_new)))
        return out
    assert seq(3) == seq(3)
    assert seq(3) != seq(4)


def test_birth_death_acceptance_ratio():
    # birth from n points: q_rev - q_fwd = log(pd/(n+1)) - log(pb/|I|)
    fwd = log_proposal("birth", 16, 13.0, (0.25, 0.25, 0.5))
    rev = log_proposal("death", 17, 13.0, (0.25, 0.25, 0.5))
    assert rev - fwd == pytest.approx(math.log(13.0 / 17))
    assert log_acceptance(0.0, -1.0, fwd, rev) == pytest.approx(min(0.0, -1.0 + math.log(13.0 / 17)))
    assert log_acceptance(0.0, 5.0, 0.0, 0.0) == 0.0


def test_downhill_displacement_is_accepted():
    pts = STD.points.copy()
    home = pts[5].copy()
    pts[5] += [0.02, 0.01]
    st = _state(P=PointConfig(STD.dom, pts))
    H0 = st.H
    d = home - pts[5]
    scale = st.params.eps / 2
    prop = Proposal("displace", 5, home,
                    log_proposal("displace", 16, STD.dom.volume, (0.25, 0.25, 0.5), d, scale),
                    log_proposal("displace", 16, STD.dom.volume, (0.25, 0.25, 0.5), -d, scale))
    for seed in range(5):
        s = _state(P=PointConfig(STD.dom, pts))
        _, ok = mcmc_step(s, prop, np.random.default_rng(seed))
        assert ok and s.H < H0


def test_death_leaving_omega_is_rejected():
    # c0 = 2 requires all 32 tiles
    st = _state(ModelParams(c0=2.0, beta=1e-6, m=-50.0))
    fwd = log_proposal("death", 16, STD.dom.volume, (0.25, 0.25, 0.5))
    rev = log_proposal("birth", 15, STD.dom.volume, (0.25, 0.25, 0.5))
    H = st.H
    _, ok = mcmc_step(st, Proposal("death", 3, None, fwd, rev), np.random.default_rng(0))
    assert not ok and st.H == H and st.n_points == 16
    validate_state(st)


def test_uninitializable_outside_omega():
    with pytest.raises(ValueError, match="admissible"):
        _state(P=PointConfig(STD.dom, STD.points[:3]))


def test_detailed_balance_and_cache_consistency():
    st = _state(ModelParams(beta=5.0, sigma=0.2, m=0.0), cap=200)
    rng = np.random.default_rng(9)
    for _ in range(600):
        mcmc_step(st, propose_move(st, rng, SamplerSettings()), rng)
        st.step += 1
    validate_state(st)
    assert st.balance_log
    for _, kind, lhs, rhs in st.balance_log:
        assert kind in ("birth", "death", "displace")
        assert abs(lhs - rhs) <= 1e-10 * max(1.0, abs(lhs))


def test_high_temperature_displacements_mostly_accepted():
    recs = run_chain("standard", TRI, ModelParams(beta=0.1), 4, SamplerSettings(steps=2000, thin=100), seed=7)
    assert recs[-1].acc_disp > 0.5


def test_low_temperature_chain_stays_standard():
    recs = run_chain("standard", TRI, ModelParams(beta=1000.0, sigma=10.0), 4,
                     SamplerSettings(steps=10_000, thin=100), seed=7)
    assert np.mean([r.order_parameter for r in recs]) < 1e-3
    assert all(r.n_surface >= 0 and math.isfinite(r.energy_gap_per_tile) for r in recs)


def test_run_chain_arguments():
    with pytest.raises(ValueError):
        run_chain("standard", TRI, ModelParams(), 4, SamplerSettings(steps=10, burn_in=10), seed=0)
    with pytest.raises(ValueError):
        run_chain("mystery", TRI, ModelParams(), 4, SamplerSettings(steps=10), seed=0)


def test_trace_is_byte_identical_across_runs(tmp_path):
    s = SamplerSettings(steps=300, burn_in=100, thin=50, validate_every=100)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    recs = run_chain("standard", TRI, ModelParams(beta=5.0), 4, s, seed=11)
    assert [r.step for r in recs] == [150, 200, 250, 300]
    write_trace_csv(recs, a)
    write_trace_csv(run_chain("standard", TRI, ModelParams(beta=5.0), 4, s, seed=11), b)
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().splitlines()[0] == ",".join(TRACE_HEADER)
    back = read_trace_csv(a)
    assert [r.row() for r in back] == [r.row() for r in recs]


def test_chain_seeds_and_summary():
    s1 = [int(s.generate_state(1)[0]) for s in chain_seeds(5, 3)]
    s2 = [int(s.generate_state(1)[0]) for s in chain_seeds(5, 3)]
    assert s1 == s2 and len(set(s1)) == 3
    s = SamplerSettings(steps=60, thin=30, validate_every=30)
    runs = run_chains("standard", TRI, ModelParams(beta=5.0), 4, s, master_seed=5, chains=2)
    summ = summarize(runs, ModelParams(beta=5.0), 5, s)
    assert summ["chains"] == 2 and len(summ["per_chain_median_order_param"]) == 2
    assert summ["settings"]["move_probs"] == [0.25, 0.25, 0.5]
