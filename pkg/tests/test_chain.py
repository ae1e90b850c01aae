import itertools

import numpy as np
import pytest

from coinsim.chain import (ConsensusCost, RedundancyProfile, bc_spend,
                           check_redundancy, consensus_latency,
                           mining_incentive)
from coinsim.config import RngStream, SubtaskSpec, SystemParams

MB = 8e6


def subtask(i_mb=5.0, v_mb=5.0, p_gc=2.0):
    return SubtaskSpec(i_mb * MB, v_mb * MB, p_gc * 1e9)


def test_profile_beta_derivation():
    prof = RedundancyProfile.from_levels([1, 4, 10], r_max=10)
    assert prof.beta.tolist() == [1, 1, 0]


def test_check_redundancy_slack_ok():
    params = SystemParams(bc_budget=1e9).validate()
    subs = [subtask(), subtask()]
    prof = RedundancyProfile.from_levels([1, 1], params.r_max)
    assert check_redundancy(prof, subs, params) is None


def test_check_redundancy_flags_replication_overflow():
    # beta+r exceeding r_max by one: force it by hand-building the profile
    params = SystemParams(r_max=5, bc_budget=1e9).validate()
    prof = RedundancyProfile(levels=np.array([3, 5]), beta=np.array([1, 1]))
    bad = check_redundancy(prof, [subtask(), subtask()], params)
    assert bad is not None and bad.constraint == "max_redundancy" and bad.index == 1


def test_check_redundancy_budget_hand_sum():
    # u=1/MB, V=[2,3] MB, beta+r=[2,2]: spend 10 > 9
    params = SystemParams(price_per_mb=1.0, bc_budget=9.0, r_max=5).validate()
    subs = [subtask(v_mb=2.0), subtask(v_mb=3.0)]
    prof = RedundancyProfile.from_levels([1, 1], params.r_max)  # beta=1 each
    bad = check_redundancy(prof, subs, params)
    assert bad is not None and bad.constraint == "budget"
    assert "10" in bad.detail


def test_check_redundancy_dimension_mismatch():
    params = SystemParams().validate()
    prof = RedundancyProfile.from_levels([1], params.r_max)
    with pytest.raises(ValueError):
        check_redundancy(prof, [subtask(), subtask()], params)


def test_check_matches_direct_constraint_enumeration():
    # validator agrees with a literal evaluation of both constraints on every
    # profile of a small instance
    params = SystemParams(price_per_mb=1.0, bc_budget=14.0, r_min=1,
                          r_max=3).validate()
    subs = [subtask(v_mb=1.0), subtask(v_mb=2.0)]
    for levels in itertools.product(range(0, 5), repeat=2):
        prof = RedundancyProfile.from_levels(list(levels), params.r_max)
        spend = sum((prof.beta[i] + prof.levels[i]) * subs[i].software_mb
                    for i in range(2))
        ok = spend <= params.bc_budget and all(
            prof.beta[i] + prof.levels[i] <= params.r_max for i in range(2))
        assert (check_redundancy(prof, subs, params) is None) == ok


def test_bc_spend_values():
    params = SystemParams().validate()
    assert bc_spend(RedundancyProfile.from_levels([], 10), [], 1.0) == 0.0
    prof = RedundancyProfile.from_levels([2], r_max=3)  # beta+r = 3
    assert bc_spend(prof, [subtask(v_mb=4.0)], 0.5) == pytest.approx(6.0)
    assert bc_spend(prof, [subtask(v_mb=4.0)], 1.0) == pytest.approx(12.0)


def test_mining_incentive_values():
    assert mining_incentive(subtask(i_mb=1.0, v_mb=1.0), 0.0) == 0.0
    assert mining_incentive(subtask(i_mb=12.0, v_mb=8.0), 0.1) == pytest.approx(2.0)
    assert mining_incentive(subtask(i_mb=3.0, v_mb=4.0), 1.0) == pytest.approx(7.0)


def test_consensus_zero_replication_is_broadcast_only():
    params = SystemParams(block_txs=0).validate()
    cost = consensus_latency(subtask(i_mb=5.0, v_mb=5.0), 0, 5e6, params)
    assert cost.broadcast == pytest.approx(10 * MB / 5e6)
    assert cost.pre_prepare == cost.prepare == cost.commit == cost.reply == 0.0
    assert cost.total == cost.broadcast


def test_consensus_broadcast_transmission_term():
    # 10 MB = 8e7 bit at 5e6 bit/s: 16 s plus the validation compute term
    params = SystemParams().validate()
    cost = consensus_latency(subtask(i_mb=5.0, v_mb=5.0), 1, 5e6, params)
    compute = (params.block_txs
               * (params.sig_cost_cycles + params.verify_cost_cycles)
               / params.node_cpus()[0])
    assert cost.broadcast == pytest.approx(16.0 + compute)


def _oracle_consensus(st, r, omega, qb, sig, ver, nodes, m, nf):
    """Literal phase-by-phase evaluation, written independently of chain.py."""
    data = st.input_bits + st.software_bits
    f0 = nodes[0]
    bd = data / omega + r * qb * (sig + ver) / f0
    prep = (r * qb * data / omega + (sig + (m - 1) * ver) / f0
            + max((sig + ver) * (qb + 1) / fj for fj in nodes))
    pre = (r * qb * data / omega
           + max((2 * nf * (sig + ver) + sig + (m - 1) * ver) / fj for fj in nodes))
    com = pre
    rpl = (r * qb * data / omega + max(qb * (sig + ver) / fj for fj in nodes)
           + 2 * nf * qb * (sig + ver) / f0)
    return bd, prep, pre, com, rpl


def test_consensus_full_phase_oracle():
    params = SystemParams(block_txs=10, sig_cost_cycles=1e6, verify_cost_cycles=1e6,
                          num_eins=3, num_faulty=1).validate()
    st = subtask(i_mb=6.0, v_mb=3.0, p_gc=4.0)
    omega = 2e6
    got = consensus_latency(st, 2, omega, params)
    nodes = params.node_cpus()
    assert all(f == 60e9 for f in nodes) and len(nodes) == 4
    bd, prep, pre, com, rpl = _oracle_consensus(st, 2, omega, 10, 1e6, 1e6,
                                                nodes, 3, 1)
    assert got.broadcast == pytest.approx(bd, rel=1e-12)
    assert got.pre_prepare == pytest.approx(prep, rel=1e-12)
    assert got.prepare == pytest.approx(pre, rel=1e-12)
    assert got.commit == pytest.approx(com, rel=1e-12)
    assert got.reply == pytest.approx(rpl, rel=1e-12)
    assert got.total == pytest.approx(bd + prep + pre + com + rpl, rel=1e-12)


def test_consensus_monotonicity():
    params = SystemParams().validate()
    st = subtask()
    base = consensus_latency(st, 2, 5e6, params).total
    assert consensus_latency(st, 3, 5e6, params).total >= base
    assert consensus_latency(st, 2, 6e6, params).total < base
    import dataclasses
    more_txs = dataclasses.replace(params, block_txs=20)
    assert consensus_latency(st, 2, 5e6, more_txs).total >= base
    more_faulty = dataclasses.replace(params, num_faulty=3)
    assert consensus_latency(st, 2, 5e6, more_faulty).total >= base
    bigger = subtask(i_mb=9.0, v_mb=9.0)
    assert consensus_latency(bigger, 2, 5e6, params).total >= base


def test_consensus_total_always_equals_phase_sum():
    params = SystemParams().validate()
    rng = RngStream(5, "cons")
    for _ in range(50):
        st = subtask(rng.gen.uniform(1, 10), rng.gen.uniform(1, 10),
                     rng.gen.uniform(1, 10))
        r = int(rng.gen.integers(0, 11))
        cost = consensus_latency(st, r, rng.gen.uniform(1e5, 1e8), params)
        fields = (cost.broadcast, cost.pre_prepare, cost.prepare, cost.commit,
                  cost.reply)
        assert cost.total == pytest.approx(sum(fields), rel=1e-12)
        assert min(fields) >= 0.0


def test_consensus_input_validation():
    params = SystemParams().validate()
    with pytest.raises(ValueError):
        consensus_latency(subtask(), 1, 0.0, params)
    with pytest.raises(ValueError):
        consensus_latency(subtask(), -1, 1e6, params)
    bad = SystemParams(bc_node_cpus_hz=(0.0,))
    with pytest.raises(ValueError):
        consensus_latency(subtask(), 1, 1e6, bad)
