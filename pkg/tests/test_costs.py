import dataclasses

import pytest

from coinsim.chain import consensus_latency
from coinsim.config import RngStream, SubtaskSpec, SystemParams
from coinsim.costs import (EIN, FIN, LOCAL, QueueState, ein_cost, fin_cost,
                           local_cost, queue_delay, slot_cost)

MB = 8e6


def subtask(i_mb=5.0, v_mb=5.0, p_gc=2.0):
    return SubtaskSpec(i_mb * MB, v_mb * MB, p_gc * 1e9)


def test_local_cost_unit_ratio():
    params = SystemParams().validate()
    ec = local_cost(SubtaskSpec(MB, MB, params.cpu_local_hz), params)
    assert ec.delay == pytest.approx(1.0)


def test_local_energy_hand_value():
    # tau=5e-27, F=1 GHz, P=2e9 cycles: 10 J
    params = SystemParams().validate()
    ec = local_cost(subtask(p_gc=2.0), params)
    assert ec.energy == pytest.approx(10.0)


def test_weighted_cost_combination():
    params = SystemParams(cpu_local_hz=1e9, energy_coeff=5e-27).validate()
    st = subtask(p_gc=2.0)  # delay 2 s, energy 10 J
    ec = local_cost(st, params)
    assert ec.delay == pytest.approx(2.0)
    assert ec.cost == pytest.approx(0.5 * 2.0 + 0.5 * 10.0)
    assert ec.cost == pytest.approx(6.0)


def test_queue_delay_empty_queue():
    assert queue_delay(QueueState("fin"), 0.4) == pytest.approx(0.4)


def test_queue_delay_busy_queue_sum_branch():
    q = QueueState("fin", pending=[0.5, 0.3])
    # u = (0.8+0.2)/0.2 = 5 >= 1: waits the full backlog plus its own service
    assert queue_delay(q, 0.2) == pytest.approx(1.0)


def test_queue_delay_continuity_as_backlog_vanishes():
    q = QueueState("fin", pending=[1e-12])
    assert queue_delay(q, 0.7) == pytest.approx(0.7, abs=1e-9)


def test_queue_delay_low_utilization_branch():
    # u < 1 arises only under an alternative arrival-rate configuration
    q = QueueState("fin", pending=[0.5])
    delay = queue_delay(q, 0.2, arrival_rate=1.0)
    u = 1.0 * (0.5 + 0.2)
    assert u < 1
    assert delay == pytest.approx(u ** 2 / (1 - u) * 0.2)


def test_queue_delay_rejects_bad_service_time():
    with pytest.raises(ValueError):
        queue_delay(QueueState("fin"), 0.0)


def test_queue_drain_fifo():
    q = QueueState("ein", pending=[0.4, 0.6, 1.0])
    q.drain(0.9)
    assert q.pending == pytest.approx([0.1, 1.0])
    q.drain(5.0)
    assert q.pending == []


def test_fin_cost_additive_structure_without_bc_and_queue():
    params = SystemParams().validate()
    st = subtask()
    omega = 4e6
    ec = fin_cost(st, omega, 3, None, params, include_bc=False,
                  include_queue=False)
    expect_delay = st.load_cycles / params.cpu_fin_hz + st.data_bits / omega
    assert ec.delay == pytest.approx(expect_delay, rel=1e-12)


def test_fin_energy_hand_value():
    # I+V = 8e7 bit at 5e6 bit/s is 16 s of transmission at 0.5 W: 8 J
    params = SystemParams().validate()
    ec = fin_cost(subtask(i_mb=5.0, v_mb=5.0), 5e6, 1, None, params,
                  include_bc=False, include_queue=False)
    assert ec.energy == pytest.approx(8.0)


def test_fin_full_stack_matches_equation_chain():
    # independent literal evaluation of delay/energy/cost at Table III defaults
    params = SystemParams().validate()
    st = subtask(i_mb=4.0, v_mb=6.0, p_gc=3.0)
    omega = 3e6
    queue = QueueState("fin", pending=[0.8, 0.2])
    got = fin_cost(st, omega, 2, queue, params)

    service = st.load_cycles / params.cpu_fin_hz + st.data_bits / omega
    q_term = 1.0 + service  # busy queue: backlog + own service
    delay = (st.load_cycles / params.cpu_fin_hz + st.data_bits / omega
             + consensus_latency(st, 2, omega, params).total + q_term)
    energy = params.tx_power_w * st.data_bits / omega
    assert got.delay == pytest.approx(delay, rel=1e-12)
    assert got.energy == pytest.approx(energy, rel=1e-12)
    assert got.cost == pytest.approx(0.5 * delay + 0.5 * energy, rel=1e-12)


def test_ein_faster_cpu_means_smaller_processing_delay():
    params = SystemParams().validate()
    st = subtask()
    fin = fin_cost(st, 5e6, 1, None, params, include_bc=False, include_queue=False)
    ein = ein_cost(st, 5e6, 1, None, params, include_bc=False, include_queue=False)
    assert ein.delay < fin.delay


def test_ein_equals_fin_when_symmetric():
    params = dataclasses.replace(SystemParams(), cpu_ein_hz=60e9).validate()
    st = subtask()
    q1 = QueueState("fin", pending=[0.5])
    q2 = QueueState("ein", pending=[0.5])
    assert fin_cost(st, 5e6, 2, q1, params) == ein_cost(st, 5e6, 2, q2, params)


def test_cost_nonnegativity_battery():
    params = SystemParams().validate()
    rng = RngStream(9, "costs")
    for _ in range(100):
        st = subtask(rng.gen.uniform(1, 10), rng.gen.uniform(1, 10),
                     rng.gen.uniform(1, 10))
        omega = rng.gen.uniform(1e5, 1e8)
        r = int(rng.gen.integers(0, 11))
        for ec in (local_cost(st, params),
                   fin_cost(st, omega, r, QueueState("f"), params),
                   ein_cost(st, omega, r, QueueState("e"), params)):
            assert ec.delay >= 0 and ec.energy >= 0 and ec.cost >= 0


def test_slot_cost_all_local_collapses():
    params = SystemParams().validate()
    subs = [subtask(), subtask(p_gc=4.0)]
    costs = [(local_cost(s, params), fin_cost(s, 5e6, 1, None, params),
              ein_cost(s, 5e6, 1, None, params)) for s in subs]
    total = slot_cost([LOCAL, LOCAL], costs)
    assert total == pytest.approx(sum(local_cost(s, params).cost for s in subs))


def test_slot_cost_charges_exactly_one_branch():
    params = SystemParams().validate()
    subs = [subtask(), subtask(v_mb=2.0), subtask(i_mb=1.0)]
    costs = [(local_cost(s, params), fin_cost(s, 5e6, 3, None, params),
              ein_cost(s, 5e6, 3, None, params)) for s in subs]
    venues = [LOCAL, FIN, EIN]
    got = slot_cost(venues, costs)
    want = costs[0][0].cost + costs[1][1].cost + costs[2][2].cost
    assert got == pytest.approx(want, rel=1e-12)


def test_slot_cost_full_redundancy_branch_uses_rmax_priced_entry():
    # nonredundancy-aware subtask: the EIN entry priced at r_max is charged
    params = SystemParams().validate()
    st = subtask()
    full = ein_cost(st, 5e6, params.r_max, None, params)
    costs = [(local_cost(st, params), fin_cost(st, 5e6, params.r_max, None, params),
              full)]
    assert slot_cost([EIN], costs) == pytest.approx(full.cost)


def test_slot_cost_rejects_invalid_venue():
    params = SystemParams().validate()
    st = subtask()
    costs = [(local_cost(st, params), fin_cost(st, 5e6, 1, None, params),
              ein_cost(st, 5e6, 1, None, params))]
    with pytest.raises(ValueError):
        slot_cost([7], costs)
    with pytest.raises(ValueError):
        slot_cost([LOCAL, FIN], costs)
