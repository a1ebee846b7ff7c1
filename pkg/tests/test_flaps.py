import pytest

from oaesim.errors import ConfigurationError
from oaesim.flaps import (
    FlapParams,
    FlapSchedule,
    cluster_mttf,
    generate_flap_schedule,
    inject,
)
from oaesim.kernel import Simulator


def test_cluster_mttf_single_link_is_identity():
    assert cluster_mttf(12345, 1) == 12345


def test_cluster_mttf_direct_substitution():
    assert cluster_mttf(10**6, 10**5) == 10
    assert cluster_mttf(1000, 1000) == 1


def test_cluster_mttf_rejects_empty_pool():
    with pytest.raises(ValueError):
        cluster_mttf(1000, 0)


def test_rare_event_schedule_usually_empty():
    params = FlapParams(mttf=10**9, links=1, seed=3)
    schedule = generate_flap_schedule(params, horizon=1000)
    assert schedule.entries == []


def test_schedule_deterministic_for_same_params():
    params = FlapParams(mttf=10**5, links=8, seed=11)
    a = generate_flap_schedule(params, horizon=10**7)
    b = generate_flap_schedule(params, horizon=10**7)
    assert a.entries == b.entries
    assert len(a.entries) > 0


def test_schedule_sorted_with_positive_durations():
    params = FlapParams(mttf=10**4, links=5, seed=2, duration_kind="exponential", duration=500)
    schedule = generate_flap_schedule(params, horizon=10**6)
    starts = [e.start for e in schedule.entries]
    assert starts == sorted(starts)
    assert all(e.duration > 0 for e in schedule.entries)


def test_cluster_interflap_tracks_t_over_n():
    # Sample-mean oracle: with N=1000 links at T=1e6 over a 1e7 horizon the
    # pool sees about 1e4 flaps with mean spacing near T/N = 1000.
    params = FlapParams(mttf=10**6, links=1000, seed=42)
    schedule = generate_flap_schedule(params, horizon=10**7)
    assert len(schedule.entries) >= 10**4
    measured = schedule.cluster_interflap_mean()
    predicted = cluster_mttf(10**6, 1000)
    assert abs(measured - predicted) / predicted < 0.10


def test_inject_empty_schedule():
    sim = Simulator()
    assert inject(FlapSchedule([]), sim, ["link-0"]) == 0


def test_inject_entry_becomes_sever_restore_pair():
    sim = Simulator()
    params = FlapParams(mttf=100, links=1, seed=1, duration=7)
    schedule = generate_flap_schedule(params, horizon=300)
    n = inject(schedule, sim, ["link-0"])
    assert n == 2 * len(schedule.entries) > 0
    sim.run_to_quiescence()
    kinds = [ev.kind for ev in sim.trace]
    assert kinds.count("flap.sever") == kinds.count("flap.restore") == len(schedule.entries)


def test_inject_unknown_link_rejected():
    sim = Simulator()
    schedule = FlapSchedule([])
    params = FlapParams(mttf=100, links=2, seed=1)
    schedule = generate_flap_schedule(params, horizon=1000)
    with pytest.raises(ConfigurationError):
        inject(schedule, sim, ["only-one"])


def test_csv_round_trip():
    params = FlapParams(mttf=1000, links=3, seed=9)
    schedule = generate_flap_schedule(params, horizon=10**5)
    text = schedule.to_csv()
    assert FlapSchedule.from_csv(text) == schedule


def test_shared_schedule_identical_disturbance_subtrace():
    # The same schedule injected first into two separate simulations gives a
    # byte-identical disturbance sub-trace regardless of later activity.
    params = FlapParams(mttf=5000, links=1, seed=4, duration=100)
    schedule = generate_flap_schedule(params, horizon=10**5)

    def disturbance_lines(extra_activity):
        sim = Simulator(seed=1)
        inject(schedule, sim, ["link-0"])
        if extra_activity:
            sim.schedule(10, "other", "noise")
        sim.run_to_quiescence()
        return [
            ev.trace_line()
            for ev in sim.trace
            if ev.kind.startswith("flap.")
        ]

    assert disturbance_lines(False) == disturbance_lines(True)


def test_params_validation():
    with pytest.raises(ValueError):
        FlapParams(mttf=0, links=1)
    with pytest.raises(ValueError):
        FlapParams(mttf=10, links=0)
    with pytest.raises(ValueError):
        FlapParams(mttf=10, links=1, duration_kind="weird")
