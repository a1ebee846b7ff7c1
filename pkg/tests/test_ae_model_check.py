from oaesim.modelcheck import WORKLOADS, explore_single_disturbance


def test_exhaustive_single_disturbance_exploration_is_clean():
    report = explore_single_disturbance()
    assert report.runs > 300
    assert report.states_checked > 5_000
    assert report.violations == []


def test_workloads_cover_one_to_three_tokens_and_both_directions():
    sizes = {len(w) for w in WORKLOADS.values()}
    assert sizes == {1, 2, 3}
    initiators = {node for w in WORKLOADS.values() for _, node in w}
    assert initiators == {"A", "B"}
