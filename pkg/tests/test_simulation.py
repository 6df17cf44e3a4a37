import random

import pytest

from tests.context import mis, put_that_there, event
from mis.harness.simulation import RunReport, parse_schedule, run_load, run_scenario
from mis.structures.data import Scenario
from mis.utils import DONE, FAILED, GROW, HOLD, SHRINK
from mis.utils.config import MeshConfig
from mis.utils.errors import ConfigError


def run_put_that_there(**kwargs):
    scenario, grammar, lexicon, profile, rules = put_that_there()
    return run_scenario(scenario, grammar, lexicon, profile, rules, MeshConfig(), **kwargs)


def test_put_that_there_replay():
    report = run_put_that_there()
    assert len(report.turns) == 1
    turn = report.turns[0]
    assert turn.phase == DONE and turn.closed_at == 2050
    assert turn.interpretation.act == 'PUT_THERE'
    assert turn.interpretation.slots == {'obj': '120,45', 'loc': '300,210'}
    assert report.totals() == {'turns': 1, 'done': 1, 'failures': 0,
                               'max_instances': {'gesture': 1, 'speech': 1}}
    assert [entry[1] for entry in report.registry_log] == ['publish'] * 8
    assert {entry[2] for entry in report.timeline} == {HOLD}


def test_replays_are_byte_identical():
    first = run_put_that_there().to_bytes()
    assert run_put_that_there().to_bytes() == first
    assert run_put_that_there().to_bytes() == first
    assert first.endswith(b'\n') and first.count(b'\n') == 1


def test_transports_give_the_same_report():
    assert run_put_that_there(transport='tcp').to_bytes() == run_put_that_there(transport='inproc').to_bytes()


def test_unknown_transport():
    with pytest.raises(ConfigError):
        run_put_that_there(transport='carrier-pigeon')


def test_seed_is_only_recorded():
    assert run_put_that_there(seed=5).to_document()['seed'] == 5
    assert run_put_that_there(seed=5).turns == run_put_that_there(seed=6).turns


def test_report_document_layout():
    document = run_put_that_there().to_document()
    assert sorted(document) == ['config', 'registry_log', 'scaling_timeline', 'scenario', 'seed', 'totals', 'turns']
    assert document['scenario'] == 'put_that_there'
    assert document['config']['tau_end_ms'] == 1000
    assert 'theta' not in document['config']


def test_empty_scenario():
    _, grammar, lexicon, profile, rules = put_that_there()
    report = run_scenario(Scenario('empty'), grammar, lexicon, profile, rules, MeshConfig())
    assert report.turns == [] and report.timeline == []
    assert report.totals()['max_instances'] == {'gesture': 1, 'speech': 1}


def test_unrecognized_turn_is_counted_as_a_failure():
    _, grammar, lexicon, profile, rules = put_that_there()
    scenario = Scenario('hmm', (event('speech', 0, 100, end_turn=True, word='hmm'),))
    report = run_scenario(scenario, grammar, lexicon, profile, rules, MeshConfig())
    assert [(t.phase, t.failure_reason) for t in report.turns] == [(FAILED, 'NO_TOKENS')]
    assert report.failures() == 1


def test_short_leases_are_renewed():
    scenario, grammar, lexicon, profile, rules = put_that_there()
    report = run_scenario(scenario, grammar, lexicon, profile, rules, MeshConfig(lease_ttl_ms=400))
    actions = [entry[1] for entry in report.registry_log]
    assert 'expire' not in actions and 'renew' in actions
    assert report.turns[0].phase == DONE


def test_max_instances_replays_the_timeline():
    report = RunReport('x', 0, {}, timeline=[(1, 'speech', GROW), (2, 'speech', GROW), (3, 'speech', SHRINK)],
                       initial_instances={'speech': 1, 'gesture': 2})
    assert report.max_instances() == {'speech': 3, 'gesture': 2}


def test_parse_schedule():
    assert parse_schedule('0x2,3,1x3') == [0, 0, 3, 1, 1, 1]
    assert parse_schedule('') == []
    for bad in ('ax2', '1x-2', '-1', '2xy'):
        with pytest.raises(ConfigError):
            parse_schedule(bad)


def test_idle_load_only_holds():
    timeline = run_load([0] * 10, MeshConfig())
    assert timeline == [(tick, HOLD) for tick in range(1, 11)]


def test_average_depth_equal_to_q_hi_does_not_grow():
    timeline = run_load([4] * 20, MeshConfig(service_rate=4))
    assert {e for _, e in timeline} == {HOLD}


def test_negative_arrivals():
    with pytest.raises(ValueError):
        run_load([1, -1], MeshConfig())


def pool_sizes(timeline, start):
    sizes = [start]
    for _, e in timeline:
        sizes.append(sizes[-1] + {GROW: 1, SHRINK: -1}.get(e, 0))
    return sizes


def test_step_load_grows_to_max_and_drains_back():
    config = MeshConfig(q_hi=4, q_lo=1, window_w=3, min_instances=1, max_instances=8, service_rate=1)
    timeline = run_load(parse_schedule('0x5,10x20,0x60'), config)

    assert len(timeline) == 85
    # ten arrivals a tick against one served per instance: the average stays
    # above q_hi, so the pool grows every window_w ticks from tick 8 on
    assert [tick for tick, e in timeline if e == GROW] == [8, 11, 14, 17, 20, 23, 26]
    assert all(e == HOLD for tick, e in timeline if tick < 8)
    assert all(tick > 26 for tick, e in timeline if e == SHRINK)

    sizes = pool_sizes(timeline, config.min_instances)
    assert max(sizes) == config.max_instances
    assert all(config.min_instances <= s <= config.max_instances for s in sizes)
    assert sizes[-1] == config.min_instances


def test_load_without_service_saturates():
    config = MeshConfig(max_instances=3, service_rate=0)
    timeline = run_load([5] * 30, config)
    assert [e for _, e in timeline].count(GROW) == 2
    assert SHRINK not in {e for _, e in timeline}


def test_load_is_seed_independent():
    schedule = parse_schedule('0x2,8x10,0x20')
    assert run_load(schedule, MeshConfig(), seed=1) == run_load(schedule, MeshConfig(), seed=2)


def replay_policy(schedule, config, modality='speech'):
    """
    Hand replay of the load loop on plain integers: arrivals go one by one to
    the shortest queue, the pool scales on the depths after arrival, then
    every instance serves up to service_rate.
    """
    def name(index):
        return '{}-{}'.format(modality, index)

    depth = {index: 0 for index in range(1, config.min_instances + 1)}
    created = config.min_instances
    streak = 0
    timeline = []
    for tick, arrivals in enumerate(schedule, 1):
        for _ in range(arrivals):
            depth[min(depth, key=lambda i: (depth[i], name(i)))] += 1

        average = sum(depth.values()) / len(depth)
        streak = streak + 1 if average > config.q_hi else 0
        idle = [i for i in depth if depth[i] == 0]
        if streak >= config.window_w and len(depth) < config.max_instances:
            created += 1
            depth[created] = 0
            streak = 0
            timeline.append((tick, GROW))
        elif average < config.q_lo and idle and len(depth) > config.min_instances:
            del depth[max(idle, key=name)]
            timeline.append((tick, SHRINK))
        else:
            timeline.append((tick, HOLD))

        for index in depth:
            depth[index] -= min(config.service_rate, depth[index])
    return timeline


def test_step_load_timeline_equals_the_hand_replay():
    config = MeshConfig(q_hi=4, q_lo=1, window_w=3, min_instances=1, max_instances=8, service_rate=1)
    schedule = parse_schedule('0x5,10x20,0x60')
    assert run_load(schedule, config) == replay_policy(schedule, config)


def test_pool_settles_at_the_smallest_size_that_keeps_up():
    config = MeshConfig(q_hi=4, q_lo=1, window_w=3, min_instances=1, max_instances=8, service_rate=10)
    timeline = run_load(parse_schedule('10x30,0x10'), config)

    assert timeline == replay_policy(parse_schedule('10x30,0x10'), config)
    assert [tick for tick, e in timeline if e == GROW] == [3, 6]
    assert [tick for tick, e in timeline if e == SHRINK] == [31, 32]
    sizes = pool_sizes(timeline, config.min_instances)
    # ten arrivals over three instances is the first average at or below q_hi
    assert set(sizes[6:31]) == {3} and 3 < config.max_instances
    assert sizes[-1] == config.min_instances


def test_random_loads_follow_the_hand_replay():
    rng = random.Random(12)
    for _ in range(40):
        q_lo = rng.randint(0, 3)
        min_instances = rng.randint(1, 3)
        config = MeshConfig(q_hi=q_lo + rng.randint(1, 4), q_lo=q_lo, window_w=rng.randint(1, 4),
                            min_instances=min_instances, max_instances=min_instances + rng.randint(0, 6),
                            service_rate=rng.randint(0, 4))
        schedule = [rng.choice([0, 0, 1, 3, 8, 15]) for _ in range(rng.randint(1, 60))]
        assert run_load(schedule, config) == replay_policy(schedule, config)
