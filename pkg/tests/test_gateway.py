import dataclasses
import random

import pytest

from tests.context import mis, put_that_there, event
from mis.harness.mesh import Mesh, FUSION_ID, GATEWAY_ID
from mis.harness.transport import InprocTransport, LoopbackServer, ServiceClient, TcpTransport
from mis.services.gateway import (GatewayConfig, GatewayService, Session, TurnState, ingest_event, mesh_check,
                                  silence_expired)
from mis.services.interpretation import Grammar
from mis.services.knowledge import UserProfile
from mis.structures.data import Envelope, TurnReport
from mis.utils import (COLLECTING, RECOGNIZING, FUSING, INTERPRETING, RESPONDING, DONE, FAILED, FUSION,
                       RECOGNIZER, BOOST_MULTIPLIER)
from mis.utils.config import MeshConfig
from mis.utils.errors import GatewayError, MISError

CFG = GatewayConfig(tau_end_ms=1000)


def test_first_event_is_buffered():
    session = Session('s1')
    assert ingest_event(session, event('speech', 0, 300, word='put'), 0, CFG) == []
    assert len(session.events) == 1 and session.last_event_time == 300


def test_end_turn_emits_the_buffer():
    session = Session('s1')
    ingest_event(session, event('speech', 0, 300, word='put'), 0, CFG)
    turns = ingest_event(session, event('gesture', 100, 200, end_turn=True, type='point'), 100, CFG)
    assert [[e.channel for e in turn] for turn in turns] == [['speech', 'gesture']]
    assert session.events == []


def test_silence_gap_closes_the_previous_turn():
    session = Session('s1')
    ingest_event(session, event('speech', 0, 300, word='put'), 0, CFG)
    turns = ingest_event(session, event('speech', 1800, 1900, word='that'), 1800, CFG)
    assert [[e.t_start for e in turn] for turn in turns] == [[0]]
    assert [e.t_start for e in session.events] == [1800]


def test_gap_of_exactly_tau_keeps_the_turn_open():
    session = Session('s1')
    ingest_event(session, event('speech', 0, 300, word='put'), 0, CFG)
    assert ingest_event(session, event('speech', 1300, 1400, word='that'), 1300, CFG) == []


def test_gap_and_end_turn_on_one_event():
    session = Session('s1')
    ingest_event(session, event('speech', 0, 300, word='put'), 0, CFG)
    turns = ingest_event(session, event('speech', 5000, 5100, end_turn=True, word='that'), 5000, CFG)
    assert [len(turn) for turn in turns] == [1, 1]


def test_buffer_stays_ordered_by_start():
    session = Session('s1')
    ingest_event(session, event('speech', 100, 300, word='that'), 100, CFG)
    ingest_event(session, event('gesture', 50, 150, type='point'), 100, CFG)
    assert [e.t_start for e in session.events] == [50, 100]


def test_closed_and_foreign_sessions():
    session = Session('s1', closed=True)
    with pytest.raises(GatewayError) as e:
        ingest_event(session, event('speech', 0, 1), 0, CFG)
    assert e.value.code == 'SESSION_CLOSED'
    with pytest.raises(GatewayError) as e:
        ingest_event(Session('s1'), event('speech', 0, 1, session='s2'), 0, CFG)
    assert e.value.code == 'SESSION_MISMATCH'


def test_silence_expiry():
    session = Session('s1')
    ingest_event(session, event('speech', 0, 300), 0, CFG)
    assert not silence_expired(session, 1300, CFG)
    assert silence_expired(session, 1301, CFG)
    assert not silence_expired(Session('s2'), 10 ** 6, CFG)


def test_turn_state_transitions():
    state = TurnState()
    for phase in (RECOGNIZING, FUSING, INTERPRETING, RESPONDING, DONE):
        state.advance(phase)
    with pytest.raises(GatewayError):
        state.fail('NO_MATCH')

    state = TurnState()
    with pytest.raises(GatewayError) as e:
        state.advance(FUSING)
    assert e.value.code == 'ILLEGAL_TRANSITION'
    state.advance(RECOGNIZING)
    state.fail('NO_TOKENS')
    assert (state.phase, state.failure_reason) == (FAILED, 'NO_TOKENS')
    with pytest.raises(GatewayError):
        state.advance(FUSING)


class RecordingManager:
    def __init__(self):
        self.turns = []
        self.users = []

    def run_turn(self, session_id, turn, events, closed_at, user_id=''):
        self.turns.append((session_id, [(e.channel, e.t_start) for e in events]))
        self.users.append(user_id)
        return TurnReport(session_id, turn, closed_at, len(events))


def random_events(rng):
    events = []
    t = 0
    for _ in range(rng.randint(1, 20)):
        t += rng.choice([0, 50, 200, 800, 1000, 1200, 3000])
        events.append(event(rng.choice(['speech', 'gesture']), t, t + rng.randint(0, 300),
                            session=rng.choice(['s1', 's2']), end_turn=rng.random() < 0.1))
    return events


def test_polling_gives_the_same_partition_as_ingesting():
    rng = random.Random(11)
    for _ in range(100):
        events = random_events(rng)

        by_ingest = GatewayService(GATEWAY_ID, RecordingManager(), CFG)
        for e in events:
            by_ingest.ingest(e, e.t_start)
        by_ingest.close(events[-1].t_start)

        by_poll = GatewayService(GATEWAY_ID, RecordingManager(), CFG)
        next_tick = 100
        for e in events:
            while next_tick <= e.t_start:
                by_poll.poll(next_tick)
                next_tick += 100
            by_poll.ingest(e, e.t_start)
        by_poll.close(events[-1].t_start)

        for sid in ('s1', 's2'):
            assert [t for s, t in by_ingest.manager.turns if s == sid] == \
                [t for s, t in by_poll.manager.turns if s == sid]


def test_gateway_service_operations():
    service = GatewayService(GATEWAY_ID, RecordingManager(), CFG)

    def call(operation, body):
        return service.handle(Envelope('m', '', '', 'harness', GATEWAY_ID, operation, body))

    assert call('ingest', {'event': event('speech', 0, 300).to_document(), 'now': 0}) == {'turns': []}
    assert call('poll', {'now': 1000}) == {'turns': []}
    assert [t['turn'] for t in call('poll', {'now': 1301})['turns']] == [1]
    call('ingest', {'event': event('speech', 2000, 2100).to_document(), 'now': 2000})
    assert [t['turn'] for t in call('close', {'now': 2200, 'session': 's1'})['turns']] == [2]
    assert [t['turn'] for t in call('report', {})['turns']] == [1, 2]
    with pytest.raises(GatewayError):
        call('ingest', {'event': event('speech', 3000, 3100).to_document(), 'now': 3000})


def booted_mesh(grammar=None, lexicon=None):
    scenario, packaged_grammar, packaged_lexicon, profile, rules = put_that_there()
    mesh = Mesh(MeshConfig(), grammar or packaged_grammar, packaged_lexicon if lexicon is None else lexicon, profile, rules,
                channels=scenario.all_channels())
    return mesh.boot(0), scenario


def test_mesh_check():
    mesh, _ = booted_mesh()
    assert mesh_check(mesh.registry, GATEWAY_ID, ['speech', 'gesture']) == (True, [])
    assert mesh_check(mesh.registry, GATEWAY_ID, ['speech', 'sketch']) == (False, ['{}:sketch'.format(RECOGNIZER)])
    mesh.registry.deregister(FUSION_ID, 10)
    assert mesh_check(mesh.registry, GATEWAY_ID, ['speech']) == (False, [FUSION])
    mesh.registry.deregister('speech-1', 10)
    assert mesh_check(mesh.registry, GATEWAY_ID, ['speech']) == (False, ['{}:speech'.format(RECOGNIZER), FUSION])


def test_put_that_there_turn_through_the_full_mesh():
    mesh, scenario = booted_mesh()
    report = mesh.gateway.manager.run_turn('s1', 1, list(scenario.events), 2050)
    assert report.phase == DONE and report.failure_reason is None
    assert report.interpretation.act == 'PUT_THERE'
    assert report.interpretation.slots == {'obj': '120,45', 'loc': '300,210'}
    assert [[t.symbol for t in terminal.tokens] for terminal in report.sentence.terminals] == \
        [['put'], ['point', 'that'], ['point', 'there']]
    assert [(a.channel, a.redundant) for a in report.plan.acts] == [('display', False), ('speech', True)]
    assert report.plan.primary().content == 'PUT_THERE(loc=300,210,obj=120,45)'
    assert report.phases == [(COLLECTING, 2050), (RECOGNIZING, 2060), (FUSING, 2120), (INTERPRETING, 2130),
                             (RESPONDING, 2150), (DONE, 2170)]
    assert report.latencies == {COLLECTING: 10, RECOGNIZING: 60, FUSING: 10, INTERPRETING: 20, RESPONDING: 20}
    assert all(i.queue_depth == 0 for pool in mesh.broker.pools.values() for i in pool.instances)


def test_unrecognized_turn_fails_with_no_tokens():
    mesh, _ = booted_mesh()
    report = mesh.gateway.manager.run_turn('s1', 1, [event('speech', 0, 10, word='hmm')], 10)
    assert (report.phase, report.failure_reason) == (FAILED, 'NO_TOKENS')
    assert report.unrecognized == 1
    assert report.phases[-1] == (FAILED, 50)


def test_empty_grammar_fails_with_no_match():
    mesh, _ = booted_mesh(grammar=Grammar())
    report = mesh.gateway.manager.run_turn('s1', 1, [event('speech', 0, 10, word='put')], 10)
    assert (report.phase, report.failure_reason) == (FAILED, 'NO_MATCH')
    assert report.sentence is not None and report.interpretation is None


def test_incomplete_mesh_fails_before_recognition():
    mesh, scenario = booted_mesh()
    mesh.registry.deregister(FUSION_ID, 0)
    report = mesh.gateway.manager.run_turn('s1', 1, list(scenario.events), 2050)
    assert (report.phase, report.failure_reason) == (FAILED, 'MESH_INCOMPLETE')
    assert [phase for phase, _ in report.phases] == [COLLECTING, FAILED]


def test_body_missing_a_field_is_answered_with_an_error():
    mesh, _ = booted_mesh()
    client = ServiceClient(InprocTransport(mesh.dispatcher), 'client')
    with pytest.raises(MISError) as e:
        client.call(GATEWAY_ID, 'ingest', {'now': 0})
    assert e.value.code == 'MALFORMED_REQUEST'
    assert client.call(GATEWAY_ID, 'report', {}) == {'turns': []}


def test_bad_request_over_tcp_keeps_the_connection():
    mesh, _ = booted_mesh()
    bad = dict(event('speech', 0, 100, word='put').to_document(), t_start=500)
    with LoopbackServer(mesh.dispatcher) as server:
        client = ServiceClient(TcpTransport('127.0.0.1', server.port), 'client')
        try:
            with pytest.raises(MISError) as e:
                client.call(GATEWAY_ID, 'ingest', {'event': bad, 'now': 0})
            assert e.value.code == 'MALFORMED_REQUEST'
            assert client.call(GATEWAY_ID, 'report', {}) == {'turns': []}
        finally:
            client.close()


def shifted(events, offset_ms):
    return [dataclasses.replace(e, t_start=e.t_start + offset_ms, t_end=e.t_end + offset_ms) for e in events]


def ingest_over_tcp(mesh, events):
    with LoopbackServer(mesh.dispatcher) as server:
        client = ServiceClient(TcpTransport('127.0.0.1', server.port), 'client')
        try:
            turns = []
            for e in events:
                turns.extend(client.call(GATEWAY_ID, 'ingest', {'event': e.to_document(), 'now': e.t_start})['turns'])
            return [TurnReport.from_document(t) for t in turns]
        finally:
            client.close()


def test_served_mesh_renews_leases_from_client_time():
    mesh, scenario = booted_mesh()
    turns = ingest_over_tcp(mesh.keep_time(), shifted(scenario.events, 40000))
    assert [(t.phase, t.failure_reason) for t in turns] == [(DONE, None)]
    assert mesh.broker.ticks == 420
    assert 'expire' not in [action for _, action, _, _ in mesh.registry.log]


def test_mesh_without_a_clock_lets_leases_lapse():
    mesh, scenario = booted_mesh()
    turns = ingest_over_tcp(mesh, shifted(scenario.events, 40000))
    assert [(t.phase, t.failure_reason) for t in turns] == [(FAILED, 'MESH_INCOMPLETE')]


def test_advance_catches_up_once():
    mesh, _ = booted_mesh()
    mesh.advance(1000)
    mesh.advance(950)
    assert mesh.broker.ticks == 10
    mesh.advance(1099)
    assert mesh.broker.ticks == 10
    mesh.advance(16000)
    assert mesh.broker.ticks == 160
    assert [entry[:2] for entry in mesh.registry.log if entry[1] == 'renew'][0] == (15000, 'renew')


def test_sessions_are_bound_to_the_user_of_their_events():
    session = Session('s1')
    ingest_event(session, event('speech', 0, 10), 0, CFG)
    assert session.user_id == ''
    ingest_event(session, dataclasses.replace(event('speech', 20, 30), user_id='u2'), 20, CFG)
    ingest_event(session, event('speech', 40, 50), 40, CFG)
    assert session.user_id == 'u2'
    with pytest.raises(GatewayError) as e:
        ingest_event(session, dataclasses.replace(event('speech', 60, 70), user_id='u3'), 60, CFG)
    assert e.value.code == 'USER_MISMATCH'


def test_gateway_passes_the_session_user_to_the_manager():
    service = GatewayService(GATEWAY_ID, RecordingManager(), CFG)
    service.ingest(dataclasses.replace(event('speech', 0, 10, end_turn=True), user_id='u2'), 0)
    service.ingest(event('speech', 0, 10, session='s2', end_turn=True), 0)
    assert service.manager.users == ['u2', '']


def two_user_mesh():
    scenario, grammar, lexicon, profile, rules = put_that_there()
    listener = UserProfile('u2', (), {'speech': 0.9})
    mesh = Mesh(MeshConfig(), grammar, lexicon, [profile, listener], rules, channels=scenario.all_channels())
    return mesh.boot(0), scenario


def test_each_session_gets_its_users_boosts_and_output_channels():
    mesh, scenario = two_user_mesh()
    first = [dataclasses.replace(e, user_id='u1') for e in scenario.events]
    second = [dataclasses.replace(e, session_id='s2', user_id='u2') for e in shifted(scenario.events, 5000)]
    turns = []
    for e in first + second:
        turns.extend(mesh.gateway.ingest(e, e.t_start))

    assert [(t.session_id, t.user_id, t.phase) for t in turns] == [('s1', 'u1', DONE), ('s2', 'u2', DONE)]
    assert turns[0].interpretation.act == turns[1].interpretation.act == 'PUT_THERE'
    assert turns[0].interpretation.score == pytest.approx(turns[1].interpretation.score * BOOST_MULTIPLIER)
    assert [(a.channel, a.redundant) for a in turns[0].plan.acts] == [('display', False), ('speech', True)]
    assert [(a.channel, a.redundant) for a in turns[1].plan.acts] == [('speech', False)]


def test_unbound_sessions_use_the_first_profile():
    mesh, scenario = two_user_mesh()
    report = mesh.gateway.manager.run_turn('s1', 1, list(scenario.events), 2050)
    assert report.user_id == 'u1' and report.phase == DONE
    assert report.plan.primary().channel == 'display'


def test_unknown_user_fails_the_turn():
    mesh, scenario = two_user_mesh()
    report = mesh.gateway.manager.run_turn('s1', 1, list(scenario.events), 2050, user_id='u9')
    assert (report.phase, report.failure_reason) == (FAILED, 'UNKNOWN_USER')
    assert report.interpretation.act == 'PUT_THERE'
