"""
The I/OCM gateway and the interaction manager (MIMs) it hosts.

The gateway side buffers modal events per session and cuts them into turns,
either on an explicit end_turn marker or when the silence since the last
event exceeds tau_end_ms. The manager side runs one turn through the mesh:
recognition per channel on broker-assigned instances, fusion,
interpretation with knowledge boosts, then fission.
"""
import bisect
import logging
from dataclasses import dataclass, field

from mis.services.base import Service
from mis.structures.data import (AmbiguityReport, Interpretation, ModalEvent, MultimodalSentence, OutputPlan,
                                 ServiceDescriptor, TurnReport)
from mis.utils import (GATEWAY, BROKER, RECOGNIZER, FUSION, INTERPRETER, FISSION, KNOWLEDGE, REGISTRY_ADDRESS,
                       COLLECTING, RECOGNIZING, FUSING, INTERPRETING, RESPONDING, DONE, FAILED, PHASE_ORDER)
from mis.utils.errors import GatewayError, MISError

logger = logging.getLogger(__name__)

REQUIRED_KINDS = (BROKER, FUSION, INTERPRETER, FISSION, KNOWLEDGE)


@dataclass(frozen=True)
class GatewayConfig:
    tau_end_ms: int = 1000
    service_cost_ms: int = 10

    def __post_init__(self):
        if self.tau_end_ms <= 0:
            raise ValueError('tau_end_ms must be positive')


@dataclass
class Session:
    session_id: str
    events: list = field(default_factory=list)
    last_event_time: int = 0
    turn_counter: int = 0
    closed: bool = False
    user_id: str = ''

    def flush(self):
        events, self.events = self.events, []
        return events


def ingest_event(session, event, now, cfg):
    """
    Buffers one event and returns the turns it closes: the previous buffer
    when the silence gap before the event exceeds tau_end_ms, and the buffer
    including the event when it carries end_turn.

    :type session: Session
    :type event: mis.structures.data.ModalEvent
    :param now: virtual time of ingestion
    :type now: int
    :type cfg: GatewayConfig
    :return: closed turns, each a list of events, oldest first
    :rtype: list[list[mis.structures.data.ModalEvent]]
    """
    if session.closed:
        raise GatewayError('SESSION_CLOSED', session.session_id)
    if event.session_id != session.session_id:
        raise GatewayError('SESSION_MISMATCH', '{} sent to session {}'.format(event.session_id, session.session_id))
    if event.user_id:
        if session.user_id and session.user_id != event.user_id:
            raise GatewayError('USER_MISMATCH', 'session {} belongs to {}, not {}'
                               .format(session.session_id, session.user_id, event.user_id))
        session.user_id = event.user_id

    turns = []
    if session.events and event.t_start - session.last_event_time > cfg.tau_end_ms:
        turns.append(session.flush())

    starts = [e.t_start for e in session.events]
    session.events.insert(bisect.bisect_right(starts, event.t_start), event)
    if len(session.events) == 1:
        session.last_event_time = event.t_end
    else:
        session.last_event_time = max(session.last_event_time, event.t_end)

    if event.end_turn:
        turns.append(session.flush())
    return turns


def silence_expired(session, now, cfg):
    return bool(session.events) and now - session.last_event_time > cfg.tau_end_ms


class TurnState:
    """
    Phase of one turn. Phases only move forward one level at a time; any
    phase may fail.
    """
    def __init__(self):
        self.phase = COLLECTING
        self.failure_reason = None


    def advance(self, phase):
        if self.phase in (DONE, FAILED):
            raise GatewayError('ILLEGAL_TRANSITION', '{} is final'.format(self.phase))
        expected = PHASE_ORDER[PHASE_ORDER.index(self.phase) + 1]
        if phase != expected:
            raise GatewayError('ILLEGAL_TRANSITION', '{} -> {}'.format(self.phase, phase))
        self.phase = phase

    def fail(self, reason):
        if self.phase in (DONE, FAILED):
            raise GatewayError('ILLEGAL_TRANSITION', '{} is final'.format(self.phase))
        self.phase = FAILED
        self.failure_reason = reason


def missing_services(children, channels):
    """
    :param children: descriptors published under the gateway
    :type children: list[mis.structures.data.ServiceDescriptor]
    :param channels: the channels a turn uses
    :return: what is missing, e.g. ['RECOGNIZER:speech', 'FUSION']; empty when the mesh is complete
    :rtype: list[str]
    """
    kinds = {d.kind for d in children}
    modalities = {d.modality for d in children if d.kind == RECOGNIZER}
    missing = ['{}:{}'.format(RECOGNIZER, c) for c in sorted(set(channels)) if c not in modalities]
    missing.extend(kind for kind in REQUIRED_KINDS if kind not in kinds)
    return missing


def mesh_check(registry, gateway_id, channels, now=0):
    """
    :type registry: mis.services.registry.ServiceRegistry
    :return: (ok, missing)
    :rtype: (bool, list[str])
    """
    missing = missing_services(registry.children(gateway_id, now), channels)
    return not missing, missing


class InteractionManager:
    """
    Runs turns through the mesh. Every request goes out as an envelope via
    ``client``; each one costs service_cost_ms of virtual time, which is
    what the per-phase latencies of a report add up.

    :param client: sends requests, see mis.harness.transport.ServiceClient
    :param gateway_id: the gateway whose children form the mesh
    :type gateway_id: str
    :param user_id: the user whose profile and boosts apply to sessions not bound to one
    :type user_id: str
    :type cfg: GatewayConfig
    """
    def __init__(self, client, gateway_id, user_id, cfg):
        self.client = client
        self.gateway_id = gateway_id
        self.user_id = user_id
        self.cfg = cfg


    def run_turn(self, session_id, turn, events, closed_at, user_id=''):
        """
        :type events: list[mis.structures.data.ModalEvent]
        :param closed_at: virtual time the turn was closed
        :param user_id: the session's user, the default user when empty
        :rtype: mis.structures.data.TurnReport
        """
        report = TurnReport(session_id=session_id, turn=turn, closed_at=closed_at, event_count=len(events),
                            user_id=user_id or self.user_id)
        run = _TurnRun(self, report)
        try:
            self._orchestrate(run, events)
        except MISError as e:
            run.fail(e.code)
            logger.info('turn %s/%d failed: %s', session_id, turn, e)
        else:
            logger.info('turn %s/%d done: %s', session_id, turn, report.interpretation.act)
        return report

    def _orchestrate(self, run, events):
        channels = sorted({e.channel for e in events})
        children = [ServiceDescriptor.from_document(d) for d in
                    run.call(REGISTRY_ADDRESS, 'children', {'parent': self.gateway_id, 'now': run.report.closed_at})
                    ['descriptors']]
        missing = missing_services(children, channels)
        if missing:
            raise GatewayError('MESH_INCOMPLETE', ', '.join(missing))
        bound = {}
        for descriptor in children:
            bound.setdefault(descriptor.kind, descriptor.service_id)

        run.enter(RECOGNIZING)
        tokens = []
        for channel in channels:
            channel_events = [e.to_document() for e in events if e.channel == channel]
            instance_id = run.call(bound[BROKER], 'assign', {'modality': channel})['instance_id']
            try:
                result = run.call(instance_id, 'recognize', {'events': channel_events})
            finally:
                run.call(bound[BROKER], 'complete', {'modality': channel, 'instance_id': instance_id})
            tokens.extend(result['tokens'])
            run.report.unrecognized += len(result['unrecognized'])
        if not tokens:
            raise GatewayError('NO_TOKENS', 'no event of the turn was recognized')

        run.enter(FUSING)
        sentence = run.call(bound[FUSION], 'fuse', {'tokens': tokens})['sentence']
        run.report.sentence = MultimodalSentence.from_document(sentence)

        run.enter(INTERPRETING)
        boosts = run.call(bound[KNOWLEDGE], 'boosts', {'user_id': run.report.user_id})['boosts']
        result = run.call(bound[INTERPRETER], 'interpret', {'sentence': sentence, 'boosts': boosts})
        run.report.interpretation = Interpretation.from_document(result['interpretation'])
        run.report.ambiguity = AmbiguityReport.from_document(result['ambiguity'])

        run.enter(RESPONDING)
        profile = run.call(bound[KNOWLEDGE], 'profile', {'user_id': run.report.user_id})['profile']
        output = run.call(bound[FISSION], 'fission', {'interpretation': result['interpretation'], 'profile': profile})
        run.report.plan = OutputPlan.from_document(output['plan'])

        run.enter(DONE)


class _TurnRun:
    """Book-keeping of one turn: state machine, virtual cursor, latencies."""

    def __init__(self, manager, report):
        self.manager = manager
        self.report = report
        self.state = TurnState()
        self.cursor = report.closed_at
        report.phases.append((COLLECTING, self.cursor))
        report.latencies[COLLECTING] = 0

    def call(self, to_service, operation, body):
        self.cursor += self.manager.cfg.service_cost_ms
        self.report.latencies[self.state.phase] += self.manager.cfg.service_cost_ms
        return self.manager.client.call(to_service, operation, body, session_id=self.report.session_id)

    def enter(self, phase):
        self.state.advance(phase)
        self.report.phase = phase
        self.report.phases.append((phase, self.cursor))
        if phase != DONE:
            self.report.latencies[phase] = 0

    def fail(self, reason):
        self.state.fail(reason)
        self.report.phase = FAILED
        self.report.failure_reason = reason
        self.report.phases.append((FAILED, self.cursor))


class GatewayService(Service):
    """
    The I/OCM facing users and devices: sessions, turn segmentation, and the
    reports of every turn run so far.
    """
    kind = GATEWAY

    def __init__(self, service_id, manager, cfg):
        super().__init__(service_id)
        self.manager = manager
        self.cfg = cfg
        self.sessions = {}
        """session_id -> Session"""
        self.reports = []
        """TurnReports in the order the turns closed"""
        self.on_time = None
        """if set, called with ``now`` before every ingest and poll"""


    def ingest(self, event, now):
        self._observe(now)
        session = self.sessions.setdefault(event.session_id, Session(event.session_id))
        return [self._run(session, events, now) for events in ingest_event(session, event, now, self.cfg)]

    def poll(self, now):
        """Closes every turn whose silence gap has expired at ``now``."""
        self._observe(now)
        return [self._run(self.sessions[sid], self.sessions[sid].flush(), now)
                for sid in sorted(self.sessions) if silence_expired(self.sessions[sid], now, self.cfg)]

    def close(self, now, session_id=None):
        """Flushes and closes one session, or every session when no id is given."""
        reports = []
        for sid in sorted(self.sessions) if session_id is None else [session_id]:
            session = self.sessions.get(sid)
            if session is None or session.closed:
                continue
            if session.events:
                reports.append(self._run(session, session.flush(), now))
            session.closed = True
        return reports

    def _observe(self, now):
        if self.on_time is not None:
            self.on_time(now)

    def _run(self, session, events, now):
        session.turn_counter += 1
        logger.info('session %s: turn %d closed with %d events', session.session_id, session.turn_counter, len(events))
        report = self.manager.run_turn(session.session_id, session.turn_counter, events, now, session.user_id)
        self.reports.append(report)
        return report

    def operations(self):
        return {
            'ingest': lambda body: self._turns(self.ingest(ModalEvent.from_document(body['event']), body['now'])),
            'poll': lambda body: self._turns(self.poll(body['now'])),
            'close': lambda body: self._turns(self.close(body['now'], body.get('session'))),
            'report': lambda body: self._turns(self.reports),
        }

    @staticmethod
    def _turns(reports):
        return {'turns': [r.to_document() for r in reports]}
