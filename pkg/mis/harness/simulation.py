"""
Deterministic replay of scenarios through a booted mesh, and a synthetic
load generator for the broker. All time is virtual and owned here: services
only ever see the timestamps that travel in the envelopes.
"""
import logging
import random
from collections import deque
from dataclasses import dataclass, field

from mis.harness.mesh import Mesh, BROKER_ID, GATEWAY_ID
from mis.harness.transport import InprocTransport, LoopbackServer, ServiceClient, TcpTransport
from mis.services.broker import Broker, ScalePolicy
from mis.structures.clock import VirtualClock
from mis.structures.data import ModalEvent, TurnReport
from mis.utils import DONE, FAILED, GROW, SHRINK, REGISTRY_ADDRESS
from mis.utils.codec import canonical_dumps
from mis.utils.errors import ConfigError

logger = logging.getLogger(__name__)

HARNESS_ID = 'harness'
TRANSPORTS = ('inproc', 'tcp')
LOAD_WORDS = ('put', 'that', 'there', 'move', 'delete', 'this')


@dataclass
class RunReport:
    """
    The outcome of one scenario run. ``timeline`` holds (tick, modality,
    event) for every broker tick and ``registry_log`` (time, action,
    service_id, kind) for every registry change.
    """
    scenario: str
    seed: int
    config: dict
    turns: list = field(default_factory=list)
    timeline: list = field(default_factory=list)
    registry_log: list = field(default_factory=list)
    initial_instances: dict = field(default_factory=dict)

    def max_instances(self):
        """Largest pool size per modality, replayed from the scaling timeline."""
        sizes = dict(self.initial_instances)
        peaks = dict(sizes)
        for _, modality, event in self.timeline:
            if event == GROW:
                sizes[modality] += 1
            elif event == SHRINK:
                sizes[modality] -= 1
            peaks[modality] = max(peaks[modality], sizes[modality])
        return peaks

    def failures(self):
        return sum(1 for t in self.turns if t.phase == FAILED)

    def totals(self):
        return {
            'turns': len(self.turns),
            'done': sum(1 for t in self.turns if t.phase == DONE),
            'failures': self.failures(),
            'max_instances': self.max_instances(),
        }

    def to_document(self):
        return {
            'scenario': self.scenario,
            'seed': self.seed,
            'config': dict(self.config),
            'turns': [t.to_document() for t in self.turns],
            'scaling_timeline': [list(entry) for entry in self.timeline],
            'registry_log': [list(entry) for entry in self.registry_log],
            'totals': self.totals(),
        }

    def to_bytes(self):
        """The canonical report file contents."""
        return (canonical_dumps(self.to_document()) + '\n').encode('utf-8')


class _Replay:
    """
    Feeds a scenario to the gateway while ticking the mesh every tick_ms of
    virtual time: silence poll, broker autoscaling, lease renewal.
    """
    def __init__(self, mesh, client, config):
        self.mesh = mesh
        self.client = client
        self.config = config
        self.clock = VirtualClock()
        self.next_tick = config.tick_ms
        self.last_renewal = 0
        self.ticks = 0
        self.turns = []
        self.timeline = []

    def run(self, scenario, seed):
        snapshot = self.client.call(BROKER_ID, 'broker.snapshot', {})
        initial = {pool['modality']: len(pool['instances']) for pool in snapshot['pools']}

        for event in scenario.events:
            self._advance(event.t_start)
            self._collect(self.client.call(GATEWAY_ID, 'ingest', {'event': event.to_document(), 'now': self.clock.now},
                                           session_id=event.session_id))
        self._collect(self.client.call(GATEWAY_ID, 'close', {'now': self.clock.now}))

        log = self.client.call(REGISTRY_ADDRESS, 'log', {})['log']
        logger.info('scenario %s: %d turns over %d ticks', scenario.name, len(self.turns), self.ticks)
        return RunReport(scenario=scenario.name, seed=seed, config=self.config.to_document(), turns=self.turns,
                         timeline=self.timeline, registry_log=[tuple(entry) for entry in log],
                         initial_instances=initial)

    def _advance(self, t):
        while self.next_tick <= t:
            self.clock.advance_to(self.next_tick)
            self._tick(self.next_tick)
            self.next_tick += self.config.tick_ms
        self.clock.advance_to(t)

    def _tick(self, now):
        self.ticks += 1
        self._collect(self.client.call(GATEWAY_ID, 'poll', {'now': now}))
        for modality, event in self.client.call(BROKER_ID, 'tick', {'now': now})['events']:
            self.timeline.append((self.ticks, modality, event))
        if now - self.last_renewal >= self.config.lease_ttl_ms // 2:
            self.mesh.renew(now)
            self.last_renewal = now

    def _collect(self, body):
        self.turns.extend(TurnReport.from_document(t) for t in body['turns'])


def run_scenario(scenario, grammar, lexicon, profiles, rules, config, seed=0, transport='inproc'):
    """
    Boots a mesh, replays the scenario on the virtual clock and reports what
    happened. Runs with equal inputs give byte-identical reports, whichever
    transport carries the harness requests.

    :type scenario: mis.structures.data.Scenario
    :type grammar: mis.services.interpretation.Grammar
    :type lexicon: list[mis.services.recognition.LexiconEntry]
    :param profiles: one UserProfile or several, see Mesh
    :type rules: list[mis.services.knowledge.HornRule]
    :type config: mis.utils.config.MeshConfig
    :param seed: recorded in the report; the pipeline itself draws no random numbers
    :type seed: int
    :param transport: 'inproc' or 'tcp' (loopback server on a free port)
    :rtype: RunReport
    """
    config.validate()
    if transport not in TRANSPORTS:
        raise ConfigError('unknown transport {}'.format(transport))
    mesh = Mesh(config, grammar, lexicon, profiles, rules, channels=scenario.all_channels())

    if transport == 'inproc':
        mesh.boot(0)
        return _Replay(mesh, ServiceClient(InprocTransport(mesh.dispatcher), HARNESS_ID), config).run(scenario, seed)

    with LoopbackServer(mesh.dispatcher) as server:
        mesh.boot(0, endpoint_base='tcp://127.0.0.1:{}/'.format(server.port))
        client = ServiceClient(TcpTransport('127.0.0.1', server.port), HARNESS_ID)
        try:
            return _Replay(mesh, client, config).run(scenario, seed)
        finally:
            client.close()


def parse_schedule(text):
    """
    Expands a schedule such as '0x5,10x20,0x60' (rate x ticks segments) to
    one arrival count per tick. A bare number is a single tick.

    :rtype: list[int]
    """
    schedule = []
    for segment in filter(None, (s.strip() for s in text.split(','))):
        rate, _, ticks = segment.partition('x')
        try:
            rate, ticks = int(rate), int(ticks or 1)
        except ValueError:
            raise ConfigError('bad schedule segment "{}"'.format(segment))
        if rate < 0 or ticks < 0:
            raise ConfigError('schedule segment "{}" is negative'.format(segment))
        schedule.extend([rate] * ticks)
    return schedule


def run_load(schedule, config, modality='speech', seed=0):
    """
    Drives one broker pool with synthetic events. Every tick: the scheduled
    arrivals are assigned, the pool autoscales, then each instance serves up
    to config.service_rate queued events.

    :param schedule: arrivals per tick
    :type schedule: list[int]
    :type config: mis.utils.config.MeshConfig
    :param seed: picks the words of the synthetic events
    :return: (tick, event) for every tick, ticks counted from 1
    :rtype: list[(int, str)]
    """
    if any(arrivals < 0 for arrivals in schedule):
        raise ValueError('schedule must be non-negative')
    config.validate()
    rng = random.Random(seed)
    broker = Broker(ScalePolicy(config.q_hi, config.q_lo, config.window_w), config.min_instances, config.max_instances)
    pool = broker.add_pool(modality)
    queues = {}
    timeline = []

    for tick, arrivals in enumerate(schedule, 1):
        now = tick * config.tick_ms
        for _ in range(arrivals):
            event = ModalEvent('load', modality, {'word': rng.choice(LOAD_WORDS)}, now, now)
            queues.setdefault(broker.assign(modality), deque()).append(event)

        (_, event), = broker.tick(now)
        timeline.append((tick, event))

        for instance in sorted(pool.instances, key=lambda i: i.instance_id):
            for _ in range(min(config.service_rate, instance.queue_depth)):
                queues[instance.instance_id].popleft()
                broker.complete(modality, instance.instance_id)

    logger.info('load run of %d ticks ended with %d %s instances', len(schedule), len(pool.instances), modality)
    return timeline
