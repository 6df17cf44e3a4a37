import logging
import threading
from dataclasses import dataclass, field

from mis.services.base import Service
from mis.utils import BROKER, GROW, SHRINK, HOLD
from mis.utils.errors import BrokerError

logger = logging.getLogger(__name__)


@dataclass
class Instance:
    instance_id: str
    queue_depth: int = 0


@dataclass
class InstancePool:
    """
    The recognizer instances serving one modality. ``hi_streak`` counts the
    consecutive ticks the average queue depth stayed above q_hi.
    """
    modality: str
    instances: list = field(default_factory=list)
    min_instances: int = 1
    max_instances: int = 8
    hi_streak: int = 0
    next_index: int = 1

    def __post_init__(self):
        if not 1 <= self.min_instances <= self.max_instances:
            raise ValueError('pool bounds must satisfy 1 <= min <= max')
        while len(self.instances) < self.min_instances:
            self.instances.append(Instance(self.fresh_id()))

    def fresh_id(self):
        instance_id = '{}-{}'.format(self.modality, self.next_index)
        self.next_index += 1
        return instance_id

    def get(self, instance_id):
        for instance in self.instances:
            if instance.instance_id == instance_id:
                return instance
        raise BrokerError('UNKNOWN_INSTANCE', instance_id)

    def total_depth(self):
        return sum(i.queue_depth for i in self.instances)

    def to_document(self):
        return {
            'modality': self.modality,
            'instances': [[i.instance_id, i.queue_depth] for i in self.instances],
            'min_instances': self.min_instances,
            'max_instances': self.max_instances,
            'hi_streak': self.hi_streak,
        }


@dataclass(frozen=True)
class ScalePolicy:
    q_hi: int = 4
    q_lo: int = 1
    window_w: int = 3

    def __post_init__(self):
        if self.q_lo >= self.q_hi:
            raise ValueError('q_lo must be smaller than q_hi')
        if self.window_w < 1:
            raise ValueError('window_w must be at least 1')


def assign(pool):
    """
    Picks the least loaded instance (lowest instance id on ties) and queues
    one item on it.

    :type pool: InstancePool
    :return: the chosen instance id
    :rtype: str
    """
    if not pool.instances:
        raise BrokerError('EMPTY_POOL', pool.modality)
    chosen = min(pool.instances, key=lambda i: (i.queue_depth, i.instance_id))
    chosen.queue_depth += 1
    return chosen.instance_id


def complete(pool, instance_id):
    instance = pool.get(instance_id)
    if instance.queue_depth < 1:
        raise BrokerError('UNDERFLOW', instance_id)
    instance.queue_depth -= 1
    return pool


def autoscale_tick(pool, policy):
    """
    One autoscaling decision. GROW needs the average depth above q_hi for
    window_w consecutive ticks and wins over SHRINK; SHRINK only ever removes
    an idle instance.

    :type pool: InstancePool
    :type policy: ScalePolicy
    :return: the pool and one of GROW, SHRINK, HOLD
    :rtype: (InstancePool, str)
    """
    avg = pool.total_depth() / len(pool.instances)
    if avg > policy.q_hi:
        pool.hi_streak += 1
    else:
        pool.hi_streak = 0

    if pool.hi_streak >= policy.window_w and len(pool.instances) < pool.max_instances:
        pool.instances.append(Instance(pool.fresh_id()))
        pool.hi_streak = 0
        return pool, GROW

    idle = [i for i in pool.instances if i.queue_depth == 0]
    if avg < policy.q_lo and idle and len(pool.instances) > pool.min_instances:
        victim = max(idle, key=lambda i: i.instance_id)
        pool.instances.remove(victim)
        return pool, SHRINK

    return pool, HOLD


class Broker:
    """
    Owns one InstancePool per modality and records every tick's decision.

    :param policy: the autoscaling policy shared by all pools
    :type policy: ScalePolicy
    :param on_scale: called as on_scale(modality, event, instance_id, now) after GROW and SHRINK
    :type on_scale: callable
    """
    def __init__(self, policy, min_instances=1, max_instances=8, on_scale=None):
        self.policy = policy
        self.min_instances = min_instances
        self.max_instances = max_instances
        self.on_scale = on_scale
        self.pools = {}
        """modality -> InstancePool"""
        self.timeline = []
        """(tick, modality, event) for every tick of every pool"""
        self.ticks = 0
        self._lock = threading.Lock()


    def add_pool(self, modality):
        with self._lock:
            if modality not in self.pools:
                self.pools[modality] = InstancePool(modality, min_instances=self.min_instances,
                                                    max_instances=self.max_instances)
            return self.pools[modality]

    def pool(self, modality):
        try:
            return self.pools[modality]
        except KeyError:
            raise BrokerError('UNKNOWN_POOL', modality)

    def assign(self, modality):
        with self._lock:
            return assign(self.pool(modality))

    def complete(self, modality, instance_id):
        with self._lock:
            complete(self.pool(modality), instance_id)

    def tick(self, now=0):
        """
        Runs autoscale_tick on every pool, modalities in lexicographic order.

        :return: (modality, event) per pool
        :rtype: list
        """
        with self._lock:
            self.ticks += 1
            events = []
            for modality in sorted(self.pools):
                pool = self.pools[modality]
                before = {i.instance_id for i in pool.instances}
                _, event = autoscale_tick(pool, self.policy)
                self.timeline.append((self.ticks, modality, event))
                events.append((modality, event))
                if event != HOLD:
                    after = {i.instance_id for i in pool.instances}
                    changed, = (after - before) or (before - after)
                    logger.info('tick %d: %s %s (%s), pool size %d',
                                self.ticks, event, modality, changed, len(pool.instances))
                    if self.on_scale is not None:
                        self.on_scale(modality, event, changed, now)
            return events

    def snapshot(self):
        with self._lock:
            return {'tick': self.ticks, 'pools': [self.pools[m].to_document() for m in sorted(self.pools)]}


class BrokerService(Service):
    kind = BROKER

    def __init__(self, service_id, broker):
        super().__init__(service_id)
        self.broker = broker


    def operations(self):
        return {
            'assign': lambda body: {'instance_id': self.broker.assign(body['modality'])},
            'complete': self._complete,
            'tick': lambda body: {'events': [list(e) for e in self.broker.tick(body.get('now', 0))]},
            'broker.snapshot': lambda body: self.broker.snapshot(),
        }

    def _complete(self, body):
        self.broker.complete(body['modality'], body['instance_id'])
        return {}
