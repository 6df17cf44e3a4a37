import logging
import threading
from dataclasses import dataclass, replace

from mis.services.base import Service
from mis.structures.data import ServiceDescriptor
from mis.utils import REGISTRY_ADDRESS
from mis.utils.errors import RegistryError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RegistryQuery:
    """
    Unset fields match anything, so the empty query matches every live
    descriptor.
    """
    kind: str = None
    modality: str = None
    layer: str = None

    def matches(self, descriptor):
        return (self.kind is None or descriptor.kind == self.kind) \
            and (self.modality is None or descriptor.modality == self.modality) \
            and (self.layer is None or descriptor.layer == self.layer)

    def to_document(self):
        return {'kind': self.kind, 'modality': self.modality, 'layer': self.layer}

    @classmethod
    def from_document(cls, document):
        return cls(document.get('kind'), document.get('modality'), document.get('layer'))


class ServiceRegistry:
    """
    Where providers publish descriptors and consumers find them. Entries are
    leased: a descriptor whose lease_expiry is not in the future is never
    returned, whether or not it has been swept yet.

    Every operation holds the registry lock, so concurrent callers see a
    linearizable history.
    """
    def __init__(self):
        self.descriptors = {}
        """service_id -> ServiceDescriptor"""
        self.log = []
        """(time, action, service_id, kind) for each change"""
        self._lock = threading.Lock()


    def publish(self, descriptor, ttl, now):
        """
        Stores the descriptor with a lease of ``ttl`` ms; publishing an id
        that is already present replaces and renews it.

        :type descriptor: mis.structures.data.ServiceDescriptor
        :type ttl: int
        :type now: int
        :return: the service id
        :rtype: str
        """
        if ttl <= 0:
            raise ValueError('ttl must be positive, got {}'.format(ttl))
        reason = descriptor.validate()
        if reason:
            raise RegistryError('INVALID_DESCRIPTOR', reason)

        with self._lock:
            for other in self.descriptors.values():
                if other.service_id != descriptor.service_id and other.endpoint == descriptor.endpoint \
                        and other.lease_expiry > now:
                    raise RegistryError('DUPLICATE_ENDPOINT', '{} already serves {}'
                                        .format(other.service_id, descriptor.endpoint))
            action = 'renew' if self._live(descriptor.service_id, now) else 'publish'
            self.descriptors[descriptor.service_id] = replace(descriptor, lease_expiry=now + ttl)
            self.log.append((now, action, descriptor.service_id, descriptor.kind))

        logger.debug('%s %s until %d', action, descriptor.service_id, now + ttl)
        return descriptor.service_id

    def find(self, query, now):
        """
        :type query: RegistryQuery
        :return: the live descriptors matching every set field, by service_id
        :rtype: list[mis.structures.data.ServiceDescriptor]
        """
        with self._lock:
            return [d for d in self._sorted_live(now) if query.matches(d)]

    def children(self, parent, now):
        with self._lock:
            return [d for d in self._sorted_live(now) if d.parent_id == parent]

    def deregister(self, service_id, now):
        """
        An entry whose lease has run out is expired rather than deregistered,
        as a sweep at ``now`` would have done.

        :return: True if a live descriptor was removed
        :rtype: bool
        """
        with self._lock:
            descriptor = self.descriptors.pop(service_id, None)
            if descriptor is None:
                return False
            if descriptor.lease_expiry <= now:
                self.log.append((now, 'expire', service_id, descriptor.kind))
                logger.info('lease of %s expired', service_id)
                return False
            self.log.append((now, 'deregister', service_id, descriptor.kind))
        logger.info('deregistered %s', service_id)
        return True

    def sweep(self, now):
        """
        Drops expired descriptors eagerly. Lookups give the same answers with
        or without sweeping.

        :return: the ids removed
        :rtype: list[str]
        """
        with self._lock:
            expired = sorted(sid for sid, d in self.descriptors.items() if d.lease_expiry <= now)
            for sid in expired:
                descriptor = self.descriptors.pop(sid)
                self.log.append((now, 'expire', sid, descriptor.kind))
        for sid in expired:
            logger.info('lease of %s expired', sid)
        return expired

    def _live(self, service_id, now):
        descriptor = self.descriptors.get(service_id)
        return descriptor is not None and descriptor.lease_expiry > now

    def _sorted_live(self, now):
        return [self.descriptors[sid] for sid in sorted(self.descriptors) if self.descriptors[sid].lease_expiry > now]


class RegistryService(Service):
    """
    Exposes a ServiceRegistry over MIS-WP/1 at the fixed registry address.
    """
    def __init__(self, registry):
        super().__init__(REGISTRY_ADDRESS)
        self.registry = registry


    def operations(self):
        return {
            'publish': self._publish,
            'find': self._find,
            'children': self._children,
            'deregister': self._deregister,
            'sweep': self._sweep,
            'log': lambda body: {'log': [list(entry) for entry in self.registry.log]},
        }

    def _publish(self, body):
        descriptor = ServiceDescriptor.from_document(body['descriptor'])
        return {'service_id': self.registry.publish(descriptor, body['ttl'], body['now'])}

    def _find(self, body):
        query = RegistryQuery.from_document(body.get('query', {}))
        return {'descriptors': [d.to_document() for d in self.registry.find(query, body['now'])]}

    def _children(self, body):
        return {'descriptors': [d.to_document() for d in self.registry.children(body['parent'], body['now'])]}

    def _deregister(self, body):
        return {'removed': self.registry.deregister(body['service_id'], body['now'])}

    def _sweep(self, body):
        return {'expired': self.registry.sweep(body['now'])}
