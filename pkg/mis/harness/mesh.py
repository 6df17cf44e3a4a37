import logging
from dataclasses import replace

from mis.harness.transport import Dispatcher, InprocTransport, ServiceClient
from mis.services.broker import Broker, BrokerService, ScalePolicy
from mis.services.fission import FissionConfig, FissionService
from mis.services.fusion import FusionConfig, FusionService
from mis.services.gateway import GatewayConfig, GatewayService, InteractionManager
from mis.services.interpretation import InterpretationService
from mis.services.knowledge import KnowledgeService
from mis.services.recognition import RecognitionService
from mis.services.registry import RegistryService, ServiceRegistry
from mis.structures.data import ServiceDescriptor
from mis.utils import GATEWAY, RECOGNIZER, GROW, HOLD, SHRINK, LAYER_OF_KIND

logger = logging.getLogger(__name__)

GATEWAY_ID = 'gateway-1'
BROKER_ID = 'broker-1'
FUSION_ID = 'fusion-1'
INTERPRETER_ID = 'interpreter-1'
FISSION_ID = 'fission-1'
KNOWLEDGE_ID = 'knowledge-1'

MAX_CATCH_UP_TICKS = 10000


class Mesh:
    """
    One gateway with its full set of services, bound to a single dispatcher
    and published in a single registry. Recognizer services follow the
    broker pools: GROW binds and publishes a new instance, SHRINK unbinds
    and deregisters it.

    :type config: mis.utils.config.MeshConfig
    :type grammar: mis.services.interpretation.Grammar
    :type lexicon: list[mis.services.recognition.LexiconEntry]
    :param profiles: one UserProfile or several; sessions without a user get the first
    :type rules: list[mis.services.knowledge.HornRule]
    :param channels: modalities to open pools for besides those of the lexicon
    """
    def __init__(self, config, grammar, lexicon, profiles, rules, channels=()):
        self.config = config
        self.lexicon = lexicon
        self.registry = ServiceRegistry()
        self.dispatcher = Dispatcher()
        self.endpoint_base = 'inproc://'
        self._next_tick = config.tick_ms
        self._last_renewal = 0
        self.broker = Broker(ScalePolicy(config.q_hi, config.q_lo, config.window_w),
                             config.min_instances, config.max_instances, on_scale=self._on_scale)

        if config.theta is not None:
            grammar = replace(grammar, theta=config.theta)
        if config.beam is not None:
            grammar = replace(grammar, beam=config.beam)

        self.knowledge = KnowledgeService(KNOWLEDGE_ID, profiles, rules)
        gateway_cfg = GatewayConfig(config.tau_end_ms, config.service_cost_ms)
        manager = InteractionManager(ServiceClient(InprocTransport(self.dispatcher), GATEWAY_ID),
                                     GATEWAY_ID, self.knowledge.default_user, gateway_cfg)
        self.gateway = GatewayService(GATEWAY_ID, manager, gateway_cfg)
        self.services = [
            self.gateway,
            BrokerService(BROKER_ID, self.broker),
            FusionService(FUSION_ID, FusionConfig(config.fusion_delta_ms)),
            InterpretationService(INTERPRETER_ID, grammar),
            FissionService(FISSION_ID, FissionConfig(config.fission_epsilon)),
            self.knowledge,
        ]
        """the fixed services, gateway first"""
        self.recognizers = {}
        """instance_id -> RecognitionService"""

        self.dispatcher.bind(RegistryService(self.registry))
        for service in self.services:
            self.dispatcher.bind(service)
        for modality in sorted(set(channels) | {entry.channel for entry in lexicon}):
            for instance in self.broker.add_pool(modality).instances:
                self._bind_recognizer(modality, instance.instance_id)


    def descriptor(self, service):
        """
        :type service: mis.services.base.Service
        :rtype: mis.structures.data.ServiceDescriptor
        """
        return ServiceDescriptor(service_id=service.service_id, kind=service.kind, layer=LAYER_OF_KIND[service.kind],
                                 endpoint=self.endpoint_base + service.service_id,
                                 modality=getattr(service, 'modality', None) if service.kind == RECOGNIZER else None,
                                 parent_id=None if service.kind == GATEWAY else GATEWAY_ID)

    def boot(self, now=0, endpoint_base='inproc://'):
        """
        Publishes every descriptor, gateway first, with a lease of
        config.lease_ttl_ms.

        :param endpoint_base: prefix of the endpoint strings, e.g. 'tcp://127.0.0.1:7000/'
        :type endpoint_base: str
        """
        self.endpoint_base = endpoint_base
        self.renew(now)
        logger.info('mesh booted under %s with %d recognizer instances', GATEWAY_ID, len(self.recognizers))
        return self

    def keep_time(self):
        """
        Lets the gateway's clients drive the mesh clock: every ingest and poll
        first runs the broker ticks and lease renewals due by its ``now``, on
        the same tick_ms grid the scenario replay uses.
        """
        self.gateway.on_time = self.advance
        return self

    def advance(self, now):
        """
        Ticks the broker at every tick_ms boundary up to ``now`` and renews
        the leases whenever half of lease_ttl_ms has passed since the last
        renewal. Time never goes backwards; an older ``now`` does nothing.
        """
        due = (now - self._next_tick) // self.config.tick_ms + 1
        if due > MAX_CATCH_UP_TICKS:
            skipped = due - MAX_CATCH_UP_TICKS
            self._next_tick += skipped * self.config.tick_ms
            logger.warning('clock jumped to %d, skipping %d broker ticks', now, skipped)
        while self._next_tick <= now:
            tick = self._next_tick
            for modality, event in self.broker.tick(tick):
                if event != HOLD:
                    logger.info('tick %d: %s %s', tick, modality, event)
            if tick - self._last_renewal >= self.config.lease_ttl_ms // 2:
                self.renew(tick)
            self._next_tick += self.config.tick_ms

    def renew(self, now):
        """Heartbeat: republishes every bound service, which renews its lease."""
        for service in self.services + [self.recognizers[i] for i in sorted(self.recognizers)]:
            self.registry.publish(self.descriptor(service), self.config.lease_ttl_ms, now)
        self._last_renewal = now

    def _bind_recognizer(self, modality, instance_id):
        service = RecognitionService(instance_id, modality, self.lexicon)
        self.recognizers[instance_id] = service
        self.dispatcher.bind(service)
        return service

    def _on_scale(self, modality, event, instance_id, now):
        if event == GROW:
            service = self._bind_recognizer(modality, instance_id)
            self.registry.publish(self.descriptor(service), self.config.lease_ttl_ms, now)
        elif event == SHRINK:
            self.recognizers.pop(instance_id, None)
            self.dispatcher.unbind(instance_id)
            self.registry.deregister(instance_id, now)
