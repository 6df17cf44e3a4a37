"""
Value types shared by every service of the mesh. All of them are treated as
immutable once built; each knows how to turn itself into a plain document
and back so it can travel inside an envelope.
"""
from dataclasses import dataclass, field

from mis.utils import LAYER_OF_KIND, GATEWAY, RECOGNIZER, SERVICE_KINDS, LAYERS, PHASE_ORDER

HEADER_FIELDS = ('message_id', 'correlation_id', 'session_id', 'from_service', 'to_service', 'operation')


def _check_interval(t_start, t_end):
    if isinstance(t_start, bool) or isinstance(t_end, bool) \
            or not isinstance(t_start, int) or not isinstance(t_end, int):
        raise ValueError('timestamps must be integer milliseconds')
    if t_start < 0 or t_start > t_end:
        raise ValueError('invalid interval [{}, {}]'.format(t_start, t_end))


def _check_confidence(confidence):
    if not 0.0 <= confidence <= 1.0:
        raise ValueError('confidence {} outside [0, 1]'.format(confidence))


def _payload_key(payload):
    return tuple(sorted((str(k), str(v)) for k, v in payload.items()))


@dataclass(frozen=True)
class ModalEvent:
    """
    Raw input from one channel of one device, before recognition. An empty
    user_id leaves the session's user as it is.
    """
    session_id: str
    channel: str
    payload: dict
    t_start: int
    t_end: int
    device_id: str = ''
    end_turn: bool = False
    user_id: str = ''

    def __post_init__(self):
        if not self.channel:
            raise ValueError('channel must be non-empty')
        _check_interval(self.t_start, self.t_end)

    @property
    def interval(self):
        return self.t_start, self.t_end

    def to_document(self):
        document = {
            'session': self.session_id,
            'channel': self.channel,
            'payload': dict(self.payload),
            't_start': self.t_start,
            't_end': self.t_end,
            'device': self.device_id,
            'end_turn': self.end_turn,
        }
        if self.user_id:
            document['user'] = self.user_id
        return document

    @classmethod
    def from_document(cls, document):
        return cls(session_id=str(document['session']), channel=str(document['channel']),
                   payload={str(k): str(v) for k, v in document.get('payload', {}).items()},
                   t_start=document['t_start'], t_end=document['t_end'],
                   device_id=str(document.get('device', '')), end_turn=bool(document.get('end_turn', False)),
                   user_id=str(document.get('user', '')))


@dataclass(frozen=True)
class Alternative:
    symbol: str
    payload: dict
    confidence: float

    def sort_key(self):
        return -self.confidence, self.symbol

    def to_document(self):
        return {'symbol': self.symbol, 'payload': dict(self.payload), 'confidence': float(self.confidence)}

    @classmethod
    def from_document(cls, document):
        return cls(document['symbol'], dict(document['payload']), float(document['confidence']))


@dataclass(frozen=True)
class ModalToken:
    """
    A recognized symbol for one event, with its n-best list. The token's own
    symbol and confidence are always the head of ``alternatives``.
    """
    channel: str
    symbol: str
    payload: dict
    t_start: int
    t_end: int
    confidence: float
    alternatives: tuple

    def __post_init__(self):
        _check_interval(self.t_start, self.t_end)
        if not self.alternatives:
            raise ValueError('a token needs at least its head alternative')
        for alternative in self.alternatives:
            _check_confidence(alternative.confidence)
        keys = [a.sort_key() for a in self.alternatives]
        if keys != sorted(keys):
            raise ValueError('alternatives must be sorted by confidence, then symbol')
        head = self.alternatives[0]
        if (head.symbol, head.confidence) != (self.symbol, self.confidence):
            raise ValueError('token symbol and confidence must equal the head alternative')

    @property
    def interval(self):
        return self.t_start, self.t_end

    def sort_key(self):
        """Start, channel, symbol, end; payload and n-best list order tokens that tie on those."""
        return (self.t_start, self.channel, self.symbol, self.t_end, _payload_key(self.payload),
                tuple((a.sort_key(), _payload_key(a.payload)) for a in self.alternatives))

    def to_document(self):
        return {
            'channel': self.channel,
            'symbol': self.symbol,
            'payload': dict(self.payload),
            't_start': self.t_start,
            't_end': self.t_end,
            'confidence': float(self.confidence),
            'alternatives': [a.to_document() for a in self.alternatives],
        }

    @classmethod
    def from_document(cls, document):
        return cls(channel=document['channel'], symbol=document['symbol'], payload=dict(document['payload']),
                   t_start=document['t_start'], t_end=document['t_end'],
                   confidence=float(document['confidence']),
                   alternatives=tuple(Alternative.from_document(a) for a in document['alternatives']))


@dataclass(frozen=True)
class MultimodalTerminal:
    """
    Co-temporal tokens of distinct channels; tokens are kept in channel order.
    """
    tokens: tuple

    def __post_init__(self):
        if not self.tokens:
            raise ValueError('a terminal holds at least one token')
        channels = [t.channel for t in self.tokens]
        if len(set(channels)) != len(channels):
            raise ValueError('a terminal holds at most one token per channel')
        if channels != sorted(channels):
            object.__setattr__(self, 'tokens', tuple(sorted(self.tokens, key=lambda t: t.channel)))

    @property
    def anchor(self):
        return min(t.t_start for t in self.tokens)

    def token_on(self, channel):
        for token in self.tokens:
            if token.channel == channel:
                return token
        return None

    def to_document(self):
        return {'anchor': self.anchor, 'tokens': [t.to_document() for t in self.tokens]}

    @classmethod
    def from_document(cls, document):
        return cls(tuple(ModalToken.from_document(t) for t in document['tokens']))


@dataclass(frozen=True)
class MultimodalSentence:
    terminals: tuple = ()

    def __post_init__(self):
        anchors = [t.anchor for t in self.terminals]
        if anchors != sorted(anchors):
            raise ValueError('terminal anchors must be non-decreasing')

    def tokens(self):
        """
        The tokens in assignment order: terminal by terminal, channel order inside.

        :rtype: list[ModalToken]
        """
        return [token for terminal in self.terminals for token in terminal.tokens]

    def to_document(self):
        return {'terminals': [t.to_document() for t in self.terminals]}

    @classmethod
    def from_document(cls, document):
        return cls(tuple(MultimodalTerminal.from_document(t) for t in document['terminals']))


@dataclass(frozen=True)
class Interpretation:
    act: str
    slots: dict
    score: float
    rule_id: str
    assignment: tuple

    def to_document(self):
        return {'act': self.act, 'slots': dict(self.slots), 'score': float(self.score),
                'rule_id': self.rule_id, 'assignment': list(self.assignment)}

    @classmethod
    def from_document(cls, document):
        return cls(document['act'], dict(document['slots']), float(document['score']),
                   document['rule_id'], tuple(document['assignment']))


@dataclass(frozen=True)
class AmbiguityReport:
    flags: tuple = ()
    rival_count: int = 0

    def __post_init__(self):
        if bool(self.flags) != (self.rival_count > 0):
            raise ValueError('flags must be empty exactly when there are no rivals')

    def to_document(self):
        return {'flags': sorted(self.flags), 'rival_count': self.rival_count}

    @classmethod
    def from_document(cls, document):
        return cls(tuple(sorted(document['flags'])), document['rival_count'])


@dataclass(frozen=True)
class OutputAct:
    channel: str
    content: str
    redundant: bool

    def to_document(self):
        return {'channel': self.channel, 'content': self.content, 'redundant': self.redundant}

    @classmethod
    def from_document(cls, document):
        return cls(document['channel'], document['content'], bool(document['redundant']))


@dataclass(frozen=True)
class OutputPlan:
    acts: tuple = ()

    def primary(self):
        return next(act for act in self.acts if not act.redundant)

    def to_document(self):
        return {'acts': [a.to_document() for a in self.acts]}

    @classmethod
    def from_document(cls, document):
        return cls(tuple(OutputAct.from_document(a) for a in document['acts']))


@dataclass(frozen=True)
class ServiceDescriptor:
    """
    A registry entry. Every service but the gateway hangs under the gateway
    through ``parent_id``, and its layer is fixed by its kind.
    """
    service_id: str
    kind: str
    layer: str
    endpoint: str
    modality: str = None
    parent_id: str = None
    lease_expiry: int = 0

    def validate(self):
        """
        :return: the reason the descriptor is invalid, or None
        :rtype: str
        """
        if not self.service_id:
            return 'service_id must be non-empty'
        if self.kind not in SERVICE_KINDS:
            return 'unknown kind {}'.format(self.kind)
        if self.layer not in LAYERS or self.layer != LAYER_OF_KIND[self.kind]:
            return '{} services live at {}'.format(self.kind, LAYER_OF_KIND[self.kind])
        if (self.kind == RECOGNIZER) != bool(self.modality):
            return 'exactly the recognizers carry a modality'
        if (self.kind == GATEWAY) == bool(self.parent_id):
            return 'every service but the gateway has a parent'
        return None

    def to_document(self):
        return {'service_id': self.service_id, 'kind': self.kind, 'layer': self.layer, 'endpoint': self.endpoint,
                'modality': self.modality, 'parent_id': self.parent_id, 'lease_expiry': self.lease_expiry}

    @classmethod
    def from_document(cls, document):
        return cls(service_id=document['service_id'], kind=document['kind'], layer=document['layer'],
                   endpoint=document['endpoint'], modality=document.get('modality'),
                   parent_id=document.get('parent_id'), lease_expiry=document.get('lease_expiry', 0))


@dataclass(frozen=True)
class Envelope:
    """
    A framed request or response: a flat header of strings plus a body
    document.
    """
    message_id: str
    correlation_id: str
    session_id: str
    from_service: str
    to_service: str
    operation: str
    body: dict = field(default_factory=dict)

    def header(self):
        return {name: getattr(self, name) for name in HEADER_FIELDS}

    def reply(self, message_id, operation, body):
        """Builds the response envelope travelling back to the sender."""
        return Envelope(message_id=message_id, correlation_id=self.message_id, session_id=self.session_id,
                        from_service=self.to_service, to_service=self.from_service,
                        operation=operation, body=body)


@dataclass
class TurnReport:
    """
    Everything the gateway learned while running one turn. ``phases`` lists
    (phase, virtual time entered) in the order the phases were entered.
    """
    session_id: str
    turn: int
    closed_at: int
    event_count: int
    phase: str = PHASE_ORDER[0]
    failure_reason: str = None
    phases: list = field(default_factory=list)
    latencies: dict = field(default_factory=dict)
    sentence: MultimodalSentence = None
    interpretation: Interpretation = None
    ambiguity: AmbiguityReport = None
    plan: OutputPlan = None
    unrecognized: int = 0
    user_id: str = ''

    def to_document(self):
        return {
            'session': self.session_id,
            'turn': self.turn,
            'closed_at': self.closed_at,
            'event_count': self.event_count,
            'phase': self.phase,
            'failure_reason': self.failure_reason,
            'phases': [[phase, at] for phase, at in self.phases],
            'latencies': dict(self.latencies),
            'sentence': self.sentence.to_document() if self.sentence else None,
            'interpretation': self.interpretation.to_document() if self.interpretation else None,
            'ambiguity': self.ambiguity.to_document() if self.ambiguity else None,
            'plan': self.plan.to_document() if self.plan else None,
            'unrecognized': self.unrecognized,
            'user': self.user_id,
        }

    @classmethod
    def from_document(cls, document):
        def optional(key, factory):
            return factory(document[key]) if document.get(key) is not None else None

        return cls(session_id=document['session'], turn=document['turn'], closed_at=document['closed_at'],
                   event_count=document['event_count'], phase=document['phase'],
                   failure_reason=document.get('failure_reason'),
                   phases=[(phase, at) for phase, at in document['phases']],
                   latencies=dict(document['latencies']),
                   sentence=optional('sentence', MultimodalSentence.from_document),
                   interpretation=optional('interpretation', Interpretation.from_document),
                   ambiguity=optional('ambiguity', AmbiguityReport.from_document),
                   plan=optional('plan', OutputPlan.from_document),
                   unrecognized=document.get('unrecognized', 0), user_id=document.get('user', ''))


@dataclass(frozen=True)
class Scenario:
    """
    A recorded interaction to replay: events with absolute virtual
    timestamps, in non-decreasing t_start order.

    :param channels: channels the scenario needs a recognizer pool for
    """
    name: str
    events: tuple = ()
    channels: tuple = ()

    def __post_init__(self):
        starts = [e.t_start for e in self.events]
        if starts != sorted(starts):
            raise ValueError('scenario timestamps must be non-decreasing')

    def all_channels(self):
        return tuple(sorted(set(self.channels) | {e.channel for e in self.events}))
