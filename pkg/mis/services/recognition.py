import logging
from collections import namedtuple
from dataclasses import dataclass

from mis.services.base import Service
from mis.structures.data import Alternative, ModalEvent, ModalToken
from mis.utils import RECOGNIZER
from mis.utils.errors import RecognitionError

logger = logging.getLogger(__name__)

RecognitionResult = namedtuple('RecognitionResult', ['tokens', 'unrecognized'])


@dataclass(frozen=True)
class LexiconEntry:
    """
    Maps events of one channel whose payload contains ``match`` to a symbol.
    ``alternatives`` is the rest of the n-best list as (symbol, confidence)
    pairs; none of them may outrank the head.
    """
    channel: str
    match: dict
    symbol: str
    confidence: float
    alternatives: tuple = ()

    def __post_init__(self):
        if not self.channel or not self.symbol:
            raise RecognitionError('BAD_LEXICON_ENTRY', 'channel and symbol must be non-empty')
        head = (-self.confidence, self.symbol)
        for symbol, confidence in ((self.symbol, self.confidence),) + tuple(self.alternatives):
            if not 0.0 <= confidence <= 1.0:
                raise RecognitionError('BAD_LEXICON_ENTRY', 'confidence {} of {} outside [0, 1]'
                                       .format(confidence, symbol))
        for symbol, confidence in self.alternatives:
            if (-confidence, symbol) < head:
                raise RecognitionError('BAD_LEXICON_ENTRY', 'alternative {} outranks head {}'
                                       .format(symbol, self.symbol))

    def matches(self, event):
        return event.channel == self.channel \
            and all(event.payload.get(key) == value for key, value in self.match.items())

    def to_token(self, event):
        alternatives = [Alternative(self.symbol, dict(event.payload), self.confidence)]
        alternatives.extend(Alternative(symbol, dict(event.payload), confidence)
                            for symbol, confidence in self.alternatives)
        alternatives.sort(key=Alternative.sort_key)
        return ModalToken(channel=event.channel, symbol=self.symbol, payload=dict(event.payload),
                          t_start=event.t_start, t_end=event.t_end, confidence=self.confidence,
                          alternatives=tuple(alternatives))

    @classmethod
    def from_document(cls, document):
        try:
            return cls(channel=document['channel'], match={str(k): str(v) for k, v in document['match'].items()},
                       symbol=document['symbol'], confidence=float(document['confidence']),
                       alternatives=tuple((a[0], float(a[1])) for a in document.get('alternatives', [])))
        except (KeyError, TypeError, IndexError, ValueError, AttributeError) as e:
            raise RecognitionError('BAD_LEXICON_ENTRY', 'malformed entry {!r}: {}'.format(document, e))


def load_lexicon(document):
    """
    :param document: a list of entry documents, or an object holding one under "entries"
    :rtype: list[LexiconEntry]
    """
    if isinstance(document, dict):
        document = document.get('entries', [])
    if not isinstance(document, list):
        raise RecognitionError('BAD_LEXICON_ENTRY', 'a lexicon is a list of entries')
    return [LexiconEntry.from_document(entry) for entry in document]


def recognize(events, lexicon):
    """
    Turns the events of one channel into tokens. For each event the first
    lexicon entry, in file order, that matches wins; events nothing matches
    are returned as unrecognized.

    :type events: list[mis.structures.data.ModalEvent]
    :type lexicon: list[LexiconEntry]
    :rtype: RecognitionResult
    """
    channels = {e.channel for e in events}
    if len(channels) > 1:
        raise RecognitionError('CHANNEL_MISMATCH', 'events span channels {}'.format(sorted(channels)))

    tokens = []
    unrecognized = []
    for event in events:
        entry = next((entry for entry in lexicon if entry.matches(event)), None)
        if entry is None:
            unrecognized.append(event)
        else:
            tokens.append(entry.to_token(event))

    tokens.sort(key=lambda t: (t.t_start, t.symbol))
    return RecognitionResult(tokens, unrecognized)


class RecognitionService(Service):
    """
    A stateless recognizer instance for one modality. All instances of a
    pool share the same lexicon.
    """
    kind = RECOGNIZER

    def __init__(self, service_id, modality, lexicon):
        super().__init__(service_id)
        self.modality = modality
        self.lexicon = lexicon


    def operations(self):
        return {'recognize': self._recognize}

    def _recognize(self, body):
        events = [ModalEvent.from_document(e) for e in body['events']]
        if any(e.channel != self.modality for e in events):
            raise RecognitionError('CHANNEL_MISMATCH', '{} only recognizes {}'.format(self.service_id, self.modality))
        result = recognize(events, self.lexicon)
        if result.unrecognized:
            logger.debug('%s: %d unrecognized events', self.service_id, len(result.unrecognized))
        return {'tokens': [t.to_document() for t in result.tokens],
                'unrecognized': [e.to_document() for e in result.unrecognized]}
