import logging
from dataclasses import dataclass

from mis.services.base import Service
from mis.structures.data import ModalToken, MultimodalSentence, MultimodalTerminal
from mis.utils import FUSION

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FusionConfig:
    delta_ms: int = 500

    def __post_init__(self):
        if self.delta_ms < 0:
            raise ValueError('delta_ms must be non-negative')


def near(a, b, delta_ms):
    """
    True iff the intervals overlap or the gap between them is at most
    ``delta_ms`` (the boundary is inclusive).

    :type a: (int, int)
    :type b: (int, int)
    """
    gap = max(a[0], b[0]) - min(a[1], b[1])
    return gap <= delta_ms


def fuse(tokens, cfg):
    """
    Groups tokens greedily in start-time order: a token joins the open
    terminal if that terminal has no token on its channel yet and the token
    is near every token already in it, otherwise it opens a new terminal.

    The input order does not matter, tokens are sorted first.

    :type tokens: list[mis.structures.data.ModalToken]
    :type cfg: FusionConfig
    :rtype: mis.structures.data.MultimodalSentence
    """
    groups = []
    current = []
    for token in sorted(tokens, key=ModalToken.sort_key):
        joins = current \
            and all(other.channel != token.channel for other in current) \
            and all(near(other.interval, token.interval, cfg.delta_ms) for other in current)
        if joins:
            current.append(token)
        else:
            if current:
                groups.append(current)
            current = [token]
    if current:
        groups.append(current)

    return MultimodalSentence(tuple(MultimodalTerminal(tuple(sorted(group, key=lambda t: t.channel)))
                                    for group in groups))


class FusionService(Service):
    kind = FUSION

    def __init__(self, service_id, cfg):
        super().__init__(service_id)
        self.cfg = cfg


    def operations(self):
        return {'fuse': self._fuse}

    def _fuse(self, body):
        tokens = [ModalToken.from_document(t) for t in body['tokens']]
        sentence = fuse(tokens, self.cfg)
        logger.debug('%s: fused %d tokens into %d terminals', self.service_id, len(tokens), len(sentence.terminals))
        return {'sentence': sentence.to_document()}
