import logging
from dataclasses import dataclass

from mis.services.base import Service
from mis.services.knowledge import UserProfile
from mis.structures.data import Interpretation, OutputAct, OutputPlan
from mis.utils import FISSION, SCORE_TOLERANCE
from mis.utils.errors import FissionError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FissionConfig:
    epsilon_red: float = 0.05

    def __post_init__(self):
        if not 0 <= self.epsilon_red <= 1:
            raise ValueError('epsilon_red must lie in [0, 1]')


def render(interpretation):
    """
    The canonical confirmation string, e.g. PUT_THERE(loc=300,210,obj=120,45).

    :type interpretation: mis.structures.data.Interpretation
    :rtype: str
    """
    slots = ','.join('{}={}'.format(key, interpretation.slots[key]) for key in sorted(interpretation.slots))
    return '{}({})'.format(interpretation.act, slots)


def plan(interpretation, profile, cfg):
    """
    Puts the confirmation of the act on the most suitable output channel and
    repeats it, marked redundant, on every channel within epsilon_red of the
    best suitability.

    :type interpretation: mis.structures.data.Interpretation
    :type profile: mis.services.knowledge.UserProfile
    :type cfg: FissionConfig
    :rtype: mis.structures.data.OutputPlan
    """
    channels = sorted((c, s) for c, s in (profile.suitability or {}).items() if s > 0)
    if not channels:
        raise FissionError('NO_OUTPUT_CHANNEL', 'profile {} has no usable output channel'.format(profile.user_id))

    best = max(s for _, s in channels)
    primary = next(c for c, s in channels if s == best)
    content = render(interpretation)
    floor = best - cfg.epsilon_red - SCORE_TOLERANCE
    acts = [OutputAct(primary, content, False)]
    acts.extend(OutputAct(c, content, True) for c, s in channels if c != primary and s >= floor)
    return OutputPlan(tuple(acts))


class FissionService(Service):
    kind = FISSION

    def __init__(self, service_id, cfg):
        super().__init__(service_id)
        self.cfg = cfg


    def operations(self):
        return {'fission': self._fission}

    def _fission(self, body):
        output = plan(Interpretation.from_document(body['interpretation']),
                      UserProfile.from_document(body['profile']), self.cfg)
        logger.debug('%s: %d output acts, primary on %s', self.service_id, len(output.acts), output.primary().channel)
        return {'plan': output.to_document()}
