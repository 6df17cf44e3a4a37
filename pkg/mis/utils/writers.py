import logging
import os
import sys

from mis.utils import DONE, GROW, HOLD

logger = logging.getLogger(__name__)


class ReportWriter:
    """
    Writes a RunReport as its canonical document, one line, to a file.

    :param path: where the report goes
    :type path: str
    """
    def __init__(self, path):
        self.path = path


    def write(self, report):
        """
        :type report: mis.harness.simulation.RunReport
        """
        with open(self.path, 'wb') as file:
            file.write(report.to_bytes())
        logger.info('report written to %s', self.path)


class MeshConsoleWriter:
    """
    Writes run summaries, registry listings and scaling timelines to the
    console, highlighting failures and scale events when the terminal
    supports color.
    """
    def __init__(self, color=True, stream=None):
        self.stream = stream or sys.stdout
        self.color = self.__supports_color(self.stream) if color else color
        self.ok_color_start = '\033[42m'
        self.failed_color_start = '\033[41m'
        self.end_color = '\033[0m'


    def write_summary(self, report):
        """
        :type report: mis.harness.simulation.RunReport
        """
        totals = report.totals()
        self._print('SCENARIO {} (seed {})'.format(report.scenario, report.seed))
        for turn in report.turns:
            if turn.phase == DONE:
                outcome = self._paint('DONE', self.ok_color_start)
                detail = '{} {}'.format(turn.plan.primary().content, list(turn.ambiguity.flags) or '')
            else:
                outcome = self._paint(turn.phase, self.failed_color_start)
                detail = turn.failure_reason or ''
            self._print('{} turn {: <3} at {: <7} {} {}'
                        .format(turn.session_id, turn.turn, turn.closed_at, outcome, detail).rstrip())
        self._print('TOTALS turns={turns} done={done} failures={failures}'.format(**totals))
        for modality in sorted(totals['max_instances']):
            self._print('  max instances {: <10} {}'.format(modality, totals['max_instances'][modality]))

    def write_registry(self, descriptors):
        """
        :type descriptors: list[mis.structures.data.ServiceDescriptor]
        """
        padding = max([len(d.service_id) for d in descriptors] + [10])
        self._print('{0: <{pad}} {1: <12} {2: <5} {3: <8} {4}'
                    .format('SERVICE', 'KIND', 'LAYER', 'MODALITY', 'LEASE', pad=padding))
        for d in descriptors:
            self._print('{0: <{pad}} {1: <12} {2: <5} {3: <8} {4}'
                        .format(d.service_id, d.kind, d.layer, d.modality or '-', d.lease_expiry, pad=padding))

    def write_timeline(self, timeline):
        """
        :param timeline: (tick, event) pairs
        """
        for tick, event in timeline:
            if event == HOLD:
                continue
            self._print('tick {: <6} {}'.format(tick, self._paint(event, self.ok_color_start
                                                                  if event == GROW else self.failed_color_start)))
        holds = sum(1 for _, event in timeline if event == HOLD)
        self._print('{} ticks, {} HOLD'.format(len(timeline), holds))

    def _paint(self, text, color_start):
        return color_start + text + self.end_color if self.color else text

    def _print(self, line):
        print(line, file=self.stream)

    @staticmethod
    def __supports_color(stream):
        """
        Returns True if the running system's terminal supports color, and False
        otherwise.
        """
        plat = sys.platform
        supported_platform = plat != 'Pocket PC' and (plat != 'win32' or 'ANSICON' in os.environ)
        is_a_tty = hasattr(stream, 'isatty') and stream.isatty()

        if not supported_platform or not is_a_tty:
            return False
        return True
