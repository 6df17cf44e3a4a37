"""
Readers for the input documents of a run. Each reader is built on a path
and parses it with ``read()``.
"""
import logging
import os

import ujson

from mis.services.interpretation import load_grammar
from mis.services.knowledge import HornRule, UserProfile, profiles_by_user
from mis.services.recognition import load_lexicon
from mis.structures.data import ModalEvent, Scenario
from mis.utils.config import MeshConfig
from mis.utils.errors import ConfigError, GrammarError, KnowledgeError, RecognitionError, ScenarioError

logger = logging.getLogger(__name__)


class ScenarioReader:
    """
    Reads a scenario: one JSON ModalEvent record per line. Blank lines and
    lines starting with # are skipped. An optional record of the form
    ``{"scenario": {"name": ..., "channels": [...]}}`` names the scenario and
    the channels it needs; without it the name is the file name.

    :param path: path to the scenario file
    :type path: str
    """
    def __init__(self, path):
        self.path = path


    def read(self):
        """
        :rtype: mis.structures.data.Scenario
        """
        name = os.path.splitext(os.path.basename(self.path))[0]
        channels = ()
        events = []
        with open(self.path, encoding='utf-8') as file:
            for line_number, line in enumerate(file, 1):
                line = line.strip()
                if not line or line.startswith('#'):
                    continue
                try:
                    record = ujson.loads(line)
                except ValueError as e:
                    raise ScenarioError(line_number, 'not a JSON document: {}'.format(e))
                if not isinstance(record, dict):
                    raise ScenarioError(line_number, 'expected an object')

                if 'scenario' in record:
                    try:
                        name = str(record['scenario'].get('name', name))
                        channels = tuple(str(c) for c in record['scenario'].get('channels', []))
                    except (AttributeError, TypeError) as e:
                        raise ScenarioError(line_number, 'malformed scenario header: {}'.format(e))
                    continue

                try:
                    event = ModalEvent.from_document(record)
                except (KeyError, TypeError, ValueError, AttributeError) as e:
                    raise ScenarioError(line_number, 'malformed event: {!r}'.format(e))
                if events and event.t_start < events[-1].t_start:
                    raise ScenarioError(line_number, 't_start {} goes back in time'.format(event.t_start))
                events.append(event)

        logger.debug('read %d events from %s', len(events), self.path)
        return Scenario(name, tuple(events), channels)


class DocumentReader:
    """
    Reads one JSON document and hands it to ``parse``; a file that is not
    JSON is reported with the error type of the document it should hold.
    """
    error = ConfigError

    def __init__(self, path):
        self.path = path


    def read(self):
        with open(self.path, encoding='utf-8') as file:
            try:
                document = ujson.load(file)
            except ValueError as e:
                raise self.malformed('{} is not a JSON document: {}'.format(self.path, e))
        return self.parse(document)

    def parse(self, document):
        raise NotImplementedError

    def malformed(self, message):
        return self.error(message)


class GrammarReader(DocumentReader):
    def parse(self, document):
        return load_grammar(document)

    def malformed(self, message):
        return GrammarError('MALFORMED_GRAMMAR', message)


class LexiconReader(DocumentReader):
    def parse(self, document):
        return load_lexicon(document)

    def malformed(self, message):
        return RecognitionError('BAD_LEXICON_ENTRY', message)


class ProfileReader(DocumentReader):
    """
    Reads one user profile, or several given as a list or under "profiles".
    A single profile comes back as a UserProfile, several as a list.
    """
    def parse(self, document):
        if isinstance(document, dict) and 'profiles' in document:
            document = document['profiles']
        if isinstance(document, list):
            profiles = [UserProfile.from_document(p) for p in document]
            profiles_by_user(profiles)
            return profiles
        return UserProfile.from_document(document)

    def malformed(self, message):
        return KnowledgeError('MALFORMED_PROFILE', message)


class RulesReader(DocumentReader):
    """Reads a list of Horn rules, bare or under "rules"."""

    def parse(self, document):
        if isinstance(document, dict):
            document = document.get('rules', [])
        if not isinstance(document, list):
            raise self.malformed('a rules document is a list of rules')
        return [HornRule.from_document(rule) for rule in document]

    def malformed(self, message):
        return KnowledgeError('MALFORMED_RULE', message)


class ConfigReader(DocumentReader):
    """
    :param base: the config the document overrides
    :type base: mis.utils.config.MeshConfig
    """
    def __init__(self, path, base=None):
        super().__init__(path)
        self.base = base


    def parse(self, document):
        return MeshConfig.from_document(document, base=self.base)
