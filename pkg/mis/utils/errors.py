class MISError(Exception):
    """
    Base class for every error raised by the mesh. Each error carries a code
    which is what travels over the wire and what turn reports record.

    :param code: the error identifier, e.g. 'NO_MATCH'
    :type code: str
    :param message: human readable details
    :type message: str
    """
    kind = 'mis'

    def __init__(self, code, message=''):
        super().__init__('{}: {}'.format(code, message) if message else code)
        self.code = code
        """the error identifier"""
        self.message = message
        """human readable details"""


class CodecError(MISError):
    kind = 'codec'


class RegistryError(MISError):
    kind = 'registry'


class BrokerError(MISError):
    kind = 'broker'


class RecognitionError(MISError):
    kind = 'recognition'


class GrammarError(MISError):
    kind = 'grammar'


class InterpretationError(MISError):
    kind = 'interpretation'


class KnowledgeError(MISError):
    kind = 'knowledge'


class FissionError(MISError):
    kind = 'fission'


class GatewayError(MISError):
    kind = 'gateway'


class ScenarioError(MISError):
    """
    Raised while reading a scenario file.

    :param line_number: 1-based line of the offending record
    :type line_number: int
    """
    kind = 'scenario'

    def __init__(self, line_number, message=''):
        super().__init__('SCENARIO_PARSE', 'line {}: {}'.format(line_number, message))
        self.line_number = line_number


class ConfigError(MISError):
    kind = 'config'

    def __init__(self, reason):
        super().__init__('CONFIG_INVALID', reason)
        self.reason = reason


ERROR_KINDS = {cls.kind: cls for cls in (MISError, CodecError, RegistryError, BrokerError,
                                         RecognitionError, GrammarError, InterpretationError,
                                         KnowledgeError, FissionError, GatewayError)}


def error_from_document(document):
    """
    Rebuilds the exception carried by an "error" envelope body.

    :type document: dict
    :rtype: MISError
    """
    if document.get('kind') == 'config':
        return ConfigError(document.get('message', ''))
    cls = ERROR_KINDS.get(document.get('kind'), MISError)
    return cls(document.get('code', 'UNKNOWN'), document.get('message', ''))
