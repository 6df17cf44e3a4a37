from mis.utils.errors import MISError


class Service:
    """
    A mesh service reachable through envelopes. Subclasses map operation
    names to handlers taking the request body and returning the response
    body.

    :param service_id: the id the service is published under
    :type service_id: str
    """
    kind = None

    def __init__(self, service_id):
        self.service_id = service_id
        """the registry id of this service"""


    def operations(self):
        """
        :rtype: dict[str, callable]
        """
        raise NotImplementedError

    def handle(self, envelope):
        """
        :type envelope: mis.structures.data.Envelope
        :return: the response body
        :rtype: dict
        """
        handler = self.operations().get(envelope.operation)
        if handler is None:
            raise MISError('UNKNOWN_OPERATION', '{} does not serve "{}"'.format(self.service_id, envelope.operation))
        return handler(envelope.body)
