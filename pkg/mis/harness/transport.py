"""
Moving envelopes between services. In-process dispatch and TCP loopback
both go through the MIS-WP/1 codec, so a request sees exactly the same bytes
either way.
"""
import asyncio
import logging
import socket
import struct
import threading

from mis.structures.data import Envelope
from mis.utils import MAX_BODY_BYTES
from mis.utils.codec import HEADER_SIZE, decode_envelope, encode_envelope, read_frame
from mis.utils.errors import CodecError, MISError, error_from_document

logger = logging.getLogger(__name__)


def error_body(error):
    """
    :type error: mis.utils.errors.MISError
    :rtype: dict
    """
    return {'code': error.code, 'message': error.message, 'kind': error.kind}


class Dispatcher:
    """
    Routes decoded envelopes to the bound service named by ``to_service``
    and encodes the reply. A handler failing on a body it cannot read
    answers MALFORMED_REQUEST. Requests are handled one at a time; the lock is
    re-entrant because a service may call other services while handling a
    request.
    """
    def __init__(self):
        self.services = {}
        """service_id -> mis.services.base.Service"""
        self._replies = 0
        self._lock = threading.RLock()


    def bind(self, service):
        with self._lock:
            self.services[service.service_id] = service

    def unbind(self, service_id):
        with self._lock:
            self.services.pop(service_id, None)

    def dispatch(self, envelope):
        """
        :type envelope: mis.structures.data.Envelope
        :rtype: mis.structures.data.Envelope
        """
        with self._lock:
            self._replies += 1
            message_id = 'reply-{}'.format(self._replies)
            service = self.services.get(envelope.to_service)
            try:
                if service is None:
                    raise MISError('UNKNOWN_SERVICE', envelope.to_service)
                body = service.handle(envelope)
            except MISError as e:
                logger.debug('%s.%s -> %s', envelope.to_service, envelope.operation, e.code)
                return envelope.reply(message_id, 'error', error_body(e))
            except (KeyError, ValueError, TypeError, AttributeError) as e:
                logger.warning('%s.%s rejected a malformed request: %r', envelope.to_service, envelope.operation, e)
                error = MISError('MALFORMED_REQUEST', '{}: {}'.format(type(e).__name__, e))
                return envelope.reply(message_id, 'error', error_body(error))
            logger.debug('%s.%s from %s', envelope.to_service, envelope.operation, envelope.from_service)
            return envelope.reply(message_id, envelope.operation, body)

    def dispatch_frame(self, frame):
        """
        :type frame: bytes
        :rtype: bytes
        """
        try:
            request = decode_envelope(frame)
        except CodecError as e:
            logger.warning('dropping undecodable frame: %s', e)
            return encode_envelope(Envelope('reply-error', '', '', 'mesh', '', 'error', error_body(e)))
        return encode_envelope(self.dispatch(request))


class InprocTransport:
    def __init__(self, dispatcher):
        self.dispatcher = dispatcher


    def request(self, frame):
        return self.dispatcher.dispatch_frame(frame)

    def close(self):
        pass


class TcpTransport:
    """
    A blocking client connection speaking MIS-WP/1.

    :type host: str
    :type port: int
    """
    def __init__(self, host, port, timeout=10.0):
        self.sock = socket.create_connection((host, port), timeout=timeout)
        self._lock = threading.Lock()


    def request(self, frame):
        with self._lock:
            self.sock.sendall(frame)
            response = read_frame(self.sock)
        if response is None:
            raise CodecError('MALFORMED_FRAME', 'server closed the connection')
        return response

    def close(self):
        try:
            self.sock.close()
        except OSError:
            pass


class ServiceClient:
    """
    Sends requests on behalf of one service (or the harness) and unwraps
    replies. Message ids are a per-client counter, so they are unique on the
    connection and identical from run to run.

    :param transport: InprocTransport or TcpTransport
    :param from_service: id written into the from_service header
    :type from_service: str
    """
    def __init__(self, transport, from_service):
        self.transport = transport
        self.from_service = from_service
        self._sent = 0


    def call(self, to_service, operation, body, session_id=''):
        """
        :return: the reply body
        :rtype: dict
        :raises mis.utils.errors.MISError: the error the service answered with
        """
        self._sent += 1
        request = Envelope(message_id='{}-{}'.format(self.from_service, self._sent), correlation_id='',
                           session_id=session_id, from_service=self.from_service, to_service=to_service,
                           operation=operation, body=body)
        reply = decode_envelope(self.transport.request(encode_envelope(request)))
        if reply.correlation_id not in (request.message_id, ''):
            raise CodecError('MALFORMED_DOCUMENT', 'reply correlates to {}, expected {}'
                             .format(reply.correlation_id, request.message_id))
        if reply.operation == 'error':
            raise error_from_document(reply.body)
        return reply.body

    def close(self):
        self.transport.close()


class MeshServer:
    """
    asyncio TCP server handing every frame it reads to a Dispatcher.

    :type dispatcher: Dispatcher
    :param port: 0 picks a free port, see ``self.port`` once started
    """
    def __init__(self, dispatcher, host='127.0.0.1', port=0):
        self.dispatcher = dispatcher
        self.host = host
        self.port = port
        self.server = None


    async def start(self):
        self.server = await asyncio.start_server(self.handle_client, self.host, self.port)
        self.port = self.server.sockets[0].getsockname()[1]
        logger.info('MIS-WP/1 listening on %s:%d', self.host, self.port)

    async def stop(self):
        if self.server:
            self.server.close()
            await self.server.wait_closed()
            self.server = None

    async def handle_client(self, reader, writer):
        try:
            while True:
                try:
                    header = await reader.readexactly(HEADER_SIZE)
                except asyncio.IncompleteReadError:
                    break
                (length,) = struct.unpack('>I', header)
                if length > MAX_BODY_BYTES * 2:
                    logger.warning('closing connection: frame of %d bytes', length)
                    break
                payload = await reader.readexactly(length)
                writer.write(self.dispatcher.dispatch_frame(header + payload))
                await writer.drain()
        except (asyncio.IncompleteReadError, ConnectionError) as e:
            logger.debug('connection dropped: %s', e)
        finally:
            writer.close()

    def serve_forever(self):
        async def serve():
            await self.start()
            async with self.server:
                await self.server.serve_forever()

        asyncio.run(serve())


class LoopbackServer:
    """
    Runs a MeshServer on its own event loop thread for the lifetime of a
    ``with`` block.
    """
    def __init__(self, dispatcher):
        self.server = MeshServer(dispatcher)
        self.loop = None
        self._ready = threading.Event()
        self._thread = None
        self._error = None


    @property
    def port(self):
        return self.server.port

    def __enter__(self):
        self._thread = threading.Thread(target=self._run, name='mis-loopback', daemon=True)
        self._thread.start()
        self._ready.wait()
        if self._error is not None:
            raise self._error
        return self

    def __exit__(self, *exc):
        self.loop.call_soon_threadsafe(self.loop.stop)
        self._thread.join()

    def _run(self):
        self.loop = asyncio.new_event_loop()
        try:
            self.loop.run_until_complete(self.server.start())
        except OSError as e:
            self._error = e
            self._ready.set()
            self.loop.close()
            return
        self._ready.set()
        try:
            self.loop.run_forever()
            self.loop.run_until_complete(self.server.stop())
        finally:
            self.loop.close()
