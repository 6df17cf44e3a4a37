"""
MIS-WP/1 framing: a 4-byte big-endian payload length followed by the
canonical UTF-8 document of the envelope.

The canonical document is compact JSON with keys sorted at every level, so
two equal envelopes always produce the same bytes.
"""
import logging
import struct

import ujson

from mis.structures.data import Envelope, HEADER_FIELDS
from mis.utils import MAX_BODY_BYTES
from mis.utils.errors import CodecError

logger = logging.getLogger(__name__)

HEADER_SIZE = 4


def canonical_dumps(document):
    """
    :param document: a tree of dicts, lists, strings, numbers, booleans and None
    :rtype: str
    """
    return ujson.dumps(document, sort_keys=True, ensure_ascii=False, escape_forward_slashes=False)


def encode_envelope(envelope):
    """
    :type envelope: mis.structures.data.Envelope
    :rtype: bytes
    """
    if not envelope.operation:
        raise CodecError('MISSING_HEADER_FIELD', 'operation must be non-empty')
    body = canonical_dumps(envelope.body).encode('utf-8')
    if len(body) > MAX_BODY_BYTES:
        raise CodecError('BODY_TOO_LARGE', '{} bytes'.format(len(body)))
    header = canonical_dumps(envelope.header()).encode('utf-8')
    # "body" sorts before "header"
    payload = b'{"body":' + body + b',"header":' + header + b'}'
    return struct.pack('>I', len(payload)) + payload


def decode_envelope(frame):
    """
    :type frame: bytes
    :rtype: mis.structures.data.Envelope
    """
    if len(frame) < HEADER_SIZE:
        raise CodecError('MALFORMED_FRAME', 'frame shorter than its length prefix')
    (length,) = struct.unpack('>I', frame[:HEADER_SIZE])
    if length != len(frame) - HEADER_SIZE:
        raise CodecError('MALFORMED_FRAME', 'prefix says {} bytes, payload has {}'
                         .format(length, len(frame) - HEADER_SIZE))
    return decode_payload(frame[HEADER_SIZE:])


def decode_payload(payload):
    try:
        document = ujson.loads(payload.decode('utf-8'))
    except (UnicodeDecodeError, ValueError) as e:
        raise CodecError('MALFORMED_DOCUMENT', str(e))

    if not isinstance(document, dict) or not isinstance(document.get('header'), dict) or 'body' not in document:
        raise CodecError('MALFORMED_DOCUMENT', 'expected an object with header and body')

    header = document['header']
    for name in HEADER_FIELDS:
        if name not in header:
            raise CodecError('MISSING_HEADER_FIELD', name)
        if not isinstance(header[name], str):
            raise CodecError('MALFORMED_DOCUMENT', 'header field {} must be a string'.format(name))
    if not header['operation']:
        raise CodecError('MISSING_HEADER_FIELD', 'operation')

    return Envelope(body=document['body'], **{name: header[name] for name in HEADER_FIELDS})


def read_frame(sock):
    """
    Reads one frame from a blocking socket; None when the peer closed the
    connection cleanly before a new frame started.

    :rtype: bytes or None
    """
    header = _recv_exactly(sock, HEADER_SIZE)
    if header is None:
        return None
    (length,) = struct.unpack('>I', header)
    if length > MAX_BODY_BYTES * 2:
        raise CodecError('BODY_TOO_LARGE', '{} bytes'.format(length))
    payload = _recv_exactly(sock, length)
    if payload is None:
        raise CodecError('MALFORMED_FRAME', 'connection closed mid-frame')
    return header + payload


def _recv_exactly(sock, n):
    buf = b''
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            if buf:
                raise CodecError('MALFORMED_FRAME', 'connection closed mid-frame')
            return None
        buf += chunk
    return buf
