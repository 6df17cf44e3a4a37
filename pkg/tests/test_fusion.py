import itertools
import random

import pytest

from tests.context import mis, token
from mis.services.fusion import FusionConfig, FusionService, fuse, near
from mis.structures.data import Envelope, ModalToken, MultimodalSentence

CHANNELS = ('gesture', 'sketch', 'speech')


def test_near():
    assert near((0, 100), (50, 150), 0)
    assert not near((0, 100), (700, 800), 500)
    assert near((0, 100), (600, 700), 500)
    assert near((600, 700), (0, 100), 500)


def test_single_token():
    t = token('speech', 'put', 0, 300)
    assert [terminal.tokens for terminal in fuse([t], FusionConfig()).terminals] == [(t,)]


def test_co_temporal_speech_and_gesture():
    that, point = token('speech', 'that', 1000, 1200), token('gesture', 'point', 1100, 1150)
    sentence = fuse([that, point], FusionConfig(500))
    assert [t.tokens for t in sentence.terminals] == [(point, that)]


def test_same_channel_is_never_fused():
    a, b = token('speech', 'a', 0, 100), token('speech', 'b', 700, 800)
    assert [t.tokens for t in fuse([b, a], FusionConfig(500)).terminals] == [(a,), (b,)]
    c = token('speech', 'c', 150, 200)
    assert len(fuse([a, c], FusionConfig(500)).terminals) == 2


def test_put_that_there():
    put = token('speech', 'put', 0, 300)
    that, point1 = token('speech', 'that', 1000, 1200), token('gesture', 'point', 1050, 1150)
    there, point2 = token('speech', 'there', 2000, 2250), token('gesture', 'point', 2050, 2150)
    sentence = fuse([there, point2, put, point1, that], FusionConfig(500))
    assert [[t.symbol for t in terminal.tokens] for terminal in sentence.terminals] == \
        [['put'], ['point', 'that'], ['point', 'there']]
    assert [terminal.anchor for terminal in sentence.terminals] == [0, 1000, 2000]


def test_empty_input():
    assert fuse([], FusionConfig()).terminals == ()


def test_negative_delta():
    with pytest.raises(ValueError):
        FusionConfig(-1)


def _valid_group(group, delta_ms):
    channels = [t.channel for t in group]
    return len(set(channels)) == len(channels) and \
        all(near(a.interval, b.interval, delta_ms) for a, b in itertools.combinations(group, 2))


def leftmost_longest_partition(tokens, delta_ms):
    """
    Enumerates every split of the start-ordered tokens into contiguous
    groups, keeps the ones whose groups are all valid, and returns the one
    whose group sizes are lexicographically largest.
    """
    ordered = sorted(tokens, key=ModalToken.sort_key)
    best = None
    for cuts in itertools.product([False, True], repeat=max(len(ordered) - 1, 0)):
        groups, current = [], [ordered[0]]
        for cut, t in zip(cuts, ordered[1:]):
            if cut:
                groups.append(current)
                current = [t]
            else:
                current.append(t)
        groups.append(current)
        if all(_valid_group(g, delta_ms) for g in groups):
            sizes = [len(g) for g in groups]
            if best is None or sizes > best[0]:
                best = (sizes, groups)
    return [sorted(g, key=lambda t: t.channel) for g in best[1]]


def random_tokens(rng, n):
    tokens = []
    for i in range(n):
        start = rng.randint(0, 3000)
        tokens.append(token(rng.choice(CHANNELS), 'sym{}'.format(i), start, start + rng.randint(0, 400),
                            confidence=rng.choice([0.5, 0.7, 0.9])))
    return tokens


def test_fuse_matches_exhaustive_partition_oracle():
    rng = random.Random(2)
    for _ in range(500):
        tokens = random_tokens(rng, rng.randint(1, 8))
        delta_ms = rng.choice([0, 100, 250, 500, 1000])
        rng.shuffle(tokens)
        sentence = fuse(tokens, FusionConfig(delta_ms))

        assert [list(t.tokens) for t in sentence.terminals] == leftmost_longest_partition(tokens, delta_ms)
        assert sorted(id(t) for t in sentence.tokens()) == sorted(id(t) for t in tokens)
        for terminal in sentence.terminals:
            assert _valid_group(terminal.tokens, delta_ms)
        anchors = [terminal.anchor for terminal in sentence.terminals]
        assert anchors == sorted(anchors)


def test_service_fuses_documents():
    that, point = token('speech', 'that', 1000, 1200), token('gesture', 'point', 1100, 1150)
    service = FusionService('fusion-1', FusionConfig(500))
    body = service.handle(Envelope('m', '', 's1', 'gw', 'fusion-1', 'fuse',
                                   {'tokens': [that.to_document(), point.to_document()]}))
    sentence = MultimodalSentence.from_document(body['sentence'])
    assert [t.tokens for t in sentence.terminals] == [(point, that)]


def test_tokens_tied_on_time_and_symbol_fuse_in_any_order():
    a = token('gesture', 'point', 100, 200, payload={'coords': '1,1'})
    b = token('gesture', 'point', 100, 200, payload={'coords': '9,9'})
    c = token('gesture', 'point', 100, 200, payload={'coords': '1,1'}, alternatives=[('circle', 0.4)])
    that = token('speech', 'that', 120, 260)
    expected = fuse([a, b, c, that], FusionConfig(500))
    for order in itertools.permutations([a, b, c, that]):
        assert fuse(list(order), FusionConfig(500)) == expected
    assert [t.tokens for t in expected.terminals] == [(a,), (c,), (b, that)]
