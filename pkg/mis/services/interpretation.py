"""
The multimodal grammar (DMLG) and the interpretation/disambiguation service.

A grammar rule is a flat sequence of terminal patterns matched position by
position against a multimodal sentence. Candidates are (rule, assignment)
pairs where an assignment picks one n-best alternative per token; they are
scored by rule weight, pragmatic boost and the confidences of the chosen
alternatives.
"""
import heapq
import logging
import math
from dataclasses import dataclass

from mis.services.base import Service
from mis.structures.data import AmbiguityReport, Interpretation, MultimodalSentence
from mis.utils import INTERPRETER, MODAL_PROPAGATED, MULTIMODAL_CONFLICT, SCORE_TOLERANCE
from mis.utils.errors import GrammarError, InterpretationError

logger = logging.getLogger(__name__)

DEFAULT_THETA = 0.8
DEFAULT_BEAM = 64


@dataclass(frozen=True)
class TerminalPattern:
    """
    :param requirements: sorted (channel, symbol) pairs the terminal must carry
    :param captures: (slot_name, channel, payload_key) triples
    """
    requirements: tuple
    captures: tuple = ()

    def to_document(self):
        return {'requires': dict(self.requirements),
                'captures': [{'slot': s, 'channel': c, 'key': k} for s, c, k in self.captures]}


@dataclass(frozen=True)
class GrammarRule:
    rule_id: str
    act: str
    pattern: tuple
    weight: float = 1.0

    def to_document(self):
        return {'rule_id': self.rule_id, 'act': self.act, 'weight': self.weight,
                'pattern': [p.to_document() for p in self.pattern]}


@dataclass(frozen=True)
class Grammar:
    rules: tuple = ()
    theta: float = DEFAULT_THETA
    beam: int = DEFAULT_BEAM

    def rule(self, rule_id):
        return next(r for r in self.rules if r.rule_id == rule_id)

    def to_document(self):
        return {'rules': [r.to_document() for r in self.rules], 'theta': self.theta, 'beam': self.beam}


@dataclass(frozen=True)
class Candidate:
    rule_id: str
    assignment: tuple
    slots: dict
    score: float


def load_grammar(document):
    """
    Parses and validates a grammar document::

        {"theta": 0.8, "beam": 64,
         "rules": [{"rule_id": "PUT_THERE", "act": "PUT_THERE", "weight": 1.0,
                    "pattern": [{"requires": {"speech": "put"}},
                                {"requires": {"speech": "that", "gesture": "point"},
                                 "captures": [{"slot": "obj", "channel": "gesture", "key": "coord"}]}]}]}

    :type document: dict
    :rtype: Grammar
    """
    if not isinstance(document, dict):
        raise GrammarError('MALFORMED_GRAMMAR', 'a grammar is an object')
    theta = document.get('theta', DEFAULT_THETA)
    beam = document.get('beam', DEFAULT_BEAM)
    if isinstance(theta, bool) or not isinstance(theta, (int, float)) or not 0 < theta <= 1:
        raise GrammarError('BAD_THETA', 'theta must lie in (0, 1], got {!r}'.format(theta))
    if isinstance(beam, bool) or not isinstance(beam, int) or beam < 1:
        raise GrammarError('BAD_BEAM', 'beam must be a positive integer, got {!r}'.format(beam))

    rules = []
    seen = set()
    for rule_document in document.get('rules', []):
        try:
            rule_id = str(rule_document['rule_id'])
            act = str(rule_document.get('act', rule_id))
            weight = rule_document.get('weight', 1.0)
            patterns = rule_document.get('pattern', [])
        except (KeyError, TypeError, AttributeError) as e:
            raise GrammarError('MALFORMED_GRAMMAR', 'malformed rule {!r}: {}'.format(rule_document, e))

        if rule_id in seen:
            raise GrammarError('DUPLICATE_RULE_ID', rule_id)
        seen.add(rule_id)
        if not patterns:
            raise GrammarError('EMPTY_PATTERN', rule_id)
        if isinstance(weight, bool) or not isinstance(weight, (int, float)) or not 0 < weight <= 1:
            raise GrammarError('BAD_WEIGHT', '{}: weight must lie in (0, 1], got {!r}'.format(rule_id, weight))

        rules.append(GrammarRule(rule_id, act, tuple(_load_pattern(rule_id, p) for p in patterns), float(weight)))

    return Grammar(tuple(rules), float(theta), beam)


def _load_pattern(rule_id, document):
    try:
        requirements = tuple(sorted((str(c), str(s)) for c, s in document.get('requires', {}).items()))
        captures = tuple((str(c['slot']), str(c['channel']), str(c['key'])) for c in document.get('captures', []))
    except (KeyError, TypeError, AttributeError) as e:
        raise GrammarError('MALFORMED_GRAMMAR', '{}: malformed pattern {!r}: {}'.format(rule_id, document, e))
    if not requirements:
        raise GrammarError('EMPTY_PATTERN', '{}: a terminal pattern needs at least one requirement'.format(rule_id))
    required = {channel for channel, _ in requirements}
    for slot, channel, _ in captures:
        if channel not in required:
            raise GrammarError('CAPTURE_CHANNEL_NOT_REQUIRED', '{}: slot {} captures from {}'
                               .format(rule_id, slot, channel))
    return TerminalPattern(requirements, captures)


def _offsets(sentence):
    offsets = []
    position = 0
    for terminal in sentence.terminals:
        offsets.append(position)
        position += len(terminal.tokens)
    return offsets


def match_rule(rule, sentence, assignment):
    """
    Matches a rule against a sentence under one assignment. Tokens a pattern
    does not mention are ignored.

    :type rule: GrammarRule
    :type sentence: mis.structures.data.MultimodalSentence
    :param assignment: one alternative index per token, in MultimodalSentence.tokens() order
    :type assignment: tuple[int]
    :return: the captured slots, or None on no match
    :rtype: dict or None
    """
    if len(rule.pattern) != len(sentence.terminals):
        return None

    slots = {}
    for pattern, terminal, offset in zip(rule.pattern, sentence.terminals, _offsets(sentence)):
        chosen = {}
        for index, token in enumerate(terminal.tokens):
            chosen[token.channel] = token.alternatives[assignment[offset + index]]
        for channel, symbol in pattern.requirements:
            if channel not in chosen or chosen[channel].symbol != symbol:
                return None
        for slot, channel, key in pattern.captures:
            value = chosen[channel].payload.get(key)
            if value is None:
                return None
            slots[slot] = value
    return slots


def _confidence_product(sentence, assignment):
    confidences = sorted(token.alternatives[i].confidence for token, i in zip(sentence.tokens(), assignment))
    return math.prod(confidences)


def score(candidate, sentence, grammar, boosts):
    """
    weight(rule) * boost(rule) * the product of the assigned confidences of
    every token in the sentence, captured or not.

    :type candidate: Candidate
    :type boosts: dict[str, float]
    :rtype: float
    """
    rule = grammar.rule(candidate.rule_id)
    return rule.weight * boosts.get(candidate.rule_id, 1.0) * _confidence_product(sentence, candidate.assignment)


def _allowed_indices(rule, sentence):
    """
    For every token, the alternative indices that can take part in a match
    of ``rule``: a token on a required channel keeps the alternatives
    carrying the required symbol and every captured key, any other token
    keeps all of them.

    :return: one list of indices per token, or None when the rule cannot match
    :rtype: list[list[int]] or None
    """
    if len(rule.pattern) != len(sentence.terminals):
        return None
    allowed = []
    for pattern, terminal in zip(rule.pattern, sentence.terminals):
        required = dict(pattern.requirements)
        keys = {}
        for _, channel, key in pattern.captures:
            keys.setdefault(channel, []).append(key)
        if any(terminal.token_on(channel) is None for channel in required):
            return None
        for token in terminal.tokens:
            indices = list(range(len(token.alternatives)))
            if token.channel in required:
                indices = [i for i in indices if token.alternatives[i].symbol == required[token.channel]
                           and all(key in token.alternatives[i].payload for key in keys.get(token.channel, ()))]
                if not indices:
                    return None
            allowed.append(indices)
    return allowed


def _assignments_best_first(sentence, allowed):
    """
    Yields (-confidence product, assignment) for every assignment drawn from
    ``allowed``, highest product first, ties by assignment.
    """
    def assignment_of(ranks):
        return tuple(indices[rank] for indices, rank in zip(allowed, ranks))

    start = tuple(0 for _ in allowed)
    first = assignment_of(start)
    heap = [(-_confidence_product(sentence, first), first, start)]
    seen = {start}
    while heap:
        negated, assignment, ranks = heapq.heappop(heap)
        yield negated, assignment
        for position, indices in enumerate(allowed):
            if ranks[position] + 1 < len(indices):
                successor = ranks[:position] + (ranks[position] + 1,) + ranks[position + 1:]
                if successor not in seen:
                    seen.add(successor)
                    following = assignment_of(successor)
                    heapq.heappush(heap, (-_confidence_product(sentence, following), following, successor))


def _ranked(rule, sentence, allowed):
    for negated, assignment in _assignments_best_first(sentence, allowed):
        yield negated, assignment, rule.rule_id


def candidates(sentence, grammar, boosts):
    """
    Matching (rule, assignment) pairs, best-first over assignments with rules
    by id on equal assignments, truncated at grammar.beam. Each rule only
    walks the alternatives it can use, so the work grows with the beam and
    not with the number of assignments.

    :rtype: list[Candidate]
    """
    found = []
    if not sentence.terminals:
        return found
    streams = []
    for rule in grammar.rules:
        allowed = _allowed_indices(rule, sentence)
        if allowed is not None:
            streams.append(_ranked(rule, sentence, allowed))

    for _, assignment, rule_id in heapq.merge(*streams):
        slots = match_rule(grammar.rule(rule_id), sentence, assignment)
        if slots is None:
            continue
        candidate = Candidate(rule_id, assignment, slots, 0.0)
        found.append(Candidate(rule_id, assignment, slots, score(candidate, sentence, grammar, boosts)))
        if len(found) >= grammar.beam:
            break
    return found


def choose(found, theta):
    """
    Picks the winner among scored candidates and classifies the ambiguity of
    the candidates within the theta band of the best score.

    :type found: list[Candidate]
    :rtype: (Candidate, AmbiguityReport)
    """
    best = max(c.score for c in found)
    contenders = [c for c in found if c.score >= best * (1 - SCORE_TOLERANCE)]
    winner = min(contenders, key=lambda c: (c.rule_id, c.assignment))

    band = [c for c in found if c.score >= theta * best * (1 - SCORE_TOLERANCE)]
    assignments = {c.assignment for c in band}
    flags = []
    if len(assignments) > 1:
        flags.append(MODAL_PROPAGATED)
    rules_per_assignment = {}
    for c in band:
        rules_per_assignment.setdefault(c.assignment, set()).add(c.rule_id)
    if any(len(rule_ids) > 1 for rule_ids in rules_per_assignment.values()):
        flags.append(MULTIMODAL_CONFLICT)

    return winner, AmbiguityReport(tuple(sorted(flags)), len(band) - 1)


def interpret(sentence, grammar, boosts=None):
    """
    :type sentence: mis.structures.data.MultimodalSentence
    :type grammar: Grammar
    :param boosts: rule_id -> multiplier, missing rules count 1.0
    :type boosts: dict[str, float]
    :rtype: (mis.structures.data.Interpretation, mis.structures.data.AmbiguityReport)
    """
    found = candidates(sentence, grammar, boosts or {})
    if not found:
        raise InterpretationError('NO_MATCH', 'no rule matches a sentence of {} terminals'
                                  .format(len(sentence.terminals)))
    winner, ambiguity = choose(found, grammar.theta)
    act = grammar.rule(winner.rule_id).act
    logger.debug('interpreted %s (score %.6f) out of %d candidates, flags %s',
                 winner.rule_id, winner.score, len(found), list(ambiguity.flags))
    return Interpretation(act, dict(winner.slots), winner.score, winner.rule_id, winner.assignment), ambiguity


class InterpretationService(Service):
    """
    Holds the grammar (DMLG) and answers "interpret" requests; the grammar
    itself is served back on "grammar".
    """
    kind = INTERPRETER

    def __init__(self, service_id, grammar):
        super().__init__(service_id)
        self.grammar = grammar


    def operations(self):
        return {'interpret': self._interpret, 'grammar': lambda body: self.grammar.to_document()}

    def _interpret(self, body):
        sentence = MultimodalSentence.from_document(body['sentence'])
        interpretation, ambiguity = interpret(sentence, self.grammar, body.get('boosts', {}))
        return {'interpretation': interpretation.to_document(), 'ambiguity': ambiguity.to_document()}
