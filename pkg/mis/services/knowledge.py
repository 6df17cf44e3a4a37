"""
IaaS-level knowledge: a triple store standing in for the ontology (OE),
user profiles (DUP), Horn rules run by a forward-chaining inference engine
(RIE), and the pragmatic boosts the interpreter reads from the closure.
"""
import logging
import threading
from dataclasses import dataclass

from mis.services.base import Service
from mis.utils import KNOWLEDGE, BOOST_PREDICATE, BOOST_MULTIPLIER
from mis.utils.errors import KnowledgeError

logger = logging.getLogger(__name__)


def is_variable(term):
    return term.startswith('?')


@dataclass(frozen=True, order=True)
class Triple:
    subject: str
    predicate: str
    object: str

    def __post_init__(self):
        for term in (self.subject, self.predicate, self.object):
            if not isinstance(term, str) or not term:
                raise KnowledgeError('EMPTY_TERM', 'in triple {!r}'.format((self.subject, self.predicate, self.object)))

    def to_document(self):
        return [self.subject, self.predicate, self.object]

    @classmethod
    def from_document(cls, document):
        try:
            subject, predicate, obj = document
        except (TypeError, ValueError):
            raise KnowledgeError('MALFORMED_TRIPLE', repr(document))
        return cls(subject, predicate, obj)


class TripleStore:
    """
    An immutable set of facts; updates return a new store.

    :type facts: frozenset[Triple]
    """
    def __init__(self, facts=frozenset()):
        self.facts = frozenset(facts)


    def __len__(self):
        return len(self.facts)

    def __contains__(self, triple):
        return triple in self.facts

    def __eq__(self, other):
        return isinstance(other, TripleStore) and self.facts == other.facts

    def __le__(self, other):
        return self.facts <= other.facts

    def sorted(self):
        return sorted(self.facts)


@dataclass(frozen=True)
class HornRule:
    """
    if_patterns and then_templates are triples of terms; a term starting
    with "?" is a variable.
    """
    rule_id: str
    if_patterns: tuple
    then_templates: tuple

    def validate(self):
        for term in (t for pattern in self.if_patterns + self.then_templates for t in pattern):
            if not isinstance(term, str) or not term or term == '?':
                raise KnowledgeError('EMPTY_TERM', 'rule {}'.format(self.rule_id))
        bound = {t for pattern in self.if_patterns for t in pattern if is_variable(t)}
        free = sorted({t for template in self.then_templates for t in template if is_variable(t)} - bound)
        if free:
            raise KnowledgeError('NOT_RANGE_RESTRICTED', 'rule {} uses unbound {}'.format(self.rule_id, ', '.join(free)))
        return self

    @classmethod
    def from_document(cls, document):
        try:
            return cls(str(document['rule_id']),
                       tuple(_terms(p) for p in document.get('if', [])),
                       tuple(_terms(t) for t in document.get('then', []))).validate()
        except (KeyError, TypeError, AttributeError) as e:
            raise KnowledgeError('MALFORMED_RULE', '{!r}: {}'.format(document, e))


def _terms(document):
    terms = tuple(document)
    if len(terms) != 3:
        raise KnowledgeError('MALFORMED_RULE', 'pattern {!r} is not a triple'.format(document))
    return terms


@dataclass(frozen=True)
class UserProfile:
    """
    :param preferences: facts about the user, subject = user_id
    :param suitability: output channel -> suitability in [0, 1]
    """
    user_id: str
    preferences: tuple = ()
    suitability: dict = None

    @classmethod
    def from_document(cls, document):
        try:
            user_id = str(document['user_id'])
            preferences = tuple(Triple(user_id, str(p), str(o)) for p, o in document.get('preferences', []))
            suitability = {str(c): float(s) for c, s in document.get('suitability', {}).items()}
        except (KeyError, TypeError, ValueError, AttributeError) as e:
            raise KnowledgeError('MALFORMED_PROFILE', str(e))
        for channel, value in suitability.items():
            if not 0.0 <= value <= 1.0:
                raise KnowledgeError('BAD_SUITABILITY', '{}: {}'.format(channel, value))
        return cls(user_id, preferences, suitability)

    def to_document(self):
        return {'user_id': self.user_id,
                'preferences': [[t.predicate, t.object] for t in self.preferences],
                'suitability': dict(self.suitability or {})}


def profiles_by_user(profiles):
    """
    :param profiles: one UserProfile or several
    :return: user_id -> UserProfile, in the order given
    :rtype: dict[str, UserProfile]
    """
    if isinstance(profiles, UserProfile):
        profiles = [profiles]
    by_user = {}
    for profile in profiles:
        if profile.user_id in by_user:
            raise KnowledgeError('DUPLICATE_USER', profile.user_id)
        by_user[profile.user_id] = profile
    if not by_user:
        raise KnowledgeError('NO_PROFILE', 'at least one user profile is needed')
    return by_user


def assert_facts(store, triples):
    """
    Set union; asserting a known fact changes nothing.

    :type store: TripleStore
    :type triples: iterable of Triple
    :rtype: TripleStore
    """
    triples = list(triples)
    for triple in triples:
        if not (triple.subject and triple.predicate and triple.object):
            raise KnowledgeError('EMPTY_TERM', repr(triple))
    return TripleStore(store.facts | set(triples))


def _unify(pattern, triple, binding):
    extended = dict(binding)
    for term, value in zip(pattern, (triple.subject, triple.predicate, triple.object)):
        if is_variable(term):
            if extended.setdefault(term, value) != value:
                return None
        elif term != value:
            return None
    return extended


def _solve(patterns, facts):
    bindings = [{}]
    for pattern in patterns:
        bindings = [extended for binding in bindings for triple in facts
                    for extended in (_unify(pattern, triple, binding),) if extended is not None]
        if not bindings:
            break
    return bindings


def query(store, pattern):
    """
    :param pattern: (subject, predicate, object) terms, variables allowed
    :return: variable bindings, sorted
    :rtype: list[dict]
    """
    bindings = _solve([tuple(pattern)], store.facts)
    return sorted(bindings, key=lambda b: sorted(b.items()))


def infer(store, rules):
    """
    Least fixpoint of the rules over the store, by naive iteration.

    :type store: TripleStore
    :type rules: list[HornRule]
    :rtype: TripleStore
    """
    for rule in rules:
        rule.validate()
    facts = set(store.facts)
    rounds = 0
    while True:
        rounds += 1
        derived = set()
        for rule in rules:
            for binding in _solve(rule.if_patterns, facts):
                for template in rule.then_templates:
                    triple = Triple(*(binding.get(term, term) for term in template))
                    if triple not in facts:
                        derived.add(triple)
        if not derived:
            break
        facts |= derived
    logger.debug('closure of %d facts reached in %d rounds', len(facts), rounds)
    return TripleStore(facts)


def boosts_for(store, user_id):
    """
    :return: rule_id -> multiplier for every (user_id, boost_rule, rule_id) fact;
             rules not listed count 1.0
    :rtype: dict[str, float]
    """
    return {t.object: BOOST_MULTIPLIER for t in store.facts
            if t.subject == user_id and t.predicate == BOOST_PREDICATE}


class KnowledgeService(Service):
    """
    The knowledge services of the IaaS layer behind one address. The store
    is owned here; mutations happen under a lock and the closure is
    recomputed lazily after each change.

    :param profiles: one UserProfile or several; the first is the default user
    :type rules: list[HornRule]
    """
    kind = KNOWLEDGE

    def __init__(self, service_id, profiles, rules):
        super().__init__(service_id)
        self.profiles = profiles_by_user(profiles)
        """user_id -> the UserProfile served to fission"""
        self.default_user = next(iter(self.profiles))
        self.rules = [rule.validate() for rule in rules]
        self.store = assert_facts(TripleStore(), (t for p in self.profiles.values() for t in p.preferences))
        self._closure = None
        self._lock = threading.Lock()


    def closure(self):
        with self._lock:
            if self._closure is None:
                self._closure = infer(self.store, self.rules)
            return self._closure

    def assert_triples(self, triples):
        with self._lock:
            self.store = assert_facts(self.store, triples)
            self._closure = None

    def define_profile(self, profile):
        """
        Adds a user, or replaces the profile of a known one. Its preferences
        are asserted; facts of a replaced profile stay in the store.

        :type profile: UserProfile
        """
        with self._lock:
            self.profiles[profile.user_id] = profile
            self.store = assert_facts(self.store, profile.preferences)
            self._closure = None
        logger.info('%s: profile of %s defined', self.service_id, profile.user_id)

    def profile(self, user_id=None):
        """
        :raises mis.utils.errors.KnowledgeError: UNKNOWN_USER
        :rtype: UserProfile
        """
        user_id = self.default_user if user_id is None else user_id
        with self._lock:
            profile = self.profiles.get(user_id)
        if profile is None:
            raise KnowledgeError('UNKNOWN_USER', user_id)
        return profile

    def operations(self):
        return {
            'assert': self._assert,
            'infer': lambda body: {'size': len(self.closure())},
            'query': self._query,
            'boosts': lambda body: {'boosts': boosts_for(self.closure(), body['user_id'])},
            'profile': lambda body: {'profile': self.profile(body.get('user_id')).to_document()},
            'define_profile': self._define_profile,
        }

    def _assert(self, body):
        self.assert_triples(Triple.from_document(t) for t in body['triples'])
        return {'size': len(self.store)}

    def _query(self, body):
        return {'bindings': query(self.closure(), Triple.from_document(body['pattern']).to_document())}

    def _define_profile(self, body):
        self.define_profile(UserProfile.from_document(body['profile']))
        with self._lock:
            return {'users': sorted(self.profiles)}
