from dataclasses import dataclass, fields, replace, asdict

from mis.utils.errors import ConfigError


@dataclass(frozen=True)
class MeshConfig:
    """
    Every tunable of a mesh run. Built from defaults, then an optional config
    document, then command line flags.
    """
    tau_end_ms: int = 1000
    fusion_delta_ms: int = 500
    fission_epsilon: float = 0.05
    q_hi: int = 4
    q_lo: int = 1
    window_w: int = 3
    min_instances: int = 1
    max_instances: int = 8
    service_cost_ms: int = 10
    tick_ms: int = 100
    lease_ttl_ms: int = 30000
    service_rate: int = 1
    theta: float = None
    beam: int = None

    @classmethod
    def from_document(cls, document, base=None):
        """
        :param document: mapping of config keys to values
        :type document: dict
        :param base: config whose values are overridden, defaults if None
        :type base: MeshConfig
        """
        if not isinstance(document, dict):
            raise ConfigError('config document must be an object')
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(document) - known)
        if unknown:
            raise ConfigError('unknown config keys: {}'.format(', '.join(unknown)))
        config = replace(base or cls(), **document)
        return config.validate()

    def with_overrides(self, **overrides):
        """Like from_document but skips keys whose value is None."""
        return MeshConfig.from_document({k: v for k, v in overrides.items() if v is not None}, base=self)

    def validate(self):
        for name in ('tau_end_ms', 'fusion_delta_ms', 'q_hi', 'q_lo', 'window_w', 'min_instances',
                     'max_instances', 'service_cost_ms', 'tick_ms', 'lease_ttl_ms', 'service_rate'):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError('{} must be an integer'.format(name))
        if self.tau_end_ms <= 0:
            raise ConfigError('tau_end_ms must be positive')
        if self.fusion_delta_ms < 0:
            raise ConfigError('fusion_delta_ms must be non-negative')
        for name in ('fission_epsilon', 'theta'):
            value = getattr(self, name)
            if value is not None and (isinstance(value, bool) or not isinstance(value, (int, float))):
                raise ConfigError('{} must be a number'.format(name))
        if not 0 <= self.fission_epsilon <= 1:
            raise ConfigError('fission_epsilon must lie in [0, 1]')
        if self.q_lo >= self.q_hi:
            raise ConfigError('q_lo must be smaller than q_hi')
        if self.window_w < 1:
            raise ConfigError('window_w must be at least 1')
        if not 1 <= self.min_instances <= self.max_instances:
            raise ConfigError('instance bounds must satisfy 1 <= min <= max')
        if self.service_cost_ms <= 0 or self.tick_ms <= 0 or self.lease_ttl_ms <= 0:
            raise ConfigError('service_cost_ms, tick_ms and lease_ttl_ms must be positive')
        if self.service_rate < 0:
            raise ConfigError('service_rate must be non-negative')
        if self.theta is not None and not 0 < self.theta <= 1:
            raise ConfigError('theta must lie in (0, 1]')
        if self.beam is not None and (isinstance(self.beam, bool) or not isinstance(self.beam, int) or self.beam < 1):
            raise ConfigError('beam must be a positive integer')
        return self

    def to_document(self):
        return {k: v for k, v in asdict(self).items() if v is not None}
