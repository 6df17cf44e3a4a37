
class VirtualClock:
    """
    Simulation time in integer milliseconds since scenario start. Time only
    moves when its owner advances it, and never backwards.

    :param now: starting time, default 0
    :type now: int
    """
    def __init__(self, now=0):
        if now < 0:
            raise ValueError('virtual time starts at a non-negative value')
        self.now = now
        """current virtual time in ms"""


    def advance(self, dt):
        """
        :param dt: non-negative number of milliseconds
        :type dt: int
        :return: the clock itself
        :rtype: VirtualClock
        """
        if dt < 0:
            raise ValueError('dt must be non-negative, got {}'.format(dt))
        self.now += dt
        return self

    def advance_to(self, t):
        """Moves to ``t`` if it lies in the future; a past ``t`` is a no-op."""
        if t > self.now:
            self.advance(t - self.now)
        return self
