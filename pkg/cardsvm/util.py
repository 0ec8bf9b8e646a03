import time, math

def to_str(x, encoding="utf-8"):
    if isinstance(x, bytes):
        x = x.decode(encoding)
    return x

class Deadline(object):

    def __init__(self, seconds=None):
        """
        Wall-clock budget.

        :param seconds: budget in seconds, None for unlimited
        """
        self.Start = time.monotonic()
        self.End = math.inf if seconds is None else self.Start + max(float(seconds), 0.0)

    def remaining(self):
        return max(self.End - time.monotonic(), 0.0)

    def expired(self):
        return time.monotonic() >= self.End

    def elapsed(self):
        return time.monotonic() - self.Start

    def limit(self):
        """
        Remaining time as a number, or None when unlimited.
        """
        r = self.remaining()
        return None if math.isinf(r) else r
