from .harness import main, run, UsageError
