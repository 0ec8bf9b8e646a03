import os, logging
from pythreader import Primitive, synchronized, TaskQueue, Task

logger = logging.getLogger(__name__)

THREADS_ENV = "SPARSE_SVM_THREADS"

class Collector(Primitive):

    def __init__(self, njobs):
        Primitive.__init__(self, name="Collector")
        self.Results = [None] * njobs
        self.Errors = {}                    # {job index -> exception}
        self.Pending = njobs

    @synchronized
    def done(self, index, result=None, error=None):
        if error is not None:
            self.Errors[index] = error
        else:
            self.Results[index] = result
        self.Pending -= 1
        self.wakeup()

    @synchronized
    def wait_all(self):
        while self.Pending > 0:
            self.sleep(0.5)

class SolveTask(Task):

    def __init__(self, collector, index, job):
        Task.__init__(self, name=f"job {index}")
        self.Collector = collector
        self.Index = index
        self.Job = job

    def run(self):
        try:
            result = self.Job()
        except Exception as e:
            logger.debug("job %d failed: %s", self.Index, e)
            self.Collector.done(self.Index, error=e)
        else:
            self.Collector.done(self.Index, result)

def worker_count(requested=1):
    """
    Number of workers to use: the request capped by the SPARSE_SVM_THREADS environment variable.
    """
    n = max(int(requested or 1), 1)
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            n = min(n, max(int(cap), 1))
        except ValueError:
            logger.warning("ignoring non-integer %s=%r", THREADS_ENV, cap)
    return n

def run_parallel(jobs, nworkers=1):
    """
    Runs independent callables and returns their results in submission order.
    The first failing job (by index) re-raises its exception after all jobs finish.

    :param jobs: iterable of zero-argument callables
    :param int nworkers: requested number of worker threads; 1 runs inline
    """
    jobs = list(jobs)
    n = worker_count(nworkers)
    if n <= 1 or len(jobs) <= 1:
        return [job() for job in jobs]
    collector = Collector(len(jobs))
    queue = TaskQueue(n)
    for i, job in enumerate(jobs):
        queue << SolveTask(collector, i, job)
    collector.wait_all()
    if collector.Errors:
        raise collector.Errors[min(collector.Errors)]
    return collector.Results
