import sys, getopt, logging
import cardsvm

Usage = """
python exact.py [-C <C>] [-B <B>] [-s <s>] [-t <time limit>] [-p <positive label>] [-v] <dataset.csv>
"""

opts, args = getopt.getopt(sys.argv[1:], "C:B:s:t:p:v")
opts = dict(opts)

if not args:
    print(Usage)
    sys.exit(2)

logging.basicConfig(level=logging.INFO if "-v" in opts else logging.WARNING)

C = float(opts.get("-C", 10))
B = int(opts.get("-B", 2))
s = int(opts.get("-s", 1))
time_limit = float(opts.get("-t", 600))

data = cardsvm.load_csv(args[0], positive_label=opts.get("-p", "yes"))
config = cardsvm.ProblemConfig(C, B, exact_s=s, heur_rho=min(5, data.n))
trace = []
result = cardsvm.exact_procedure(data, C, B, s, config=config, time_limit=time_limit, trace=trace)

for record in trace:
    print("iteration %(iter)d: |K|=%(K)d LB=%(LB).8g UB=%(UB).8g gap=%(gap).4f%%" % record)
print(result)
print("selected features:", sorted(result.support))
