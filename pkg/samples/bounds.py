import sys, getopt
import cardsvm

Usage = """
python bounds.py [-C <C>] [-B <B>] [-l <label column>] [-p <positive label>] <dataset.csv>
"""

opts, args = getopt.getopt(sys.argv[1:], "C:B:l:p:")
opts = dict(opts)

if not args:
    print(Usage)
    sys.exit(2)

C = float(opts.get("-C", 10))
B = int(opts.get("-B", 2))
data = cardsvm.load_csv(args[0], opts.get("-l"), opts.get("-p", "yes"))
data, _ = cardsvm.standardize(data)

svm = cardsvm.solve_svm(data, C)
heur = cardsvm.heuristic_procedure(data, C, B, cardsvm.Strategy.KernelSearch)
M = heur.Metadata["M"]

print("SVM optimum:   ", svm.Objective)
print("BoxMP (M=%.4g): " % (M,), cardsvm.solve_boxmp(data, C, B, M).LowerBound)
print("DSCoP:         ", cardsvm.solve_dscop(data, C, B).LowerBound)
print("DSCoMP:        ", cardsvm.solve_dscomp(data, C, B, M).LowerBound)
print("heuristic UB:  ", heur.UB, "features:", sorted(heur.Selected))
