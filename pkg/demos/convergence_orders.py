"""Global and local convergence orders against an adaptive reference.

Measures the global error at t = 1 for halving step sizes h = 2^-k and
fits the order for each method, then repeats the experiment over a
single step to expose the local order of the two splittings.
"""

import numpy as np

import cpsplit


def main():
    problem = cpsplit.builtin_problem("problem1")

    study = cpsplit.run_convergence_study(
        problem, cpsplit.METHODS, range(6, 13), t_end=1.0
    )
    print(f"global error at t = {study.t_end:g} on {study.problem_name}")
    header = f"{'h':>12s}" + "".join(f"{m:>14s}" for m in cpsplit.METHODS)
    print(header)
    for i, h in enumerate(study.hs):
        row = f"{h:12.3e}"
        for method in cpsplit.METHODS:
            row += f"{study.errors[method][i]:14.3e}"
        print(row)
    print(f"{'slope':>12s}" + "".join(
        f"{study.slopes[m]:14.2f}" for m in cpsplit.METHODS
    ))

    print()
    print("one-step error (order is one higher than the global one)")
    ks = range(4, 11)
    for method in ("exs-o2", "ims-o2"):
        errs = [
            cpsplit.global_error(problem, method, h=2.0**-k, t_end=2.0**-k)
            for k in ks
        ]
        slope = np.polyfit([np.log(2.0**-k) for k in ks], np.log(errs), 1)[0]
        print(f"{method}: fitted local order {slope:.2f}")


if __name__ == "__main__":
    main()
