"""Non-adaptive versus residual-driven online enrichment for a few seeds.

Prints, per seed, the cumulative online dimension (summed over slabs) at
which e2 first drops below ``--target``.
"""

import argparse

from stgmsfem import experiments as ex
from stgmsfem.config import ExperimentConfig, load
from stgmsfem.offline import build_offline
from stgmsfem.online import run_online, write_history_csv


def first_reaching(history, target):
    for level in sorted({h["level"] for h in history}):
        rows = [h for h in history if h["level"] == level]
        if max(h["e2"] for h in rows) <= target:
            return sum(h["dof"] for h in rows)
    return None


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config")
    ap.add_argument("--seeds", type=int, nargs="+", default=[1])
    ap.add_argument("--theta", type=float, default=0.7)
    ap.add_argument("--sweeps", type=int, default=5)
    ap.add_argument("--adaptive-sweeps", type=int, default=8)
    ap.add_argument("--target", type=float, default=0.01)
    ap.add_argument("--out", default="out/online_compare")
    args = ap.parse_args()
    cfg = load(args.config) if args.config else ExperimentConfig(L=4)

    problem = ex.build_problem(cfg)
    local = ex.build_local(problem, args.seeds, cfg.L + cfg.p_bf)
    for seed in args.seeds:
        found = {}
        for label, theta, sweeps in (("plain", None, args.sweeps),
                                     ("adaptive", args.theta, args.adaptive_sweeps)):
            basis = build_offline(problem.mesh, local[seed], cfg.L, cfg.p_bf)
            history, _ = run_online(problem.mesh, problem.f, problem.beta, basis,
                                    problem.systems, problem.u_h, problem.norms, sweeps, theta)
            write_history_csv(f"{args.out}/{label}_seed{seed}.csv", history,
                              ex.header_lines(cfg.replace(theta=theta, sweeps=sweeps), seed))
            found[label] = first_reaching(history, args.target)
            last = [h for h in history if h["slab"] == 1][-1]
            print(f"seed {seed} {label:8s}: final e1={last['e1']:.3e} e2={last['e2']:.3e}, "
                  f"dofs to e2<={args.target:g}: {found[label]}")


if __name__ == "__main__":
    main()
