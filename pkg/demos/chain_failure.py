"""Why averaging over training domains can be unsafe, on a 3-state chain.

The chain has one decision state and two arms. Every training domain
coincides with the simulator, so randomized training sees no spread at all;
deployment shifts the kernel of the risky arm upward. The exact solver
takes the risky arm (it looks exactly on-budget in sim) and blows the
budget by a third when deployed. A disagreement penalty prices that risk:
moderate weights flip the choice to the safe arm, oversized weights mark
the run infeasible instead of pretending safety.

Run:  python demos/chain_failure.py [--lams 0,2,4,9,12]
"""

import argparse

import numpy as np

from safedr.cmdp import TabularPolicy, evaluate_policy, solve_cmdp_lp
from safedr.envs import ChainSpec, build_chain
from safedr.harness.config import from_mapping
from safedr.harness.runner import run_experiment
from safedr.pessimism import upsilon_exact_matrix


def chain_config(lam):
    return from_mapping({
        "experiment": {"name": f"chain-lam{lam:g}", "seed": 0,
                       "out": "runs/demo-chain"},
        "env": {"kind": "chain"},
        "penalty": {"lam": lam, "mode": "exact"}})


def arm_policy(arm):
    probs = np.zeros((3, 2))
    probs[:, arm] = 1.0
    return TabularPolicy(probs)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--lams", default="0,2,4,9,12",
                        help="comma-separated penalty weights")
    args = parser.parse_args()
    lams = [float(v) for v in args.lams.split(",")]

    pair = build_chain(ChainSpec())
    sim, real = pair.sim_env, pair.real_env
    print("decision-state kernels (rows: arm, cols: next state)")
    print(f"  training   {np.round(sim.transitions[0], 3).tolist()}")
    print(f"  deployment {np.round(real.transitions[0], 3).tolist()}")
    print(f"  budget {pair.budget:.4f}, horizon discounted at "
          f"gamma={sim.gamma}")
    print()

    # what plain randomized training does: solve the simulated average
    sol = solve_cmdp_lp(sim)
    deployed = evaluate_policy(real, sol.policy).c_value
    print("unpenalized optimum")
    print(f"  risky-arm mass {sol.policy.probs[0, 0]:.4f}")
    print(f"  sim cost {sol.c_value:.4f} (exactly on budget)")
    print(f"  deployed cost {deployed:.4f} = "
          f"{deployed / pair.budget:.4f}x budget")
    print()

    # the exact disagreement already prices the shift before seeing it:
    # the train box is a single point, so the spread is the kernel's own
    # next-state variance in embedding space
    ups = upsilon_exact_matrix(pair.family, np.array([[0.0]]), pair.embedding)
    c_risky = evaluate_policy(sim, arm_policy(0)).c_value
    c_safe = evaluate_policy(sim, arm_policy(1)).c_value
    lam_max = (pair.budget - c_safe) / ups[0, 1]
    print("exact disagreement at the decision state: "
          f"risky {ups[0, 0]:.4f}, safe {ups[0, 1]:.4f}")
    print(f"penalized sim costs: risky {c_risky:.2f} + {ups[0, 0]:.4f} lam, "
          f"safe {c_safe:.2f} + {ups[0, 1]:.4f} lam")
    print(f"any lam in (0, {lam_max:g}] keeps the safe arm feasible; "
          "above that everything is priced out")
    print()

    header = ("lam", "arm", "C_sim_penalized", "C_deployed", "verdict")
    print(("{:>6}  {:>5}  {:>16}  {:>11}  {}").format(*header))
    for lam in lams:
        out = run_experiment(chain_config(lam))
        m = out.result.final_metrics
        arm = "risky" if out.result.policy.probs[0, 0] > 0.5 else "safe"
        verdict = out.summary["safety"]
        if out.result.infeasible:
            verdict += " (infeasible flag)"
        print(f"{lam:>6g}  {arm:>5}  {m.c_train_penalized:>16.4f}  "
              f"{out.result.final_c_eval:>11.4f}  {verdict}")
    print()
    print("the flag matters: at the largest weight the solver refuses to")
    print("call the run safe rather than minimizing a fiction")


if __name__ == "__main__":
    main()
