"""Adaptation between two regimes of task heterogeneity.

Thirty agents share one of three regression vectors, perturbed per agent
with dispersion sigma_c2.  At sigma_c2 = 0 the best policy is to pool the
whole group; at sigma_c2 = 1 no other agent is worth much and local
training wins.  The learned weights move between the two without being
told the groups.  Desk-scale version of the synthetic study: a handful of
repetitions, so expect noise around the printed means.
"""

import numpy as np

from fedkme.datagen import ConceptShiftSpec, concept_shift_test_sets, gen_concept_shift
from fedkme.fedsim import ProtocolConfig, baseline_weights, run_protocol
from fedkme.kernels import concept_shift_kernel
from fedkme.models import ModelSpec, evaluate, fit_weighted
from fedkme.qagg import default_config


def main() -> None:
    b, n_k, d = 30, 10, 10
    mspec = ModelSpec(kind="ridge", lam=0.07)
    base = default_config(b)
    qcfg = default_config(b, c_q=base.c_q * 0.6, c_p=base.c_p * 0.3)

    print("sigma_c2   Qagg  Oracle   Local")
    for sc2 in (0.0, 0.3, 0.5, 0.7, 1.0):
        mse = {"Qagg": [], "Oracle": [], "Local": []}
        for rep in range(5):
            spec = ConceptShiftSpec(
                sigma_c2=sc2, b=b, n_k=n_k, d=d, sigma_y2=8.0, seed=1000 + rep
            )
            datasets, _, groups = gen_concept_shift(spec)
            tests = concept_shift_test_sets(spec, 400)
            cfg = ProtocolConfig(
                kernel=concept_shift_kernel(d), d_rff=200, seed=7,
                qagg=qcfg, model=mspec,
            )
            for target in (0, 10, 20):
                policies = {
                    "Qagg": run_protocol(cfg, datasets, target).weights,
                    "Oracle": baseline_weights("oracle", datasets, target, groups=groups),
                    "Local": baseline_weights("local", datasets, target),
                }
                for name, w in policies.items():
                    model = fit_weighted(mspec, w, datasets)
                    mse[name].append(evaluate(model, tests[target], metric="mse"))
        print(
            f"{sc2:8.2f} {np.mean(mse['Qagg']):6.2f}"
            f" {np.mean(mse['Oracle']):7.2f} {np.mean(mse['Local']):7.2f}"
        )


if __name__ == "__main__":
    main()
