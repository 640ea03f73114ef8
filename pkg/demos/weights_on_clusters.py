"""Who should agent 0 collaborate with?

Thirty agents fall into three covariate clusters.  Each agent uploads a
random-feature sketch of its inputs; the target solves a penalized quadratic
program over the simplex and the learned weights concentrate on the agents
whose data actually looks like its own.
"""

import numpy as np

from fedkme.datagen import CovariateShiftSpec, gen_covariate_shift
from fedkme.fedsim import ProtocolConfig, run_protocol
from fedkme.kernels import KernelSpec
from fedkme.models import ModelSpec
from fedkme.qagg import ones_config


def main() -> None:
    spec = CovariateShiftSpec(b=30, n_k=20, d=4, k1=9, k2=9, seed=0)
    datasets, groups = gen_covariate_shift(spec)
    cfg = ProtocolConfig(
        kernel=KernelSpec(kind="gaussian", ambient_dim=4, bandwidth=(0.5,) * 4),
        d_rff=300,
        seed=11,
        qagg=ones_config(),
        model=ModelSpec(kind="ridge", lam=0.1),
        embedding_scope="features",
    )
    result = run_protocol(cfg, datasets, target=0)
    w = np.asarray(result.weights.w)

    print("agent  group  weight")
    for k in np.argsort(w)[::-1][:8]:
        print(f"{k:5d}  {groups[k]:5d}  {w[k]:.3f}")
    own = w[[k for k in range(30) if groups[k] == groups[0]]].sum()
    print(f"\nmass on agent 0's own cluster: {own:.3f}")
    print(f"scalars sent over the wire:    {result.ledger.total()}")


if __name__ == "__main__":
    main()
