"""Shared builders for tests: fitted node models from simulated data."""

import numpy as np

from mcbo.engine import NodeData, initial_interventions
from mcbo.scm import random_actions, simulate, Soft


def fitted_posteriors(scm, n=15, seed=0, extra=()):
    """Node posteriors fitted on ``n`` random interventions (plus ``extra``)."""
    rng = np.random.default_rng(seed)
    data = NodeData(scm)
    if scm.interventions == "soft":
        ivs = [Soft(a) for a in random_actions(scm, n, rng)]
    else:
        ivs = []
        while len(ivs) < n:
            ivs.extend(initial_interventions(scm, rng))
        ivs = ivs[:n]
    for iv in list(ivs) + list(extra):
        data.add(iv, simulate(scm, iv, rng))
    return data.fit(), data
