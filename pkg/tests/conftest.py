from __future__ import annotations

import numpy as np

from replaylab.streams import ScenarioSpec, SyntheticDriftModel, generate_scenario


def make_synthetic(kind, classes, sessions, dim, batch_size, n_batches, seed,
                   class_scale=1.0, session_scale=1.0, noise=0.4, eval_per_pair=5):
    """Stream + eval sets with decorrelated model/scenario seeds."""
    ss = np.random.SeedSequence((seed, 0))
    model_seed, scen_seed = (int(x) for x in ss.generate_state(2))
    model = SyntheticDriftModel.generate(
        classes, sessions, dim, model_seed, class_scale=class_scale,
        session_scale=session_scale, noise=noise)
    spec = ScenarioSpec(kind=kind, n_batches=n_batches, classes=classes,
                        sessions=sessions, batch_size=batch_size, seed=scen_seed,
                        eval_per_pair=eval_per_pair)
    return generate_scenario(spec, model)
