"""Training checkpoints as DLT1 containers.

Arrays: ``param.<name>`` for every model parameter, ``adam.m.<name>`` /
``adam.v.<name>`` for the optimizer moments and ``trace`` (one row per step,
columns ``flow.TRACE_COLUMNS``). The header carries the run-config echo, the
step counter, the Adam hyperparameters and the RNG position. Training
randomness is counter-based, so the RNG position is just the next step index
of the ``(seed, "train")`` stream.
"""

import numpy as np

from . import autodiff as ad
from . import config as cfgmod
from . import container
from .flow import TRACE_COLUMNS, Model, TrainState


def save(path, state, run_cfg):
    model, adam = state.model, state.adam
    arrays = {f"param.{k}": model.params[k] for k in sorted(model.params)}
    arrays.update(adam.state_arrays())
    arrays["trace"] = state.trace_array()
    meta = {
        "kind": "checkpoint",
        "config": run_cfg.to_dict(),
        "step": int(state.step),
        "p": int(model.p),
        "tau2": run_cfg.train.tau2_value(),
        "trace_columns": list(TRACE_COLUMNS),
        "adam": {"lr": adam.lr, "beta1": adam.beta1, "beta2": adam.beta2, "eps": adam.eps,
                 "step_count": adam.step_count},
        "rng": {"generator": "philox", "seed": run_cfg.train.seed, "stream": "train",
                "next_index": int(state.step)},
    }
    container.write(path, arrays, meta)


def load(path):
    """Return ``(TrainState, RunConfig)``."""
    arrays, meta = container.read(path)
    if meta.get("kind") != "checkpoint":
        raise container.HeaderError(f"{path}: not a checkpoint (kind={meta.get('kind')!r})")
    run_cfg = cfgmod.from_dict(meta["config"])
    params = {k[len("param."):]: v for k, v in arrays.items() if k.startswith("param.")}
    model = Model(run_cfg.model, int(meta["p"]), params)
    a = meta["adam"]
    adam = ad.Adam(lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"])
    adam.load_state_arrays(arrays, a["step_count"])
    trace = arrays.get("trace", np.zeros((0, len(TRACE_COLUMNS))))
    state = TrainState(model, adam, int(meta["step"]), [list(r) for r in trace])
    return state, run_cfg
