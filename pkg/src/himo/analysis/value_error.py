"""Start-state value learning on the one-step MRP with four estimators.

* ``v_modelfree_baseline``: the HiMo network trained with alpha = beta = 0
* ``v_m``: HiMo's model-augmented value ``psi(s, phi_hat(s))``
* ``v_plus``: HiMo's hindsight value ``psi+(s, phi(s'))``, which sees ``s'``
* ``model_based_baseline``: predicts ``s'`` from ``s`` with a squared loss,
  then regresses the value on ``(s, s'_hat)``

Every subnetwork is a one-hidden-layer ReLU MLP.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Adam, Tape, backward, global_norm, stop_gradient
from ..envs.mrp import MrpInstance
from ..learning.losses import LossWeights, combined_loss, model_loss_squared, value_loss
from ..nets import make_mlp, mlp_forward, value_head

ESTIMATORS = ("v_modelfree_baseline", "v_m", "v_plus", "model_based_baseline")


@dataclass(frozen=True)
class MrpTrainConfig:
    hidden: int = 16
    d: int = 3
    batch_size: int = 32
    learning_rate: float = 1e-3
    alpha: float = 0.5
    beta: float = 1.0
    updates: int = 20000
    eval_states: int = 4096


class MrpHimo:
    """HiMo on the one-step MRP; ``tau+ = s'`` so ``phi`` reads ``s'`` directly."""

    def __init__(self, D: int, cfg: MrpTrainConfig, weights: LossWeights, seed: int):
        rng = np.random.default_rng(seed)
        h, d = cfg.hidden, cfg.d
        self.parts = {
            "eta2": make_mlp("eta2", rng, D, h, d),
            "eta1": make_mlp("eta1", rng, D + d, h, 1),
            "theta2": make_mlp("theta2", rng, D, h, d),
            "theta1": make_mlp("theta1", rng, D + d, h, 1),
        }
        self.weights = weights
        self.opt = Adam([p for part in self.parts.values() for p in part.values()],
                        learning_rate=cfg.learning_rate)

    def forward(self, s, s_next):
        P = self.parts
        phi_hat = mlp_forward(P["eta2"], s)
        v_m = value_head(P["eta1"], s, stop_gradient(phi_hat))
        phi = mlp_forward(P["theta2"], s_next)
        v_plus = value_head(P["theta1"], s, phi)
        return phi_hat, v_m, phi, v_plus

    def update(self, s, s_next, r) -> dict:
        with Tape():
            phi_hat, v_m, phi, v_plus = self.forward(s, s_next)
            L_v = value_loss(v_m, r)
            L_vp = value_loss(v_plus, r) if self.weights.alpha else None
            L_mod = model_loss_squared(phi, phi_hat) if self.weights.beta else None
            total = combined_loss(L_v, L_vp, L_mod, self.weights)
        grads = backward(total, self.opt.params)
        self.opt.step(grads)
        return {"L_v": float(L_v.data), "L_vplus": 0.0 if L_vp is None else float(L_vp.data),
                "L_model": 0.0 if L_mod is None else float(L_mod.data),
                "grad_norm": global_norm(grads.values())}

    def predict(self, s, s_next) -> dict[str, np.ndarray]:
        _, v_m, _, v_plus = self.forward(s, s_next)
        return {"v_m": v_m.data, "v_plus": v_plus.data}

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {f"{prefix}/{p.name}": p.data for p in self.opt.params}
        out.update({f"{prefix}/adam/{k}": v for k, v in self.opt.state_arrays().items()})
        return out

    def load_state_arrays(self, arrays, prefix: str, step_count: int) -> None:
        for p in self.opt.params:
            p.data = np.array(arrays[f"{prefix}/{p.name}"])
        self.opt.load_state_arrays({k[len(prefix) + 6:]: v for k, v in arrays.items()
                                    if k.startswith(f"{prefix}/adam/")}, step_count)


class MrpModelBased:
    """Predict ``s'`` then the value from ``(s, s'_hat)``; both losses weigh 1."""

    def __init__(self, D: int, cfg: MrpTrainConfig, seed: int):
        rng = np.random.default_rng(seed)
        self.parts = {
            "model": make_mlp("model", rng, D, cfg.hidden, D),
            "value": make_mlp("value", rng, 2 * D, cfg.hidden, 1),
        }
        self.opt = Adam([p for part in self.parts.values() for p in part.values()],
                        learning_rate=cfg.learning_rate)

    def forward(self, s):
        s_hat = mlp_forward(self.parts["model"], s)
        return s_hat, value_head(self.parts["value"], s, stop_gradient(s_hat))

    def update(self, s, s_next, r) -> dict:
        with Tape():
            s_hat, v = self.forward(s)
            L_v = value_loss(v, r)
            L_mod = model_loss_squared(s_next, s_hat)
            total = L_v + L_mod
        grads = backward(total, self.opt.params)
        self.opt.step(grads)
        return {"L_v": float(L_v.data), "L_model": float(L_mod.data)}

    def predict(self, s) -> np.ndarray:
        return self.forward(s)[1].data

    state_arrays = MrpHimo.state_arrays
    load_state_arrays = MrpHimo.load_state_arrays


class MrpComparison:
    """The three trained pipelines behind the four estimators, on one instance."""

    def __init__(self, instance: MrpInstance, cfg: MrpTrainConfig, seed: int):
        self.instance = instance
        self.cfg = cfg
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        # shared init seed: the baseline arm starts from the same weights as HiMo
        self.himo = MrpHimo(instance.D, cfg, LossWeights(cfg.alpha, cfg.beta), seed)
        self.baseline = MrpHimo(instance.D, cfg, LossWeights(0.0, 0.0), seed)
        self.model_based = MrpModelBased(instance.D, cfg, seed + 7919)
        self.eval_rng = np.random.default_rng(seed + 1)
        self.eval_set = instance.sample_batch(self.eval_rng, cfg.eval_states)
        self.steps = 0

    def update(self) -> dict:
        s, s_next, r = self.instance.sample_batch(self.rng, self.cfg.batch_size)
        stats = self.himo.update(s, s_next, r)
        base = self.baseline.update(s, s_next, r)
        self.model_based.update(s, s_next, r)
        self.steps += 1
        stats["L_v_baseline"] = base["L_v"]
        return stats

    def predictions(self, s, s_next) -> dict[str, np.ndarray]:
        him = self.himo.predict(s, s_next)
        return {
            "v_modelfree_baseline": self.baseline.predict(s, s_next)["v_m"],
            "v_m": him["v_m"],
            "v_plus": him["v_plus"],
            "model_based_baseline": self.model_based.predict(s),
        }

    def evaluate(self) -> dict[str, float]:
        s, s_next, _ = self.eval_set
        return value_error_eval(self.predictions(s, s_next), self.instance.true_value(s))

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        out.update(self.himo.state_arrays("himo"))
        out.update(self.baseline.state_arrays("baseline"))
        out.update(self.model_based.state_arrays("model_based"))
        return out

    def load_state_arrays(self, arrays, steps: int) -> None:
        self.himo.load_state_arrays(arrays, "himo", steps)
        self.baseline.load_state_arrays(arrays, "baseline", steps)
        self.model_based.load_state_arrays(arrays, "model_based", steps)
        self.steps = steps


def value_error_eval(predictions: dict[str, np.ndarray], true_values) -> dict[str, float]:
    """Mean squared error of each estimator against known true values."""
    if true_values is None:
        raise ValueError("value_error_eval needs an environment with known true values")
    truth = np.asarray(true_values, dtype=np.float64)
    return {k: float(np.mean((np.asarray(v) - truth) ** 2)) for k, v in predictions.items()}
