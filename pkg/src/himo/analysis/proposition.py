"""Numerical check of the model-error bound for a shared linear value head.

With ``v_plus = w1.f + w2.phi + b`` and ``v_m = w1.f + w2.phi_hat + b``,
``L(v_plus) = C L(v)`` and ``C < 1/2``, a model loss below
``(1 - 2C) L(v) / (2 ||w2||^2)`` guarantees ``L(v_m) < L(v)``.

Instances are finite distributions, so every loss is an exact expectation.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class PropositionInstance:
    probs: np.ndarray    # (M,) outcome probabilities
    state: np.ndarray    # (M,) int, which start state each outcome comes from
    f: np.ndarray        # (M, p) start-state features
    phi: np.ndarray      # (M, d) hindsight features of the outcome
    phi_hat: np.ndarray  # (M, d) model prediction, a function of the state only
    G: np.ndarray        # (M,) returns
    v: np.ndarray        # (M,) model-free value prediction, a function of the state only
    omega1: np.ndarray
    omega2: np.ndarray
    b: float

    def v_plus(self) -> np.ndarray:
        return self.f @ self.omega1 + self.phi @ self.omega2 + self.b

    def v_m(self) -> np.ndarray:
        return self.f @ self.omega1 + self.phi_hat @ self.omega2 + self.b


@dataclass
class PropositionReport:
    C: float
    L_v: float
    L_vplus: float
    L_vm: float
    L_model: float
    omega2_norm_sq: float
    threshold: float
    premise_holds: bool
    conclusion_holds: bool
    degenerate: bool = False

    def to_dict(self) -> dict:
        return asdict(self)


def proposition_threshold(C: float, L_v: float, omega2_norm_sq: float) -> float:
    return (1.0 - 2.0 * C) * L_v / (2.0 * omega2_norm_sq)


def _expect(probs, x) -> float:
    return float(np.dot(probs, x))


def proposition_check(inst: PropositionInstance) -> PropositionReport:
    p = inst.probs
    L_v = _expect(p, (inst.v - inst.G) ** 2)
    L_vplus = _expect(p, (inst.v_plus() - inst.G) ** 2)
    L_vm = _expect(p, (inst.v_m() - inst.G) ** 2)
    L_model = _expect(p, np.sum((inst.phi - inst.phi_hat) ** 2, axis=-1))
    w2 = float(np.dot(inst.omega2, inst.omega2))
    if L_v == 0:
        return PropositionReport(float("nan"), L_v, L_vplus, L_vm, L_model, w2, float("nan"),
                                 False, bool(L_vm < L_v), degenerate=True)
    C = L_vplus / L_v
    thr = proposition_threshold(C, L_v, w2) if w2 > 0 else float("inf")
    premise = 0 < C < 0.5 and L_model < thr
    return PropositionReport(C, L_v, L_vplus, L_vm, L_model, w2, thr, bool(premise),
                             bool(L_vm < L_v))


def _wls(X, y, w):
    sw = np.sqrt(w)
    coef, *_ = np.linalg.lstsq(X * sw[:, None], y * sw, rcond=None)
    return coef


def _state_mean(values, state, probs, n_states):
    tot = np.zeros((n_states,) + values.shape[1:])
    mass = np.zeros(n_states)
    np.add.at(tot, state, values * probs.reshape((-1,) + (1,) * (values.ndim - 1)))
    np.add.at(mass, state, probs)
    return tot / mass.reshape((-1,) + (1,) * (values.ndim - 1))


def random_instance(rng, n_states: int = 8, outcomes_per_state: int = 4, p: int = 3, d: int = 3,
                    noise: float = 0.3, phi_noise: float = 0.3, model_fraction: float | None = None,
                    max_tries: int = 100) -> PropositionInstance:
    """Random linear instance with the premise satisfied by construction.

    Hindsight features are a nonlinear function of the start state plus
    outcome noise, and returns depend on them, so a linear value of the
    start features alone is poor while ``v_plus`` (least squares on
    ``(f, phi)``) is good. ``phi_hat`` is the state-conditional mean of
    ``phi`` plus a perturbation sized so the model loss is
    ``model_fraction`` (random in (0, 1) by default) of the way from its
    minimum to the threshold.
    """
    for _ in range(max_tries):
        M = n_states * outcomes_per_state
        state = np.repeat(np.arange(n_states), outcomes_per_state)
        probs = rng.dirichlet(np.ones(M))
        f_state = rng.standard_normal((n_states, p))
        f = f_state[state]
        phi = rng.standard_normal((n_states, d))[state] + phi_noise * rng.standard_normal((M, d))
        omega2_true = rng.standard_normal(d) * 2.0
        G = f @ rng.standard_normal(p) + phi @ omega2_true + noise * rng.standard_normal(M)

        X_v = np.concatenate([f, np.ones((M, 1))], axis=1)
        v = X_v @ _wls(X_v, G, probs)
        X_plus = np.concatenate([f, phi, np.ones((M, 1))], axis=1)
        coef = _wls(X_plus, G, probs)
        omega1, omega2, b = coef[:p], coef[p:p + d], float(coef[-1])

        cond = _state_mean(phi, state, probs, n_states)[state]
        base = PropositionInstance(probs, state, f, phi, cond, G, v, omega1, omega2, b)
        rep = proposition_check(base)
        if rep.degenerate or not 0 < rep.C < 0.5 or rep.L_model >= rep.threshold:
            continue
        direction = rng.standard_normal((n_states, d))[state]
        K = _expect(probs, np.sum(direction ** 2, axis=-1))
        frac = rng.uniform(0.01, 0.99) if model_fraction is None else model_fraction
        target = rep.L_model + frac * (rep.threshold - rep.L_model)
        # the perturbation depends on the state only, so it adds K * delta^2 exactly
        delta = np.sqrt(max(target - rep.L_model, 0.0) / K)
        return PropositionInstance(probs, state, f, phi, cond + delta * direction, G, v,
                                   omega1, omega2, b)
    raise RuntimeError("could not build an instance satisfying the premise")


def monte_carlo_check(inst: PropositionInstance, rng, n_samples: int = 100_000) -> dict:
    """Sampled estimates of the losses with their standard errors."""
    idx = rng.choice(len(inst.probs), size=n_samples, p=inst.probs)
    terms = {
        "L_v": (inst.v - inst.G) ** 2,
        "L_vplus": (inst.v_plus() - inst.G) ** 2,
        "L_vm": (inst.v_m() - inst.G) ** 2,
        "L_model": np.sum((inst.phi - inst.phi_hat) ** 2, axis=-1),
    }
    out = {}
    for name, vals in terms.items():
        x = vals[idx]
        out[name] = (float(x.mean()), float(x.std(ddof=1) / np.sqrt(n_samples)))
    return out


def run_proposition_suite(n_instances: int, seed: int = 0) -> dict:
    """Checks the implication on ``n_instances`` random instances."""
    rng = np.random.default_rng(seed)
    held = premise = 0
    counterexamples = []
    for i in range(n_instances):
        rep = proposition_check(random_instance(rng))
        if rep.premise_holds:
            premise += 1
            if rep.conclusion_holds:
                held += 1
            else:
                counterexamples.append(i)
    return {"instances": n_instances, "premise_holds": premise, "conclusion_holds": held,
            "counterexamples": counterexamples, "seed": seed}
