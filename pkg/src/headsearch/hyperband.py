"""Hyperband bracket planning and synchronous successive-halving execution.

``plan(R, eta)`` lays out brackets s = s_max .. 0 with

    s_max = floor(log_eta R)
    n_0   = ceil((s_max + 1) / (s + 1) * eta^s)
    r_i   = R * eta^(i - s), rounded up to whole epochs (min 1)
    n_(i+1) = floor(n_i / eta)

``run_bracket`` trains round 0 on freshly sampled configs and promotes the
top n_(i+1) by validation accuracy into each following round, retraining
survivors from scratch at the larger budget.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .space import HeadConfig


@dataclass(frozen=True)
class Bracket:
    s: int
    rounds: list[tuple[int, int]]  # (n_i, r_i) per rung

    @property
    def num_trials(self) -> int:
        return sum(n for n, _ in self.rounds)


@dataclass(frozen=True)
class HyperbandPlan:
    R: int
    eta: int
    brackets: list[Bracket]

    @property
    def num_trials(self) -> int:
        return sum(b.num_trials for b in self.brackets)


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def plan(R: int, eta: int) -> HyperbandPlan:
    if R < 1:
        raise ValueError(f"R must be >= 1, got {R}")
    if eta < 2:
        raise ValueError(f"eta must be >= 2, got {eta}")
    s_max = 0
    while eta ** (s_max + 1) <= R:
        s_max += 1
    brackets = []
    for s in range(s_max, -1, -1):
        n = _ceil_div((s_max + 1) * eta ** s, s + 1)
        rounds = []
        for i in range(s + 1):
            r = max(1, _ceil_div(R, eta ** (s - i)))
            rounds.append((n, r))
            n //= eta
        brackets.append(Bracket(s=s, rounds=rounds))
    return HyperbandPlan(R=R, eta=eta, brackets=brackets)


# A trainer evaluates (config, budget_epochs, trial_id, bracket, rung) -> Trial.
Trainer = Callable[[HeadConfig, int, int, int, int], "Trial"]  # noqa: F821


def run_bracket(bracket: Bracket, sampler: Callable[[np.random.Generator], HeadConfig],
                trainer: Trainer, rng: np.random.Generator, *,
                trial_id_start: int = 0,
                on_round: Optional[Callable[[list], None]] = None,
                run_round: Optional[Callable[[list], list]] = None) -> list:
    """Run one successive-halving bracket and return all Trial records.

    Round 0 draws its configs from ``sampler``; later rounds keep the top
    n_(i+1) trials by val_acc (ties promote the earlier trial_id) and
    retrain their configs from scratch. A trainer exception aborts only
    that trial: it is recorded with val_acc 0 (seed -1) and the bracket
    continues. ``on_round`` fires once per rung with the new trials, in
    trial_id order; ``run_round`` may execute a round's work items
    in parallel (defaults to sequential execution).
    """
    from .training import Trial  # local import; training depends on space only

    next_id = trial_id_start
    all_trials: list[Trial] = []
    prev_round: list[Trial] = []

    for rung, (n_i, r_i) in enumerate(bracket.rounds):
        if rung == 0:
            configs = [sampler(rng) for _ in range(n_i)]
        else:
            keep = sorted(prev_round, key=lambda t: (-t.val_acc, t.trial_id))[:n_i]
            configs = [t.config for t in keep]

        jobs = []
        for config in configs:
            jobs.append((config, r_i, next_id, bracket.s, rung))
            next_id += 1

        def work(job, _trainer=trainer):
            config, budget, tid, s, rg = job
            try:
                return _trainer(config, budget, tid, s, rg)
            except Exception:
                return Trial(trial_id=tid, config=config, budget_epochs=budget,
                             seed=-1, val_acc=0.0, test_acc=0.0, train_steps=0,
                             wall_ms=0, bracket=s, rung=rg)

        runner = run_round if run_round is not None else lambda js: [work(j) for j in js]
        round_trials = sorted(runner(jobs) if run_round is None else run_round(jobs),
                              key=lambda t: t.trial_id)
        if run_round is None:
            round_trials = sorted((work(j) for j in jobs), key=lambda t: t.trial_id)
        if on_round is not None:
            on_round(round_trials)
        all_trials.extend(round_trials)
        prev_round = round_trials

    return all_trials
