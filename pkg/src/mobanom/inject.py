"""Imposter injection: exchange trajectory tails between agent pairs.

A pair (A, B) is cut at a single timestamp anchored to A's trajectory: the
departure of A's stay point at index ``floor(switch_fraction * len(A)) - 1``.
Every stay point arriving strictly after that timestamp changes owner, in both
directions.  Cutting both agents at one shared timestamp is the only way to
guarantee monotonic outputs when the pair's points interleave in time.

Both members of a swapped pair are labeled ``imposter`` with ``deviate_index``
pointing at the first swapped-in point.  Pairs whose swap would be a no-op or
would break timestamp monotonicity are resampled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    ConfigError,
    Dataset,
    InjectionError,
    LabelEntry,
    LabelSet,
    Trajectory,
    params_hash,
    validate_trajectory,
)

MAX_PARTNER_ATTEMPTS = 100


@dataclass(frozen=True)
class InjectConfig:
    n_outlier_pairs: int
    switch_fraction: float = 0.8
    seed: int = 0
    pairing: str = "random_disjoint"

    def validate(self, n_agents: int) -> None:
        if self.pairing != "random_disjoint":
            raise ConfigError(f"unknown pairing strategy {self.pairing!r}")
        if not (0.0 < self.switch_fraction < 1.0):
            raise ConfigError("switch_fraction must be in (0, 1)")
        if self.n_outlier_pairs < 1:
            raise ConfigError("n_outlier_pairs must be >= 1")
        if 2 * self.n_outlier_pairs > n_agents:
            raise ConfigError(
                f"need {2 * self.n_outlier_pairs} agents for {self.n_outlier_pairs} pairs, have {n_agents}"
            )

    def to_dict(self) -> dict:
        return {
            "n_outlier_pairs": self.n_outlier_pairs,
            "switch_fraction": self.switch_fraction,
            "seed": self.seed,
            "pairing": self.pairing,
        }


def _switch_time(traj: Trajectory, switch_fraction: float) -> int | None:
    idx = int(np.floor(switch_fraction * len(traj.points))) - 1
    if idx < 0 or idx >= len(traj.points):
        return None
    return traj.points[idx].depart


def _swap_pair(a: Trajectory, b: Trajectory, switch_time: int) -> tuple[Trajectory, Trajectory, int, int] | None:
    """Exchange the post-switch tails; None if the swap is degenerate or invalid."""
    a_head = [p for p in a.points if p.arrive <= switch_time]
    a_tail = [p for p in a.points if p.arrive > switch_time]
    b_head = [p for p in b.points if p.arrive <= switch_time]
    b_tail = [p for p in b.points if p.arrive > switch_time]
    if not a_tail or not b_tail:
        return None
    new_a = Trajectory(agent_id=a.agent_id, points=a_head + b_tail)
    new_b = Trajectory(agent_id=b.agent_id, points=b_head + a_tail)
    if validate_trajectory(new_a) or validate_trajectory(new_b):
        return None
    return new_a, new_b, len(a_head), len(b_head)


def inject_imposter(ds: Dataset, cfg: InjectConfig) -> tuple[Dataset, LabelSet]:
    """Swap tails between ``n_outlier_pairs`` disjoint random pairs.

    Unpaired trajectories pass through untouched (labeled ``none``).  Raises
    :class:`InjectionError` when no compatible partner is found for some agent
    within the attempt budget.
    """
    cfg.validate(len(ds.trajectories))
    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 10)))

    swapped: dict[str, tuple[Trajectory, int]] = {}
    used: set[str] = set()
    for _ in range(cfg.n_outlier_pairs):
        pool = [t for t in ds.trajectories if t.agent_id not in used]
        result = None
        for _attempt in range(MAX_PARTNER_ATTEMPTS):
            i, j = rng.choice(len(pool), size=2, replace=False)
            a, b = pool[int(i)], pool[int(j)]
            switch_time = _switch_time(a, cfg.switch_fraction)
            if switch_time is None:
                continue
            result = _swap_pair(a, b, switch_time)
            if result is not None:
                break
        if result is None:
            raise InjectionError(
                f"no swappable pair found after {MAX_PARTNER_ATTEMPTS} attempts"
            )
        new_a, new_b, dev_a, dev_b = result
        swapped[new_a.agent_id] = (new_a, dev_a)
        swapped[new_b.agent_id] = (new_b, dev_b)
        used.add(new_a.agent_id)
        used.add(new_b.agent_id)

    trajectories = []
    entries = {}
    for t in ds.trajectories:
        if t.agent_id in swapped:
            new_t, deviate_index = swapped[t.agent_id]
            trajectories.append(new_t)
            entries[t.agent_id] = LabelEntry(
                is_outlier=True, outlier_type="imposter", deviate_index=deviate_index
            )
        else:
            trajectories.append(t)
            entries[t.agent_id] = LabelEntry(is_outlier=False, outlier_type="none")

    meta = dict(ds.meta)
    meta.update(
        {
            "injected": "imposter",
            "switch_fraction": cfg.switch_fraction,
            "n_outlier_pairs": cfg.n_outlier_pairs,
            "inject_seed": cfg.seed,
            "inject_config_hash": params_hash(cfg.to_dict()),
        }
    )
    return Dataset(trajectories=trajectories, meta=meta), LabelSet(entries=entries)
