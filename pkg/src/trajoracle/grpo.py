"""Group-relative advantage and loss arithmetic as pure numerics. No
parameter updates happen here; the JSON-lines contract in the CLI feeds any
external trainer."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

ADV_EPS = 1e-8


class GroupTooSmall(ValueError):
    """Advantages need at least two responses."""


class LengthMismatch(ValueError):
    """Policy and reference log-prob sequences must align."""


class IncompleteGroup(ValueError):
    """Strict grouping found a group whose size differs from G."""


@dataclass(frozen=True)
class RolloutGroup:
    """G candidate responses to one query with rewards and token log-probs."""

    query_id: str
    rewards: tuple[float, ...]
    policy_logps: tuple[tuple[float, ...], ...]
    ref_logps: tuple[tuple[float, ...], ...]

    def __post_init__(self) -> None:
        g = len(self.rewards)
        if g < 2:
            raise GroupTooSmall(f"group {self.query_id!r} has {g} responses")
        if not (len(self.policy_logps) == len(self.ref_logps) == g):
            raise LengthMismatch("per-response sequences do not match group size")
        for pol, ref in zip(self.policy_logps, self.ref_logps):
            if len(pol) == 0 or len(pol) != len(ref):
                raise LengthMismatch("policy/reference token lengths differ or are empty")

    @property
    def size(self) -> int:
        return len(self.rewards)


@dataclass(frozen=True)
class GrpoOutput:
    advantages: tuple[float, ...]
    kls: tuple[float, ...]
    loss: float
    beta: float


def group_advantages(rewards: Sequence[float]) -> list[float]:
    """Center rewards and divide by the population standard deviation.

    The divisor is floored at 1e-8, which leaves an all-equal group at
    exactly zero and any group with real spread at population std exactly 1.
    """
    g = len(rewards)
    if g < 2:
        raise GroupTooSmall(f"need >= 2 rewards, got {g}")
    mean = math.fsum(rewards) / g
    var = math.fsum((r - mean) ** 2 for r in rewards) / g
    denom = max(math.sqrt(var), ADV_EPS)
    return [(r - mean) / denom for r in rewards]


def kl_estimate(policy_logps: Sequence[float], ref_logps: Sequence[float]) -> float:
    """Per-token mean log-ratio between policy and reference."""
    if len(policy_logps) != len(ref_logps):
        raise LengthMismatch(f"{len(policy_logps)} policy vs {len(ref_logps)} reference tokens")
    if not policy_logps:
        raise LengthMismatch("empty log-prob sequences")
    return math.fsum(p - r for p, r in zip(policy_logps, ref_logps)) / len(policy_logps)


def grpo_loss(group: RolloutGroup, beta: float = 0.0) -> GrpoOutput:
    """Negative advantage-weighted sequence log-likelihood plus a KL penalty.

    loss = -sum_i (sum_t policy_logp[i][t]) * A_i + beta * mean_i KL_i
    """
    advantages = group_advantages(group.rewards)
    kls = [kl_estimate(p, r) for p, r in zip(group.policy_logps, group.ref_logps)]
    policy_term = math.fsum(math.fsum(lp) * a for lp, a in zip(group.policy_logps, advantages))
    loss = -policy_term + beta * (math.fsum(kls) / len(kls))
    return GrpoOutput(tuple(advantages), tuple(kls), loss, beta)


Record = tuple[str, float, Sequence[float], Sequence[float]]


def build_groups(records: Iterable[Record], group_size: int | None = None) -> list[RolloutGroup]:
    """Group (query_id, reward, policy_logps, ref_logps) records by query_id.

    Strict mode (``group_size`` given) rejects any group whose size differs
    from it; otherwise variable-size groups are kept and singletons dropped.
    Groups come back sorted by query_id; within a group, input order is
    preserved (advantage i always pairs with reward i).
    """
    buckets: dict[str, list[Record]] = {}
    for rec in records:
        buckets.setdefault(str(rec[0]), []).append(rec)
    groups = []
    for qid in sorted(buckets):
        rows = buckets[qid]
        if group_size is not None and len(rows) != group_size:
            raise IncompleteGroup(f"query {qid!r} has {len(rows)} responses, expected {group_size}")
        if len(rows) < 2:
            continue
        groups.append(RolloutGroup(
            query_id=qid,
            rewards=tuple(float(r[1]) for r in rows),
            policy_logps=tuple(tuple(float(v) for v in r[2]) for r in rows),
            ref_logps=tuple(tuple(float(v) for v in r[3]) for r in rows),
        ))
    return groups
