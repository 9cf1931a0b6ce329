"""Shared test machinery: randomized LWW delivery schedules."""

from __future__ import annotations

import itertools
import random

from dvesim.scene import (
    EXISTENCE,
    PropertyUpdate,
    SceneReplica,
    UnknownEntity,
    digest,
)

PROPS = ["position", "velocity", "color"]


def random_update_set(rng: random.Random, max_entities: int = 10,
                      max_updates: int = 200) -> list[PropertyUpdate]:
    """An update multiset over a few entities: creates, deletes, writes.

    Every touched entity gets at least a creation update, so any at-least-once
    delivery schedule can make progress.
    """
    n_entities = rng.randint(1, max_entities)
    origins = ["node-a", "node-b", "node-c"]
    seqs = {o: itertools.count() for o in origins}
    updates: list[PropertyUpdate] = []
    for e in range(1, n_entities + 1):
        o = rng.choice(origins)
        updates.append(PropertyUpdate(e, EXISTENCE, True, rng.randint(0, 50), o,
                                      next(seqs[o])))
    extra = rng.randint(0, max_updates - len(updates))
    for _ in range(extra):
        e = rng.randint(1, n_entities)
        o = rng.choice(origins)
        ts = rng.randint(0, 1000)
        kind = rng.random()
        if kind < 0.15:
            updates.append(PropertyUpdate(e, EXISTENCE, False, ts, o, next(seqs[o])))
        elif kind < 0.30:
            updates.append(PropertyUpdate(e, EXISTENCE, True, ts, o, next(seqs[o])))
        else:
            updates.append(PropertyUpdate(e, rng.choice(PROPS), rng.randint(0, 99),
                                          ts, o, next(seqs[o])))
    return updates


def deliver_schedule(replica: SceneReplica, updates: list[PropertyUpdate],
                     rng: random.Random, duplicate_frac: float = 0.3) -> None:
    """At-least-once delivery: a random permutation plus random duplicates.

    Updates arriving before their entity is known are requeued, which is
    exactly what a retrying transport does.
    """
    batch = list(updates)
    batch += [rng.choice(updates) for _ in range(int(len(updates) * duplicate_frac))]
    rng.shuffle(batch)
    pending = batch
    while pending:
        deferred = []
        for u in pending:
            try:
                replica.apply_update(u)
            except UnknownEntity:
                deferred.append(u)
        if len(deferred) == len(pending):
            raise AssertionError("schedule cannot make progress")
        pending = deferred


def run_lww_trial(rng: random.Random) -> tuple[str, str]:
    """Deliver one update set to two replicas in different orders."""
    updates = random_update_set(rng)
    r1 = SceneReplica("r1")
    r2 = SceneReplica("r2")
    deliver_schedule(r1, updates, rng)
    deliver_schedule(r2, updates, rng)
    return digest(r1), digest(r2)
