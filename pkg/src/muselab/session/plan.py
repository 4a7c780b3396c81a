"""Participant schedule: which clips play in which block of which session."""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass

from ..errors import PlanningError
from ..quadrants import ALL_QUADRANTS, EmotionQuadrant

N_SESSIONS = 2
BLOCKS_PER_SESSION = 4
TRIALS_PER_BLOCK = 5
CLIPS_PER_QUADRANT = 5


@dataclass(frozen=True)
class PlanBlock:
    session_index: int  # 1-based
    block_index: int  # 1-based within session
    quadrant: EmotionQuadrant
    clip_ids: tuple[str, ...]

    @property
    def block_id(self) -> str:
        return f"s{self.session_index}b{self.block_index}"


@dataclass(frozen=True)
class SessionPlan:
    participant_id: str
    seed: int
    blocks: tuple[PlanBlock, ...]

    def __post_init__(self):
        if len(self.blocks) != N_SESSIONS * BLOCKS_PER_SESSION:
            raise PlanningError(f"plan must have {N_SESSIONS * BLOCKS_PER_SESSION} blocks, got {len(self.blocks)}")
        quadrant_counts = Counter(b.quadrant for b in self.blocks)
        if any(quadrant_counts[q] != 2 for q in ALL_QUADRANTS):
            raise PlanningError(f"each quadrant must own exactly two blocks, got {dict(quadrant_counts)}")
        for block in self.blocks:
            if len(block.clip_ids) != TRIALS_PER_BLOCK:
                raise PlanningError(f"block {block.block_id} has {len(block.clip_ids)} clips, expected {TRIALS_PER_BLOCK}")
        clip_plays = Counter(cid for b in self.blocks for cid in b.clip_ids)
        twice = [cid for cid, n in clip_plays.items() if n != 2]
        if twice:
            raise PlanningError(f"every scheduled clip must appear exactly twice; violated by {sorted(twice)}")

    @property
    def total_trials(self) -> int:
        return len(self.blocks) * TRIALS_PER_BLOCK

    def session_blocks(self, session_index: int) -> list[PlanBlock]:
        return [b for b in self.blocks if b.session_index == session_index]

    def trial_id(self, session_index: int, block_index: int, trial_index: int) -> str:
        return f"s{session_index}b{block_index}t{trial_index}"

    def clip_quadrants(self) -> dict[str, EmotionQuadrant]:
        return {cid: b.quadrant for b in self.blocks for cid in b.clip_ids}

    def to_dict(self) -> dict:
        return {
            "participant_id": self.participant_id,
            "seed": self.seed,
            "blocks": [
                {
                    "session_index": b.session_index,
                    "block_index": b.block_index,
                    "quadrant": b.quadrant.value,
                    "clip_ids": list(b.clip_ids),
                }
                for b in self.blocks
            ],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SessionPlan":
        return cls(
            participant_id=payload["participant_id"],
            seed=payload["seed"],
            blocks=tuple(
                PlanBlock(
                    session_index=b["session_index"],
                    block_index=b["block_index"],
                    quadrant=EmotionQuadrant(b["quadrant"]),
                    clip_ids=tuple(b["clip_ids"]),
                )
                for b in payload["blocks"]
            ),
        )


def build_plan(participant_id: str, library: dict, seed: int) -> SessionPlan:
    """Schedule 40 trials: per quadrant, 5 seeded clips played once in each
    of the quadrant's two blocks (one per session) in shuffled order.

    `library` maps quadrant (or its value string) to selected clip ids;
    block order within a session is a seeded permutation of the quadrants.
    """
    pools = {}
    for quadrant in ALL_QUADRANTS:
        ids = library.get(quadrant, library.get(quadrant.value, []))
        if len(ids) < CLIPS_PER_QUADRANT:
            raise PlanningError(
                f"quadrant {quadrant.value} has {len(ids)} selected clips; need {CLIPS_PER_QUADRANT}"
            )
        pools[quadrant] = sorted(ids)

    rng = random.Random((participant_id, seed).__repr__())
    chosen = {q: rng.sample(pools[q], CLIPS_PER_QUADRANT) for q in ALL_QUADRANTS}
    orders = {
        (q, s): rng.sample(chosen[q], CLIPS_PER_QUADRANT)
        for q in ALL_QUADRANTS
        for s in range(1, N_SESSIONS + 1)
    }

    blocks: list[PlanBlock] = []
    for session_index in range(1, N_SESSIONS + 1):
        quadrant_order = rng.sample(ALL_QUADRANTS, len(ALL_QUADRANTS))
        for block_index, quadrant in enumerate(quadrant_order, start=1):
            blocks.append(
                PlanBlock(
                    session_index=session_index,
                    block_index=block_index,
                    quadrant=quadrant,
                    clip_ids=tuple(orders[(quadrant, session_index)]),
                )
            )
    return SessionPlan(participant_id=participant_id, seed=seed, blocks=tuple(blocks))
