"""The four-quadrant emotion label space (arousal x valence polarity)."""

from __future__ import annotations

from enum import Enum


class EmotionQuadrant(str, Enum):
    """Label space for clips, trials, and classifier targets.

    Naming is <arousal polarity><valence polarity>: HAHV is high arousal /
    high valence, LALV low arousal / low valence, and so on.
    """

    HAHV = "HAHV"
    HALV = "HALV"
    LAHV = "LAHV"
    LALV = "LALV"

    @property
    def arousal_high(self) -> bool:
        return self in (EmotionQuadrant.HAHV, EmotionQuadrant.HALV)

    @property
    def valence_high(self) -> bool:
        return self in (EmotionQuadrant.HAHV, EmotionQuadrant.LAHV)

    @classmethod
    def from_polarity(cls, arousal_high: bool, valence_high: bool) -> "EmotionQuadrant":
        return {
            (True, True): cls.HAHV,
            (True, False): cls.HALV,
            (False, True): cls.LAHV,
            (False, False): cls.LALV,
        }[(arousal_high, valence_high)]


ALL_QUADRANTS = (
    EmotionQuadrant.HAHV,
    EmotionQuadrant.HALV,
    EmotionQuadrant.LAHV,
    EmotionQuadrant.LALV,
)
