"""Offline demo corpus: synthesized clips whose musical structure follows
their quadrant (fast/major for high arousal/valence and so on), plus
matching evaluator ratings, so screening and feature extraction run
without any external generation backend.
"""

from __future__ import annotations

import csv
import json
import random
from pathlib import Path

import numpy as np

from .audio import AudioClip, save_wav
from .promptgen import PromptLexicon, StubGenerationClient, enumerate_prompts
from .quadrants import ALL_QUADRANTS, EmotionQuadrant

DEMO_SAMPLE_RATE = 16000

# (minor, major) triads and (low, high) arousal tempi
TRIAD_HZ = {
    False: (220.0, 261.63, 329.63),  # A minor
    True: (220.0, 277.18, 329.63),  # A major
}
TEMPO_BPM = {False: 70.0, True: 150.0}


def synth_quadrant_clip(quadrant: EmotionQuadrant, duration_s: float = 30.0, seed: int = 0) -> AudioClip:
    """A click track plus sustained triad shaped by the quadrant."""
    fs = DEMO_SAMPLE_RATE
    rng = np.random.default_rng(seed)
    n = int(duration_s * fs)
    t = np.arange(n) / fs
    samples = np.zeros(n)

    period = 60.0 / TEMPO_BPM[quadrant.arousal_high]
    burst_t = np.arange(int(0.012 * fs)) / fs
    burst = np.sin(2 * np.pi * 1200 * burst_t) * np.exp(-burst_t * 350)
    click_gain = 0.5 if quadrant.arousal_high else 0.25
    for start_s in np.arange(0.0, duration_s - 0.05, period):
        i = int(start_s * fs)
        samples[i : i + len(burst)] += click_gain * burst

    for f in TRIAD_HZ[quadrant.valence_high]:
        detune = 1.0 + rng.uniform(-0.001, 0.001)
        samples += 0.12 * np.sin(2 * np.pi * f * detune * t + rng.uniform(0, 2 * np.pi))
    samples += rng.normal(0, 0.01, n)
    peak = np.abs(samples).max()
    return AudioClip(samples=0.9 * samples / peak, sample_rate=fs)


def build_demo_corpus(
    out_dir: Path | str,
    per_quadrant: int = 6,
    duration_s: float = 30.0,
    seed: int = 0,
    n_evaluators: int = 10,
) -> dict:
    """Write clips, clips.json, a prompt manifest, and evaluator ratings.

    Clips come through the stub generation client (registered by prompt
    hash) exactly as a real backend would be wired; ratings concentrate
    near each quadrant's corner so the geometric screen keeps most clips.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stub = StubGenerationClient(out_dir / "stub_cache")
    lexicon = PromptLexicon.default()
    rng = random.Random(seed)

    clips = {}
    for quadrant in ALL_QUADRANTS:
        specs = enumerate_prompts(lexicon, quadrant, count=per_quadrant, seed=seed)
        for spec in specs:
            clip_id = spec.prompt_id
            audio = synth_quadrant_clip(quadrant, duration_s, seed=rng.randrange(2**31))
            stub.register(spec.rendered, audio)
            file_name = f"{clip_id}.wav"
            save_wav(out_dir / file_name, audio)
            clips[clip_id] = {"quadrant": quadrant.value, "file": file_name, "prompt": spec.rendered}

    (out_dir / "clips.json").write_text(json.dumps(clips, indent=2, sort_keys=True) + "\n")

    corners = {
        EmotionQuadrant.HAHV: (8, 8),
        EmotionQuadrant.HALV: (2, 8),
        EmotionQuadrant.LAHV: (7, 3),
        EmotionQuadrant.LALV: (2, 2),
    }
    with open(out_dir / "evaluator_ratings.csv", "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["evaluator_id", "clip_id", "valence", "arousal"])
        for clip_id, meta in sorted(clips.items()):
            v0, a0 = corners[EmotionQuadrant(meta["quadrant"])]
            for e in range(n_evaluators):
                v = min(9, max(1, v0 + rng.choice([-1, 0, 0, 1])))
                a = min(9, max(1, a0 + rng.choice([-1, 0, 0, 1])))
                writer.writerow([f"e{e + 1:02d}", clip_id, v, a])
    return clips
