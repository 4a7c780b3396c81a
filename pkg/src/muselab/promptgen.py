"""Prompt enumeration from the five-slot sentence template, plus the
generation-client interface (HTTP backend or directory-backed stub).
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .audio import AudioClip, load_wav, load_wav_bytes, save_wav
from .errors import ClipNotFoundError, ConfigurationError, InputError, TemplateError, TransportError
from .quadrants import ALL_QUADRANTS, EmotionQuadrant

SLOT_NAMES = (
    "valence_adjective",
    "arousal_adjective",
    "instrumentation_style",
    "emotional_tone",
    "context",
)
# lexicon files key the plural form
SLOT_LIST_KEYS = {slot: slot + "s" for slot in SLOT_NAMES}

DEFAULT_TEMPLATE = (
    "A {valence_adjective} and {arousal_adjective} piece of music featuring "
    "{instrumentation_style}, {emotional_tone} in mood, made for {context}."
)


@dataclass(frozen=True)
class PromptLexicon:
    """Per-quadrant candidate words for each of the five template slots."""

    words: dict  # quadrant value -> slot list key -> list of words

    def slot_words(self, quadrant: EmotionQuadrant, slot: str) -> list[str]:
        try:
            values = self.words[quadrant.value][SLOT_LIST_KEYS[slot]]
        except KeyError:
            raise ConfigurationError(f"lexicon has no {slot} list for quadrant {quadrant.value}") from None
        if not values:
            raise ConfigurationError(f"empty {slot} list for quadrant {quadrant.value}")
        return list(values)

    def validate(self) -> None:
        for quadrant in ALL_QUADRANTS:
            for slot in SLOT_NAMES:
                self.slot_words(quadrant, slot)
        for slot, axis in (("valence_adjective", "valence_high"), ("arousal_adjective", "arousal_high")):
            high = set()
            low = set()
            for quadrant in ALL_QUADRANTS:
                target = high if getattr(quadrant, axis) else low
                target.update(self.slot_words(quadrant, slot))
            overlap = high & low
            if overlap:
                raise ConfigurationError(
                    f"{slot} lists must be disjoint across polarities; shared words: {sorted(overlap)}"
                )

    @classmethod
    def from_file(cls, path) -> "PromptLexicon":
        lexicon = cls(words=json.loads(Path(path).read_text()))
        lexicon.validate()
        return lexicon

    @classmethod
    def default(cls) -> "PromptLexicon":
        payload = resources.files("muselab.data").joinpath("default_lexicon.json").read_text()
        lexicon = cls(words=json.loads(payload))
        lexicon.validate()
        return lexicon


@dataclass(frozen=True)
class PromptSpec:
    quadrant: EmotionQuadrant
    slot_choices: dict  # slot name -> chosen word
    rendered: str
    seed_index: int

    @property
    def prompt_id(self) -> str:
        return f"{self.quadrant.value.lower()}_{self.seed_index:04d}"


def render_prompt(slot_choices: dict, template: str = DEFAULT_TEMPLATE) -> str:
    """Fill the five named placeholders; each must appear exactly once."""
    placeholders = re.findall(r"\{([^{}]*)\}", template)
    for slot in SLOT_NAMES:
        count = placeholders.count(slot)
        if count != 1:
            raise TemplateError(f"template must contain {{{slot}}} exactly once, found {count}")
    unknown = [p for p in placeholders if p not in SLOT_NAMES]
    if unknown:
        raise TemplateError(f"template has unknown placeholders: {unknown}")
    rendered = template
    for slot in SLOT_NAMES:
        rendered = rendered.replace("{" + slot + "}", slot_choices[slot])
    return rendered


def enumerate_prompts(
    lexicon: PromptLexicon,
    quadrant: EmotionQuadrant,
    count: int,
    seed: int,
    template: str = DEFAULT_TEMPLATE,
) -> list[PromptSpec]:
    """Deterministically sample `count` prompt variants for one quadrant.

    Sampling is without replacement over the slot-word Cartesian product;
    once the product is exhausted a fresh shuffled pass begins, so repeats
    only appear when count exceeds the product size.
    """
    if count < 1:
        raise InputError(f"count must be >= 1, got {count}")
    slot_lists = [lexicon.slot_words(quadrant, slot) for slot in SLOT_NAMES]
    sizes = [len(words) for words in slot_lists]
    product = 1
    for n in sizes:
        product *= n

    rng = random.Random(seed)
    flat_indices: list[int] = []
    while len(flat_indices) < count:
        take = min(count - len(flat_indices), product)
        flat_indices.extend(rng.sample(range(product), take))

    specs = []
    for seed_index, flat in enumerate(flat_indices):
        choices = {}
        remainder = flat
        for slot, words in zip(reversed(SLOT_NAMES), reversed(slot_lists)):
            remainder, pick = divmod(remainder, len(words))
            choices[slot] = words[pick]
        choices = {slot: choices[slot] for slot in SLOT_NAMES}
        specs.append(
            PromptSpec(
                quadrant=quadrant,
                slot_choices=choices,
                rendered=render_prompt(choices, template),
                seed_index=seed_index,
            )
        )
    return specs


def write_manifest(specs: list[PromptSpec], path) -> None:
    """One JSON object per line: {id, quadrant, rendered, slot_choices, seed_index}."""
    with open(path, "w") as handle:
        for spec in specs:
            handle.write(
                json.dumps(
                    {
                        "id": spec.prompt_id,
                        "quadrant": spec.quadrant.value,
                        "rendered": spec.rendered,
                        "slot_choices": spec.slot_choices,
                        "seed_index": spec.seed_index,
                    },
                    sort_keys=True,
                )
                + "\n"
            )


# ---------------------------------------------------------------------------
# Generation clients
# ---------------------------------------------------------------------------


def prompt_key(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:16]


class StubGenerationClient:
    """Offline backend: prompts resolve to pre-registered WAV files by hash."""

    def __init__(self, root: Path | str):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def _path(self, prompt: str) -> Path:
        return self.root / f"{prompt_key(prompt)}.wav"

    def register(self, prompt: str, clip: AudioClip) -> Path:
        path = self._path(prompt)
        save_wav(path, clip)
        return path

    def generate(self, prompt: str, duration_s: float) -> AudioClip:
        path = self._path(prompt)
        if not path.exists():
            raise ClipNotFoundError(f"no registered audio for prompt hash {prompt_key(prompt)}")
        return load_wav(path)


class HttpGenerationClient:
    """POSTs {prompt, duration_s} as JSON and expects WAV bytes back."""

    def __init__(self, base_url: str, timeout_s: float = 120.0):
        self.base_url = base_url.rstrip("/")
        self.timeout_s = timeout_s

    def generate(self, prompt: str, duration_s: float) -> AudioClip:
        import httpx

        try:
            response = httpx.post(
                f"{self.base_url}/generate",
                json={"prompt": prompt, "duration_s": duration_s},
                timeout=self.timeout_s,
            )
        except httpx.HTTPError as exc:
            raise TransportError(f"generation backend unreachable: {exc}") from exc
        if response.status_code == 404:
            raise ClipNotFoundError(f"backend has no clip for prompt: {prompt[:60]}...")
        if response.status_code >= 500:
            raise TransportError(f"generation backend error {response.status_code}")
        if response.status_code != 200:
            raise InputError(f"generation request rejected: {response.status_code} {response.text[:200]}")
        return load_wav_bytes(response.content)


def request_generation(prompt: str, duration_s: float, client) -> AudioClip:
    """Fetch audio for one prompt through the configured backend."""
    if duration_s <= 0:
        raise InputError(f"duration_s must be positive, got {duration_s}")
    return client.generate(prompt, duration_s)


def generate_clips(
    specs: list[PromptSpec], client, duration_s: float = 30.0, max_workers: int = 4
) -> dict:
    """Fetch audio for many prompts with bounded parallelism.

    Returns {prompt_id: AudioClip} regardless of completion order; the
    stub client is safe for concurrent reads.
    """
    from concurrent.futures import ThreadPoolExecutor

    def fetch(spec: PromptSpec):
        return spec.prompt_id, request_generation(spec.rendered, duration_s, client)

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return dict(pool.map(fetch, specs))
