from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from elegance.errors import ConfigError
from elegance.utils import seeded_rng

SPEAKER_SALT = 7919
PITCH_RANGE_HZ = (80.0, 300.0)
SECONDS_PER_CHAR = 0.09


class Language(str, Enum):
    EN = "EN"
    ES = "ES"
    FR = "FR"
    IT = "IT"
    PT = "PT"


LEXICONS: dict[Language, tuple[str, ...]] = {
    Language.EN: (
        "the", "speech", "voice", "listen", "quiet", "window", "light", "river",
        "morning", "station", "yellow", "garden", "who's", "thirty", "seven",
        "table", "how", "bright", "street", "paper", "weather", "kitchen", "why?",
        "people",
    ),
    Language.ES: (
        "el", "niño", "canción", "mañana", "árbol", "ciudad", "música", "señal",
        "camión", "agua", "puerta", "rápido", "verde", "según", "pequeño", "también",
        "jamás", "cielo", "noche", "pingüino", "calle", "dónde?", "razón", "fuego",
    ),
    Language.FR: (
        "le", "été", "forêt", "français", "garçon", "très", "où", "fenêtre",
        "château", "élève", "déjà", "rivière", "voilà", "leçon", "bientôt", "père",
        "hôtel", "après", "jeudi", "coeur", "maison", "nuit", "réveil", "là",
    ),
    Language.IT: (
        "il", "città", "perché", "caffè", "più", "così", "libertà", "mercoledì",
        "però", "giù", "università", "virtù", "andò", "gioia", "strada", "piazza",
        "sole", "amico", "ragazzo", "finestra", "verità", "sarà", "lunedì", "già",
    ),
    Language.PT: (
        "o", "coração", "irmã", "pão", "avô", "você", "ação", "maçã", "três",
        "lição", "também", "mãe", "canção", "português", "avó", "mês", "pés",
        "água", "função", "então", "cidade", "nação", "órgão", "põe",
    ),
}

HELD_OUT_LEXICON: tuple[str, ...] = (
    "harbour", "violin", "copper", "frozen", "lantern", "meadow", "orbit", "pencil",
    "quartz", "saddle", "timber", "velvet", "wagon", "zebra", "basket", "candle",
    "engine", "falcon", "glacier", "island",
)


def parse_languages(names: Sequence[str | Language]) -> tuple[Language, ...]:
    if not names:
        raise ConfigError("At least one language is required")
    try:
        return tuple(Language(str(getattr(n, "value", n)).upper()) for n in names)
    except ValueError as e:
        raise ConfigError(f"Unknown language in {list(names)}: {e}") from e


@dataclass(frozen=True)
class SyntheticSpeakerSpec:
    speaker_id: int
    base_pitch: float
    formant_offsets: tuple[float, float, float]
    language_tag: Language


def speaker_spec(
    speaker_id: int,
    languages: Sequence[Language] = tuple(Language),
) -> SyntheticSpeakerSpec:
    """Deterministic speaker for an id; the language cycles through `languages`."""
    rng = seeded_rng(SPEAKER_SALT, speaker_id)
    pitch = float(rng.uniform(*PITCH_RANGE_HZ))
    offsets = tuple(float(v) for v in rng.uniform(-0.6, 0.6, size=3))
    return SyntheticSpeakerSpec(
        speaker_id=int(speaker_id),
        base_pitch=pitch,
        formant_offsets=offsets,
        language_tag=languages[int(speaker_id) % len(languages)],
    )


def sample_transcript(
    rng: np.random.Generator,
    language: Language,
    duration_s: float,
    lexicon: Sequence[str] | None = None,
) -> str:
    """Words drawn from the language lexicon until the text fills duration_s."""
    words = LEXICONS[language] if lexicon is None else lexicon
    target_chars = max(1, int(round(duration_s / SECONDS_PER_CHAR)))
    picked: list[str] = []
    length = 0
    while length < target_chars:
        word = words[int(rng.integers(len(words)))]
        picked.append(word)
        length += len(word) + (1 if len(picked) > 1 else 0)
    return " ".join(picked)
