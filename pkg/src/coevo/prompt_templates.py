"""Loads the role prompt templates shipped with the package.

Prompts are data, not code: every template lives in ``prompts/*.txt`` and
can be overridden by pointing ``load_templates`` at another directory that
carries files with the same names. Slots use ``{name}`` markers and are
filled with plain string replacement, so literal braces elsewhere in a
template are safe.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ConfigError

OOD_STYLES = ("emotional", "resistant", "ambivalent")

# Removed from the client template outside SFT so preference updates can
# shape client behavior beyond the sampled trait distribution.
TRAIT_SENTENCE = "Your overall disposition: You are {trait_description}.\n\n"

_FILES = {
    "coach_operational": "coach_operational.txt",
    "coach_sft_datagen": "coach_sft_datagen.txt",
    "coach_rubric_preamble": "coach_rubric_preamble.txt",
    "client_with_trait": "client_with_trait.txt",
    "judge_system": "judge_system.txt",
    "judge_input": "judge_input.txt",
    "rubric_inline": "rubric.txt",
    "persona_system": "persona_system.txt",
    "persona_user": "persona_user.txt",
}


@dataclass(frozen=True)
class PromptTemplates:
    coach_operational: str
    coach_sft_datagen: str
    coach_rubric_preamble: str
    client_with_trait: str
    client_no_trait: str
    judge_system: str
    judge_input: str
    rubric_inline: str
    persona_system: str
    persona_user: str
    ood_styles: dict[str, str] = field(default_factory=dict)

    @property
    def coach_rubric(self) -> str:
        """Coach system prompt with the scoring rubric inlined verbatim."""
        return self.coach_rubric_preamble + "\n" + self.rubric_inline


def fill(template: str, **slots: str) -> str:
    """Fill ``{name}`` slots by literal replacement (format-safe)."""
    out = template
    for name, value in slots.items():
        out = out.replace("{" + name + "}", value)
    return out


def strip_trait_sentence(client_template: str) -> str:
    if TRAIT_SENTENCE not in client_template:
        raise ConfigError(
            "client template does not contain the expected trait sentence"
        )
    return client_template.replace(TRAIT_SENTENCE, "")


def load_templates(directory: str | Path | None = None) -> PromptTemplates:
    """Load templates from ``directory``, or the packaged defaults."""

    def read(name: str) -> str:
        if directory is not None:
            p = Path(directory) / name
            if not p.is_file():
                raise ConfigError(f"missing template file: {p}")
            return p.read_text(encoding="utf-8")
        return (
            resources.files("coevo").joinpath("prompts", name).read_text(encoding="utf-8")
        )

    raw = {key: read(fname) for key, fname in _FILES.items()}
    ood = {style: read(f"ood_{style}.txt") for style in OOD_STYLES}
    return PromptTemplates(
        client_no_trait=strip_trait_sentence(raw["client_with_trait"]),
        ood_styles=ood,
        **raw,
    )
