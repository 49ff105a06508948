"""Client persona records: validation, batch constraints, pool partition,
and backend-driven generation.

A persona document carries eleven fields (age, gender, ethnicity, place,
activity_level, occupations, body_composition, health,
physical_limitations, goals, challenges). The pool index is assigned at
ingestion time by line position and is the sole partition key.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .agents import AgentBackend, SamplingParams
from .errors import ConfigError, ContractError, GenerationError, PersonaParseError
from .prompt_templates import PromptTemplates

GENDERS = ("Male", "Female", "Non-binary", "Other")
SETTINGS = ("urban", "suburban", "rural", "frontier")
ACTIVITY_LEVELS = (
    "Sedentary",
    "Lightly active",
    "Moderately active",
    "Very active",
    "Highly active",
)
AGE_RANGES = ((18, 25), (26, 35), (36, 50), (51, 65), (66, 200))

MIN_AGE = 18
MIN_GOALS = 3
MIN_CHALLENGES = 3

PERSONA_FIELDS = (
    "age",
    "gender",
    "ethnicity",
    "place",
    "activity_level",
    "occupations",
    "body_composition",
    "health",
    "physical_limitations",
    "goals",
    "challenges",
)


def _normalize(text: str) -> str:
    return " ".join(text.casefold().split())


def _age_range_label(age: int) -> str:
    for lo, hi in AGE_RANGES:
        if lo <= age <= hi:
            return f"{lo}-{hi}" if hi < 200 else f"{lo}+"
    return "under-18"


@dataclass(frozen=True)
class Place:
    country: str
    state: str
    city: str
    setting: str


@dataclass(frozen=True)
class Occupation:
    title: str
    employment_type: str
    description: str


@dataclass(frozen=True)
class Persona:
    index: int
    age: int
    gender: str
    ethnicity: str
    place: Place
    activity_level: str
    occupations: tuple[Occupation, ...]
    body_composition: str
    health: tuple[str, ...]
    physical_limitations: tuple[str, ...]
    goals: tuple[str, ...]
    challenges: tuple[str, ...]

    @classmethod
    def from_doc(cls, doc: dict, index: int) -> "Persona":
        """Parse a persona document; structural problems raise
        PersonaParseError, which is distinct from invariant violations."""
        if not isinstance(doc, dict):
            raise PersonaParseError(f"persona document must be an object, got {type(doc).__name__}")
        missing = [f for f in PERSONA_FIELDS if f not in doc]
        if missing:
            raise PersonaParseError(f"missing fields: {missing}")
        age = doc["age"]
        if isinstance(age, bool) or not isinstance(age, int):
            raise PersonaParseError(f"age must be an integer, got {age!r}")
        place = doc["place"]
        if not isinstance(place, dict):
            raise PersonaParseError("place must be an object")
        for key in ("country", "state", "city", "setting"):
            if not isinstance(place.get(key), str):
                raise PersonaParseError(f"place.{key} must be a string")
        occupations = doc["occupations"]
        if not isinstance(occupations, list):
            raise PersonaParseError("occupations must be a list")
        parsed_occ = []
        for i, occ in enumerate(occupations):
            if not isinstance(occ, dict):
                raise PersonaParseError(f"occupations[{i}] must be an object")
            for key in ("title", "employment_type", "description"):
                if not isinstance(occ.get(key), str):
                    raise PersonaParseError(f"occupations[{i}].{key} must be a string")
            parsed_occ.append(
                Occupation(occ["title"], occ["employment_type"], occ["description"])
            )
        for key in ("health", "physical_limitations", "goals", "challenges"):
            value = doc[key]
            if not isinstance(value, list) or not all(isinstance(x, str) for x in value):
                raise PersonaParseError(f"{key} must be a list of strings")
        for key in ("gender", "ethnicity", "activity_level", "body_composition"):
            if not isinstance(doc[key], str):
                raise PersonaParseError(f"{key} must be a string")
        return cls(
            index=index,
            age=age,
            gender=doc["gender"],
            ethnicity=doc["ethnicity"],
            place=Place(place["country"], place["state"], place["city"], place["setting"]),
            activity_level=doc["activity_level"],
            occupations=tuple(parsed_occ),
            body_composition=doc["body_composition"],
            health=tuple(doc["health"]),
            physical_limitations=tuple(doc["physical_limitations"]),
            goals=tuple(doc["goals"]),
            challenges=tuple(doc["challenges"]),
        )

    def to_doc(self) -> dict:
        """Document form, field names as persisted (index is positional)."""
        return {
            "age": self.age,
            "gender": self.gender,
            "ethnicity": self.ethnicity,
            "place": {
                "country": self.place.country,
                "state": self.place.state,
                "city": self.place.city,
                "setting": self.place.setting,
            },
            "activity_level": self.activity_level,
            "occupations": [
                {
                    "title": o.title,
                    "employment_type": o.employment_type,
                    "description": o.description,
                }
                for o in self.occupations
            ],
            "body_composition": self.body_composition,
            "health": list(self.health),
            "physical_limitations": list(self.physical_limitations),
            "goals": list(self.goals),
            "challenges": list(self.challenges),
        }


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str

    def __str__(self):
        return f"{self.field}: {self.rule}"


@dataclass
class ValidationResult:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_persona(p: Persona) -> ValidationResult:
    """Check the per-persona invariants; pure, report-only."""
    v: list[Violation] = []
    if p.age < MIN_AGE:
        v.append(Violation("age", f"age >= {MIN_AGE}"))
    if len(p.goals) < MIN_GOALS:
        v.append(Violation("goals", f"|goals| >= {MIN_GOALS}"))
    if len(p.challenges) < MIN_CHALLENGES:
        v.append(Violation("challenges", f"|challenges| >= {MIN_CHALLENGES}"))
    if not p.occupations:
        v.append(Violation("occupations", "occupations non-empty"))
    if p.gender not in GENDERS:
        v.append(Violation("gender", f"gender in {GENDERS}"))
    if p.activity_level not in ACTIVITY_LEVELS:
        v.append(Violation("activity_level", f"activity_level in {ACTIVITY_LEVELS}"))
    if p.place.setting not in SETTINGS:
        v.append(Violation("place.setting", f"setting in {SETTINGS}"))

    def check_texts(name: str, values: Sequence[str]):
        if any(not x.strip() for x in values):
            v.append(Violation(name, "every list element non-empty text"))

    check_texts("health", p.health)
    check_texts("physical_limitations", p.physical_limitations)
    check_texts("goals", p.goals)
    check_texts("challenges", p.challenges)
    for i, occ in enumerate(p.occupations):
        if not occ.title.strip():
            v.append(Violation(f"occupations[{i}].title", "non-empty text"))
    if not p.body_composition.strip():
        v.append(Violation("body_composition", "non-empty text"))
    if not p.ethnicity.strip():
        v.append(Violation("ethnicity", "non-empty text"))
    return ValidationResult(v)


@dataclass(frozen=True)
class BalanceViolation:
    attribute: str
    dominant_value: str
    share: float


@dataclass(frozen=True)
class UniquenessViolation:
    field: str
    duplicated_value: str


@dataclass
class BatchReport:
    balance_violations: list[BalanceViolation] = field(default_factory=list)
    uniqueness_violations: list[UniquenessViolation] = field(default_factory=list)
    coherence_flags: list[int] = field(default_factory=list)
    extra_cardinality_info: list[int] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not (
            self.balance_violations
            or self.uniqueness_violations
            or self.coherence_flags
        )


def validate_batch(batch: Sequence[Persona], dominance_threshold: float = 0.5) -> BatchReport:
    """Batch-level balance / uniqueness / coherence report.

    Duplicate detection uses normalized (case-folded, whitespace-collapsed)
    string equality. Balance flags any enumerated attribute whose most
    common value exceeds ``dominance_threshold``; single-persona batches
    are exempt. More than 3 goals/challenges is informational only.
    """
    if not batch:
        raise ContractError("batch must be non-empty")
    report = BatchReport()

    # Uniqueness: job titles and whole health profiles.
    title_owners: dict[str, set[int]] = {}
    for p in batch:
        for occ in p.occupations:
            title_owners.setdefault(_normalize(occ.title), set()).add(p.index)
    for title, owners in sorted(title_owners.items()):
        if len(owners) > 1:
            report.uniqueness_violations.append(
                UniquenessViolation("occupations.title", title)
            )
    profile_owners: dict[tuple, set[int]] = {}
    for p in batch:
        profile = tuple(sorted(_normalize(h) for h in p.health))
        profile_owners.setdefault(profile, set()).add(p.index)
    for profile, owners in sorted(profile_owners.items()):
        if len(owners) > 1 and profile:
            report.uniqueness_violations.append(
                UniquenessViolation("health", "; ".join(profile))
            )

    # Balance over enumerated attributes (n=1 trivially dominant, exempt).
    if len(batch) > 1:
        attributes = {
            "gender": lambda p: p.gender,
            "ethnicity": lambda p: p.ethnicity,
            "activity_level": lambda p: p.activity_level,
            "place.setting": lambda p: p.place.setting,
            "age_range": lambda p: _age_range_label(p.age),
        }
        for name, get in attributes.items():
            counts: dict[str, int] = {}
            for p in batch:
                counts[get(p)] = counts.get(get(p), 0) + 1
            value, count = max(sorted(counts.items()), key=lambda kv: kv[1])
            share = count / len(batch)
            if share > dominance_threshold:
                report.balance_violations.append(BalanceViolation(name, value, share))

    for p in batch:
        if len(p.goals) < MIN_GOALS or len(p.challenges) < MIN_CHALLENGES:
            report.coherence_flags.append(p.index)
        elif len(p.goals) > MIN_GOALS or len(p.challenges) > MIN_CHALLENGES:
            report.extra_cardinality_info.append(p.index)
    return report


@dataclass(frozen=True)
class IndexInterval:
    lo: int
    hi: int

    def __post_init__(self):
        if self.lo < 0 or self.hi < self.lo:
            raise ConfigError(f"bad index interval [{self.lo}, {self.hi}]")

    def __len__(self):
        return self.hi - self.lo + 1

    def __contains__(self, index: int) -> bool:
        return self.lo <= index <= self.hi

    def overlaps(self, other: "IndexInterval") -> bool:
        return self.lo <= other.hi and other.lo <= self.hi

    def indices(self) -> range:
        return range(self.lo, self.hi + 1)


DEFAULT_SFT_RANGE = IndexInterval(0, 2999)
DEFAULT_TREE_RANGE = IndexInterval(3000, 3999)
DEFAULT_EVAL_RANGE = IndexInterval(4000, 4019)


@dataclass(frozen=True)
class PoolPartition:
    sft_range: IndexInterval = DEFAULT_SFT_RANGE
    tree_range: IndexInterval = DEFAULT_TREE_RANGE
    eval_range: IndexInterval = DEFAULT_EVAL_RANGE

    def intervals(self) -> tuple[IndexInterval, IndexInterval, IndexInterval]:
        return (self.sft_range, self.tree_range, self.eval_range)


def partition_pool(pool_size: int, config: PoolPartition | None = None) -> PoolPartition:
    """Validate the three-way index partition against the pool size."""
    partition = config or PoolPartition()
    names = ("sft_range", "tree_range", "eval_range")
    intervals = partition.intervals()
    for name, interval in zip(names, intervals):
        if interval.hi >= pool_size:
            raise ConfigError(
                f"{name} [{interval.lo}, {interval.hi}] exceeds pool size {pool_size}"
            )
    for i in range(3):
        for j in range(i + 1, 3):
            if intervals[i].overlaps(intervals[j]):
                raise ConfigError(f"{names[i]} overlaps {names[j]}")
    return partition


def save_pool(personas: Sequence[Persona], path: str | Path) -> None:
    """One persona document per line; index is the line position."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for p in personas:
            fh.write(json.dumps(p.to_doc(), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def load_pool(path: str | Path) -> list[Persona]:
    personas = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for index, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise PersonaParseError(f"line {index}: invalid JSON: {exc}")
            personas.append(Persona.from_doc(doc, index))
    return personas


def _parse_batch_payload(raw: str) -> list[dict]:
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise PersonaParseError(f"batch payload is not valid JSON: {exc}")
    if isinstance(payload, dict) and "personas" in payload:
        payload = payload["personas"]
    if isinstance(payload, dict):
        payload = [payload]
    if not isinstance(payload, list):
        raise PersonaParseError("batch payload must be a JSON array of personas")
    return payload


def generate_persona_batch(
    backend: AgentBackend,
    n: int,
    templates: PromptTemplates,
    retries: int = 2,
    start_index: int = 0,
    params: SamplingParams | None = None,
) -> list[Persona]:
    """Drive persona generation through a backend and parse the result.

    The whole batch is re-requested on unparseable or invariant-violating
    output; after ``retries`` extra attempts a GenerationError is raised.
    Transport failures propagate as-is.
    """
    if n < 1:
        raise ContractError("n must be >= 1")
    params = params or SamplingParams(temperature=0.9, top_p=0.95, max_tokens=4096)
    user_prompt = (
        templates.persona_user
        + f"\n\nReturn a JSON array containing exactly {n} persona objects."
    )
    last_problem = "no attempts made"
    for _attempt in range(retries + 1):
        completion = backend.complete(
            templates.persona_system,
            [{"role": "user", "content": user_prompt}],
            params,
        )
        try:
            docs = _parse_batch_payload(completion.text)
            if len(docs) != n:
                raise PersonaParseError(f"expected {n} personas, got {len(docs)}")
            personas = [
                Persona.from_doc(doc, start_index + i) for i, doc in enumerate(docs)
            ]
        except PersonaParseError as exc:
            last_problem = str(exc)
            continue
        bad = [
            (p.index, result)
            for p in personas
            if not (result := validate_persona(p)).ok
        ]
        if bad:
            index, result = bad[0]
            last_problem = f"persona {index} violates: " + "; ".join(
                str(v) for v in result.violations
            )
            continue
        return personas
    raise GenerationError(
        f"persona batch unusable after {retries + 1} attempts: {last_problem}"
    )
