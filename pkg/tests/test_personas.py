from __future__ import annotations

import json

import pytest

from coevo.agents import ScriptedBackend
from coevo.errors import ConfigError, ContractError, GenerationError, PersonaParseError
from coevo.mocks import mock_persona, mock_persona_generator
from coevo.personas import (
    IndexInterval,
    Persona,
    PoolPartition,
    generate_persona_batch,
    load_pool,
    partition_pool,
    save_pool,
    validate_batch,
    validate_persona,
)

from conftest import SAMPLE_PERSONA_DOC


def sample_persona(index=0, **overrides) -> Persona:
    doc = json.loads(json.dumps(SAMPLE_PERSONA_DOC))
    doc.update(overrides)
    return Persona.from_doc(doc, index)


def test_sample_persona_is_valid():
    assert validate_persona(sample_persona()).ok


def test_underage_persona_flags_age_rule():
    result = validate_persona(sample_persona(age=17))
    assert [v.field for v in result.violations] == ["age"]
    assert "18" in result.violations[0].rule


def test_two_goals_flags_goal_cardinality():
    result = validate_persona(sample_persona(goals=["a", "b"]))
    assert [v.field for v in result.violations] == ["goals"]


def test_validate_persona_is_pure():
    p = sample_persona(age=17)
    first = validate_persona(p)
    second = validate_persona(p)
    assert first.violations == second.violations


def test_parse_error_is_distinct_from_violation():
    with pytest.raises(PersonaParseError):
        Persona.from_doc({"age": 30}, 0)
    with pytest.raises(PersonaParseError):
        Persona.from_doc({**SAMPLE_PERSONA_DOC, "age": "thirty"}, 0)


def test_duplicate_job_title_is_uniqueness_violation():
    a = sample_persona(0)
    b_doc = json.loads(json.dumps(SAMPLE_PERSONA_DOC))
    b_doc["occupations"][0]["title"] = "Nurse"
    b_doc["health"] = ["Hypertension"]
    c_doc = json.loads(json.dumps(b_doc))
    c_doc["occupations"][0]["title"] = "  nurse "  # normalized equality
    c_doc["health"] = ["Back pain"]
    b = Persona.from_doc(b_doc, 1)
    c = Persona.from_doc(c_doc, 2)
    report = validate_batch([a, b, c])
    fields = [(u.field, u.duplicated_value) for u in report.uniqueness_violations]
    assert ("occupations.title", "nurse") in fields


def test_distinct_titles_no_uniqueness_violation():
    batch = [mock_persona(i) for i in range(8)]
    report = validate_batch(batch, dominance_threshold=1.0)
    assert not [
        u for u in report.uniqueness_violations if u.field == "occupations.title"
    ]


def test_gender_dominance_26_of_50():
    batch = []
    for i in range(50):
        doc = json.loads(json.dumps(SAMPLE_PERSONA_DOC))
        doc["gender"] = "Male" if i < 26 else "Female"
        doc["occupations"][0]["title"] = f"Job {i}"
        doc["health"] = [f"condition {i}"]
        # keep the other enums spread so only gender dominates
        doc["ethnicity"] = ["Asian", "Black", "Hispanic", "White"][i % 4]
        doc["activity_level"] = [
            "Sedentary", "Lightly active", "Moderately active",
            "Very active", "Highly active",
        ][i % 5]
        doc["place"]["setting"] = ["urban", "suburban", "rural", "frontier"][i % 4]
        doc["age"] = [20, 30, 40, 60, 70][i % 5]
        batch.append(Persona.from_doc(doc, i))
    report = validate_batch(batch)
    gender = [b for b in report.balance_violations if b.attribute == "gender"]
    assert len(gender) == 1
    assert gender[0].dominant_value == "Male"
    assert gender[0].share == pytest.approx(26 / 50)
    assert [b.attribute for b in report.balance_violations] == ["gender"]


def test_batch_of_one_is_clean():
    report = validate_batch([sample_persona()])
    assert report.ok
    assert not report.balance_violations


def test_coherence_flags_and_informational_extras():
    short = sample_persona(1, goals=["only one", "two"])
    extra = sample_persona(
        2, goals=[*SAMPLE_PERSONA_DOC["goals"], "a fourth goal"]
    )
    report = validate_batch([sample_persona(0), short, extra], dominance_threshold=1.0)
    assert report.coherence_flags == [1]
    assert report.extra_cardinality_info == [2]


def test_partition_defaults_for_pool_of_5000():
    partition = partition_pool(5000)
    assert (partition.sft_range.lo, partition.sft_range.hi) == (0, 2999)
    assert (partition.tree_range.lo, partition.tree_range.hi) == (3000, 3999)
    assert (partition.eval_range.lo, partition.eval_range.hi) == (4000, 4019)


def test_partition_rejects_pool_4019():
    with pytest.raises(ConfigError):
        partition_pool(4019)


def test_partition_accepts_custom_disjoint_ranges():
    partition = partition_pool(
        25,
        PoolPartition(
            sft_range=IndexInterval(0, 9),
            tree_range=IndexInterval(10, 19),
            eval_range=IndexInterval(20, 24),
        ),
    )
    assert len(partition.sft_range) == 10


def test_partition_rejects_overlap():
    with pytest.raises(ConfigError):
        partition_pool(
            100,
            PoolPartition(
                sft_range=IndexInterval(0, 10),
                tree_range=IndexInterval(10, 20),
                eval_range=IndexInterval(30, 40),
            ),
        )


def test_default_partition_counts_and_disjointness():
    partition = partition_pool(4020)
    intervals = partition.intervals()
    assert [len(i) for i in intervals] == [3000, 1000, 20]
    seen = set()
    for interval in intervals:
        indices = set(interval.indices())
        assert not indices & seen
        seen |= indices
    assert len(seen) == 3000 + 1000 + 20


def test_pool_round_trip(tmp_path):
    pool = [mock_persona(i) for i in range(5)]
    path = tmp_path / "pool.ndjson"
    save_pool(pool, path)
    loaded = load_pool(path)
    assert loaded == pool
    # field names match the documented persona schema exactly
    first = json.loads(path.read_text().splitlines()[0])
    assert sorted(first.keys()) == sorted(
        [
            "age", "gender", "ethnicity", "place", "activity_level",
            "occupations", "body_composition", "health",
            "physical_limitations", "goals", "challenges",
        ]
    )


def test_generate_batch_with_scripted_sample(templates):
    backend = ScriptedBackend(
        responder=lambda s, h, f, i: json.dumps([SAMPLE_PERSONA_DOC])
    )
    personas = generate_persona_batch(backend, 1, templates)
    assert len(personas) == 1
    assert personas[0].age == 35
    assert validate_persona(personas[0]).ok


def test_generate_batch_invalid_age_exhausts_retries(templates):
    bad = {**SAMPLE_PERSONA_DOC, "age": 5}
    backend = ScriptedBackend(responder=lambda s, h, f, i: json.dumps([bad]))
    with pytest.raises(GenerationError):
        generate_persona_batch(backend, 1, templates, retries=2)


def test_generate_batch_rejects_n_zero(templates):
    with pytest.raises(ContractError):
        generate_persona_batch(ScriptedBackend(), 0, templates)


def test_mock_generator_produces_sequenced_indices(templates):
    personas = generate_persona_batch(
        mock_persona_generator(4), 4, templates, start_index=100
    )
    assert [p.index for p in personas] == [100, 101, 102, 103]
    assert all(validate_persona(p).ok for p in personas)
