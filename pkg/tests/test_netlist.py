import random

import pytest
from hypothesis import given, settings

from memsim.netlist import (ERROR_KINDS, NetlistError, ParseError, format_spec, parse,
                            parse_collect, parse_overrides, validate)

from netlist_gen import MINIMAL, fuzz_input, netlists


def kinds_of(text, check=True):
    spec, errors = parse_collect(text)
    if not errors and check:
        try:
            validate(spec)
        except NetlistError as e:
            errors = e.errors
    return [e.kind for e in errors], errors


def test_minimal_example():
    spec = parse(MINIMAL)
    assert (len(spec.sources), len(spec.elements), len(spec.analyses)) == (1, 1, 1)
    m = spec.elements[0]
    assert m.get("c_out") == 5e-10
    assert m.get("topology") == "decremental"
    assert m.get("vb2") == 0.64  # optional, defaulted
    assert spec.analyses[0].get("record") == ("q", "v", "cm")
    assert validate(spec) is spec


def test_unknown_element_line():
    kinds, errors = kinds_of("source vin sine amp=1 freq=1k\nfoo X1 a=1\n")
    assert kinds == ["UnknownElement"]
    assert (errors[0].line, errors[0].col) == (2, 1)


def test_missing_field_is_named():
    text = "memcap M1 plus=vin minus=0 c_int=240n c_out=500p vb1=600m vb3=600m\n"
    kinds, errors = kinds_of(text)
    assert kinds == ["MissingField"]
    assert "topology" in errors[0].message


def test_dangling_node():
    text = MINIMAL.replace("plus=vin", "plus=nowhere")
    kinds, errors = kinds_of(text)
    assert "DanglingNode" in kinds
    assert any("nowhere" in e.message for e in errors)


def test_duplicate_name():
    text = MINIMAL + "memcap M1 plus=vin minus=0 topology=incremental c_int=1n c_out=1n vb1=0.6 vb3=0.6\n"
    kinds, errors = kinds_of(text)
    assert kinds == ["DuplicateName"]
    assert errors[0].line == 4


def test_range_violation():
    kinds, errors = kinds_of(MINIMAL.replace("c_out=500p", "c_out=-1p"))
    assert kinds == ["BadValue"]
    assert "M1" in errors[0].message and "c_out" in errors[0].message


def test_bad_unit_and_number_positions():
    text = "source vin sine amp=350mV freq=1..2\n"
    kinds, errors = kinds_of(text, check=False)
    assert kinds == ["BadUnit", "BadNumber"]
    assert text[errors[0].col - 1:].startswith("mV")
    assert text[errors[1].col - 1:].startswith("1..2")


def test_errors_are_collected_not_fail_fast():
    text = "foo a\nsource vin sine amp=1x freq=1k\nmemcap M1 plus=a\nanalysis transient\n"
    kinds, _ = kinds_of(text, check=False)
    assert kinds.count("MissingField") >= 2
    assert {"UnknownElement", "BadUnit"} <= set(kinds)


@pytest.mark.parametrize("text, kind", [
    ("resistor R1 a=x b=0 r=1k bogus=1\n", "UnknownField"),
    ("memcap M1 plus=a minus=0 topology=sideways c_int=1n c_out=1n vb1=0.6 vb3=0.6\n", "BadValue"),
    ("resistor R1 a=x b=0 oops\n", "Syntax"),
    ("resistor R1 a=x b=0 r=1k r=2k\n", "DuplicateName"),
    ("version 2\n", "BadValue"),
    ("source v sine\n", "MissingField"),
    ("analysis nothing\n", "UnknownElement"),
    ("record q(\n", "BadValue"),
])
def test_extra_error_kinds(text, kind):
    kinds, _ = kinds_of(text, check=False)
    assert kind in kinds


def test_validation_checks():
    base = "source vin sine amp=1 freq=1k\nresistor R1 a=vin b=0 r=1k\n"
    assert kinds_of(base + "resistor R2 a=vin b=vin r=1\n")[0] == ["BadValue"]
    assert kinds_of(base + "analysis sweep target=R9.r values=1 tstop=1m\n")[0] == ["DanglingNode"]
    assert kinds_of(base + "analysis sweep target=R1.zz values=1 tstop=1m\n")[0] == ["UnknownField"]
    assert kinds_of(base + "analysis transient tstop=-1\n")[0] == ["BadValue"]
    assert kinds_of(base + "analysis transient tstop=1m record=q(R1)\n")[0] == ["DanglingNode"]
    assert kinds_of(base + "analysis montecarlo n=2 tstop=1m\n")[0] == ["BadValue"]
    assert kinds_of(base + "source v2 sine amp=1 freq=1k node=vin\n")[0] == ["DuplicateName"]
    assert kinds_of("resistor R1 a=x b=y r=1k\n")[0].count("DanglingNode") == 3


def test_ground_required():
    kinds, errors = kinds_of("source vin sine amp=1 freq=1k\nresistor R1 a=vin b=vin2 r=1\n"
                             "resistor R2 a=vin2 b=vin r=1\n")
    assert "DanglingNode" in kinds
    assert any("ground" in e.message for e in errors)


def test_all_documented_kinds_reachable():
    seen = set()
    samples = [
        "foo X1 a=1", "source vin sine amp=1x freq=1k", "source vin sine amp=1..",
        "memcap M1 plus=a", MINIMAL.replace("plus=vin", "plus=zz"),
        MINIMAL + MINIMAL.splitlines()[1], "resistor R1 a=x b=0 zz=1",
        "resistor R1 a=x b=0 r", "version 9",
    ]
    for text in samples:
        seen.update(kinds_of(text + "\n")[0])
    assert seen == set(ERROR_KINDS)


def test_comments_and_blank_lines():
    spec = parse("# header\n\n" + MINIMAL.replace("\n", "   # trailing\n", 1))
    assert len(spec.sources) == 1


def test_version_must_come_first():
    assert "Syntax" in kinds_of(MINIMAL + "version 1\n", check=False)[0]
    assert parse("version 1\n" + MINIMAL).version == 1


def test_error_formatting():
    with pytest.raises(NetlistError) as e:
        parse("foo X1 a=1\n")
    assert str(e.value) == "1:1: UnknownElement: unknown statement 'foo'"
    assert e.value.errors[0] == ParseError(1, 1, "UnknownElement", "unknown statement 'foo'")


def test_round_trip_minimal():
    spec = parse(MINIMAL)
    again = parse(format_spec(spec))
    assert again == spec
    assert format_spec(again) == format_spec(spec)


@given(netlists())
@settings(max_examples=150, deadline=None)
def test_round_trip_generated(text):
    spec = parse(text)
    assert parse(format_spec(spec)) == spec


@given(netlists())
@settings(max_examples=50, deadline=None)
def test_generated_netlists_validate(text):
    validate(parse(text))


def _check_positions(text, errors):
    lines = text.splitlines()
    for e in errors:
        assert 1 <= e.line <= len(lines), (text, e)
        assert 1 <= e.col <= len(lines[e.line - 1]), (text, e)
        assert not lines[e.line - 1][e.col - 1].isspace(), (text, e)


def test_fuzz_smoke():
    rng = random.Random(7)
    for _ in range(20000):
        text = fuzz_input(rng)
        spec, errors = parse_collect(text)
        _check_positions(text, errors)
        if spec is not None:
            try:
                validate(spec)
            except NetlistError as e:
                _check_positions(text, e.errors)


def test_overrides():
    assert parse_overrides(["amp=350m", "topology=decremental"]) == {
        "amp": 0.35, "topology": "decremental"}
    with pytest.raises(NetlistError):
        parse_overrides(["amp"])
    with pytest.raises(NetlistError) as e:
        parse_overrides(["amp=3xV"])
    assert e.value.errors[0].kind == "BadUnit"
