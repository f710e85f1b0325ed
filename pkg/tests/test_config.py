import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from krakensim.config import (
    ALIASES,
    SCHEMA,
    InvalidValue,
    ParseError,
    RunConfig,
    UnknownKey,
    describe_keys,
    emit_config,
    parse_config,
)


def test_minimal_config_fills_defaults():
    cfg = parse_config("scenario = xr\nrun.seed = 42\n")
    assert cfg.scenario == "xr" and cfg.seed == 42
    assert cfg["negotiation.r_max"] == 8
    assert cfg["negotiation.round_latency_ms"] == 10
    assert cfg["intersection.frame_bits"] == 1_000_000
    assert cfg["intersection.intent_bits"] == 1_000
    assert cfg["sensing.threshold_sigma"] == 4.0
    assert cfg.explicit == {"run.scenario", "run.seed"}


def test_r_max_zero_rejected():
    with pytest.raises(InvalidValue, match=">= 1"):
        parse_config("negotiation.r_max = 0\n")


def test_parse_error_reports_line():
    with pytest.raises(ParseError) as e:
        parse_config("# header\n\nrun.seed = 1\nthis line has no equals\n")
    assert e.value.line == 4


def test_duplicate_key_via_alias():
    with pytest.raises(ParseError) as e:
        parse_config("seed = 1\nrun.seed = 2\n")
    assert e.value.line == 2


def test_unknown_key():
    with pytest.raises(UnknownKey):
        parse_config("negotiation.rmax = 3\n")
    with pytest.raises(UnknownKey):
        RunConfig().get("nope")


@pytest.mark.parametrize(
    "line",
    [
        "run.mode = hybrid",
        "run.seed = -1",
        f"run.seed = {2**64}",
        "duals.frozen = maybe",
        "duals.eta = nan",
        "sensing.n = 17",
        "intersection.n = two",
    ],
)
def test_invalid_values(line):
    with pytest.raises(InvalidValue):
        parse_config(line + "\n")


def test_cross_key_check():
    with pytest.raises(InvalidValue):
        RunConfig().with_overrides({"phy.theta_lo": 0.9, "phy.theta_hi": 0.1})


def test_comments_and_underscores():
    cfg = parse_config("intersection.frame_bits = 2_000_000  # bigger frames\n")
    assert cfg["intersection.frame_bits"] == 2_000_000


def test_every_key_documented_once():
    doc = describe_keys().splitlines()
    assert [ln.split(" = ", 1)[0] for ln in doc] == list(SCHEMA)
    assert set(ALIASES.values()) <= set(SCHEMA)


def valid_value(key):
    spec = SCHEMA[key]
    if spec.choices:
        base = st.sampled_from(spec.choices)
    elif spec.kind is bool:
        base = st.booleans()
    elif spec.kind is int:
        base = st.integers(0, 2**64 - 1) | st.integers(-5, 100)
    elif spec.kind is float:
        base = st.floats(-2, 1e7, allow_nan=False) | st.floats(0, 1)
    else:
        base = st.text("abc", min_size=1)
    return base.filter(lambda v: spec.check is None or spec.check(v))


configs = st.lists(st.sampled_from(sorted(SCHEMA)), unique=True, max_size=12).flatmap(
    lambda keys: st.fixed_dictionaries({k: valid_value(k) for k in keys})
)


@given(configs)
def test_emit_parse_round_trip(pairs):
    try:
        cfg = RunConfig().with_overrides(pairs)
    except InvalidValue:
        return  # cross-key constraint
    text = emit_config(cfg)
    again = parse_config(text)
    assert again == cfg
    assert emit_config(again) == text
    for k, v in pairs.items():
        assert again[k] == v or (isinstance(v, float) and math.isclose(again[k], v))
