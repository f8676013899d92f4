import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from agent_gwo.exceptions import ConfigurationError
from agent_gwo.space import (
    CONTINUOUS_FIELDS,
    AgentConfig,
    DecodingConfig,
    FieldPolicy,
    InvalidPromptError,
    LeaderWeights,
    MaxTokensPolicy,
    PromptTemplate,
    SamplingPolicy,
    clip,
    sample_decoding,
    single_leader_update,
    weighted_leader_update,
)


def cfg(t=0.6, p=0.6, f=0.6, e=0.6, m=1300):
    return DecodingConfig(t, p, f, e, m)


# -- clip ----------------------------------------------------------------------

@pytest.mark.parametrize("x, expected", [(0.5, 0.5), (1.5, 1.0), (-0.3, 0.0)])
def test_clip(x, expected):
    assert clip(x, (0.0, 1.0)) == expected


def test_clip_invalid_interval():
    with pytest.raises(ConfigurationError):
        clip(0.5, (1.0, 0.0))


# -- policies ------------------------------------------------------------------

def test_default_policy_values():
    policy = SamplingPolicy()
    for name in CONTINUOUS_FIELDS:
        fp = policy.field_policy(name)
        assert (fp.mean, fp.std) == (0.6, 0.1)
    assert policy.temperature.interval == (0.0, 1.0)
    assert policy.top_p.interval == (0.05, 1.0)
    assert policy.frequency_penalty.interval == (-2.0, 2.0)
    assert policy.max_tokens.choices == tuple(range(1274, 1525))


def test_policy_validation():
    with pytest.raises(ConfigurationError):
        FieldPolicy(1.5, 0.1, 0.0, 1.0)
    with pytest.raises(ConfigurationError):
        FieldPolicy(0.5, -0.1, 0.0, 1.0)
    with pytest.raises(ConfigurationError):
        MaxTokensPolicy(choices=())
    with pytest.raises(ConfigurationError):
        SamplingPolicy(top_p=FieldPolicy(0.5, 0.1, 0.0, 1.0))


def test_policy_round_trip():
    policy = SamplingPolicy(max_tokens=MaxTokensPolicy(choices=(256, 512, 1024)))
    assert SamplingPolicy.from_dict(json.loads(json.dumps(policy.to_dict()))) == policy
    fixed = SamplingPolicy(max_tokens=MaxTokensPolicy(fixed=800))
    assert SamplingPolicy.from_dict(fixed.to_dict()) == fixed
    assert SamplingPolicy.from_dict(SamplingPolicy().to_dict()) == SamplingPolicy()


# -- sampling ------------------------------------------------------------------

def test_zero_std_sampling_returns_means():
    policy = SamplingPolicy().with_std(0.0)
    d = sample_decoding(policy, np.random.default_rng(0))
    assert (d.temperature, d.top_p, d.frequency_penalty, d.presence_penalty) == (0.6,) * 4


def test_sampling_mean_monte_carlo():
    rng = np.random.default_rng(12345)
    temps = np.array([sample_decoding(SamplingPolicy(), rng).temperature for _ in range(10_000)])
    assert abs(temps.mean() - 0.6) < 0.01
    assert temps.min() >= 0.0 and temps.max() <= 1.0


def test_sampling_max_tokens_uniform_range():
    rng = np.random.default_rng(1)
    draws = {sample_decoding(SamplingPolicy(), rng).max_tokens for _ in range(5000)}
    assert min(draws) >= 1274 and max(draws) <= 1524
    assert len(draws) > 200


def test_sampling_deterministic():
    a = [sample_decoding(SamplingPolicy(), np.random.default_rng(7)) for _ in range(2)]
    assert a[0] == a[1]


# -- max_tokens snapping ----------------------------------------------------------

def test_snap_ties_go_up():
    policy = MaxTokensPolicy(choices=(1000, 1002))
    assert policy.snap(1001.0) == 1002
    assert policy.snap(1000.9) == 1000
    assert policy.snap(990) == 1000
    assert policy.snap(5000) == 1002
    assert MaxTokensPolicy(fixed=700).snap(1234.5) == 700


# -- leader weights ------------------------------------------------------------

def test_leader_weights_default_and_linear():
    w = LeaderWeights()
    assert (w.alpha, w.beta, w.delta) == (0.5, 0.3, 0.2)
    assert LeaderWeights.default(3) == w
    np.testing.assert_allclose(LeaderWeights.linear(4).values, [0.4, 0.3, 0.2, 0.1], atol=1e-15)
    assert LeaderWeights.linear(1).values == (1.0,)


@pytest.mark.parametrize("values", [(0.3, 0.5, 0.2), (0.5, 0.3, 0.3), (0.6, 0.4, 0.0), (0.5, 0.5)])
def test_leader_weights_invalid(values):
    with pytest.raises(ConfigurationError):
        LeaderWeights(values)


@given(st.integers(1, 30))
def test_linear_weights_decreasing_and_normalized(m):
    w = np.array(LeaderWeights.linear(m).values)
    assert abs(w.sum() - 1.0) <= 1e-12
    assert np.all(np.diff(w) < 0)


# -- update rules --------------------------------------------------------------

def test_weighted_update_hand_value():
    leaders = [cfg(t=0.6), cfg(t=0.4), cfg(t=0.2)]
    out = weighted_leader_update(cfg(), leaders, LeaderWeights(), 0.0,
                                 np.random.default_rng(0), SamplingPolicy())
    assert abs(out.temperature - 0.46) < 1e-12


def test_weighted_update_equal_leaders_is_identity():
    v = cfg(0.31, 0.77, -0.4, 1.2, 1400)
    out = weighted_leader_update(cfg(), [v, v, v], LeaderWeights(), 0.0,
                                 np.random.default_rng(0), SamplingPolicy())
    assert out == v


def test_weighted_update_max_tokens_snapped():
    leaders = [cfg(m=1300), cfg(m=1302), cfg(m=1301)]
    # 0.5*1300 + 0.3*1302 + 0.2*1301 = 1300.8
    out = weighted_leader_update(cfg(), leaders, LeaderWeights(), 0.1,
                                 np.random.default_rng(0), SamplingPolicy())
    assert out.max_tokens == 1301


@st.composite
def decoding_in(draw, policy):
    vals = {name: draw(st.floats(policy.field_policy(name).low, policy.field_policy(name).high))
            for name in CONTINUOUS_FIELDS}
    vals["max_tokens"] = draw(st.sampled_from(policy.max_tokens.choices))
    return DecodingConfig(**vals)


@given(st.lists(decoding_in(SamplingPolicy()), min_size=3, max_size=3))
def test_weighted_update_sigma_zero_is_convex(leaders):
    out = weighted_leader_update(leaders[0], leaders, LeaderWeights(), 0.0,
                                 np.random.default_rng(0), SamplingPolicy())
    for name in CONTINUOUS_FIELDS:
        vals = [getattr(l, name) for l in leaders]
        assert min(vals) <= getattr(out, name) <= max(vals)
        exact = sum(Fraction(w) * Fraction(v) for w, v in zip((0.5, 0.3, 0.2), vals))
        assert abs(getattr(out, name) - float(exact)) <= 1e-12


def test_single_leader_sigma_zero_copies_a_leader():
    leaders = [cfg(t=0.9, m=1280), cfg(t=0.5, m=1300), cfg(t=0.1, m=1500)]
    rng = np.random.default_rng(3)
    for _ in range(50):
        out = single_leader_update(cfg(), leaders, LeaderWeights(), 0.0, rng, SamplingPolicy())
        assert out in leaders


def test_single_leader_degenerate_weights_pick_alpha():
    eps = 1e-15
    w = LeaderWeights((1 - 2 * eps, eps * 1.5, eps * 0.5))
    leaders = [cfg(t=0.9), cfg(t=0.5), cfg(t=0.1)]
    rng = np.random.default_rng(0)
    outs = {single_leader_update(cfg(), leaders, w, 0.0, rng, SamplingPolicy()) for _ in range(200)}
    assert outs == {leaders[0]}


def test_update_rules_reject_bad_inputs():
    leaders = [cfg()] * 3
    with pytest.raises(ConfigurationError):
        weighted_leader_update(cfg(), leaders, LeaderWeights(), -0.1,
                               np.random.default_rng(0), SamplingPolicy())
    with pytest.raises(ConfigurationError):
        single_leader_update(cfg(), leaders[:2], LeaderWeights(), 0.1,
                             np.random.default_rng(0), SamplingPolicy())


@given(st.integers(0, 2**31), st.sampled_from([weighted_leader_update, single_leader_update]))
def test_update_rules_deterministic(seed, rule):
    leaders = [cfg(t=0.9), cfg(t=0.5), cfg(t=0.1)]
    a = rule(cfg(), leaders, LeaderWeights(), 0.2, np.random.default_rng(seed), SamplingPolicy())
    b = rule(cfg(), leaders, LeaderWeights(), 0.2, np.random.default_rng(seed), SamplingPolicy())
    assert a == b


# -- templates and agents ------------------------------------------------------

def test_prompt_template_validation():
    with pytest.raises(InvalidPromptError, match="empty"):
        PromptTemplate("   ")
    with pytest.raises(InvalidPromptError, match="placeholder-lost"):
        PromptTemplate("no slot here")
    with pytest.raises(InvalidPromptError, match="placeholder-lost"):
        PromptTemplate("{question} twice {question}")
    assert PromptTemplate("free text", placeholders=()).render("Q?") == "free text\n\nQ?"


def test_prompt_render_and_lineage():
    p = PromptTemplate("Solve: {question}")
    assert p.render("1+1?") == "Solve: 1+1?"
    q = p.edited("Please solve: {question}", 2, "paraphrase")
    assert q.lineage == ((2, "paraphrase"),)
    assert p.lineage == ()
    assert PromptTemplate.from_dict(json.loads(json.dumps(q.to_dict()))) == q


def test_decoding_round_trip_logged_values(logged):
    d = DecodingConfig.from_dict(logged["decoding"]["1"])
    assert d.temperature == 0.9193923355128871
    assert d.max_tokens == 1919
    assert DecodingConfig.from_dict(json.loads(json.dumps(d.to_dict()))) == d
    assert list(d.to_dict()) == ["temperature", "top_p", "frequency_penalty",
                                 "presence_penalty", "max_tokens"]


def test_decoding_missing_field():
    with pytest.raises(ConfigurationError):
        DecodingConfig.from_dict({"temperature": 0.5})


def test_agent_config_round_trip():
    a = AgentConfig(3, cfg(), PromptTemplate("Q: {question}"), "model-x")
    assert AgentConfig.from_dict(json.loads(json.dumps(a.to_dict()))) == a
