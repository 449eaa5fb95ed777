import random

import numpy as np
import pytest
from hypothesis import given, strategies as st

from feedloop.drift import CorpusProfile, build_profile, check_drift, js_divergence, oov_rate
from feedloop.errors import EmptyProfile, EmptyWindow
from feedloop.ingest import Message
from feedloop.textproc import bucket


def profile(dist: dict[int, float], tokens: int = 100) -> CorpusProfile:
    return CorpusProfile(unigram_dist=dist, token_count=tokens)


def dense_jsd(p: dict[int, float], q: dict[int, float]) -> float:
    """Brute-force oracle over dense numpy vectors, base-2 logs."""
    support = sorted(set(p) | set(q))
    pv = np.array([p.get(b, 0.0) for b in support])
    qv = np.array([q.get(b, 0.0) for b in support])
    m = 0.5 * (pv + qv)
    def kl(a, b):
        mask = a > 0
        return float(np.sum(a[mask] * np.log2(a[mask] / b[mask])))
    return 0.5 * kl(pv, m) + 0.5 * kl(qv, m)


def random_distribution(rng: random.Random, size: int, offset: int = 0) -> dict[int, float]:
    raw = [rng.random() for _ in range(size)]
    total = sum(raw)
    return {offset + i: v / total for i, v in enumerate(raw)}


# --- profiles ---


def test_profile_counts():
    p = build_profile(["a a b"])
    assert p.token_count == 3
    assert p.unigram_dist[bucket("a")] == pytest.approx(2 / 3)
    assert p.unigram_dist[bucket("b")] == pytest.approx(1 / 3)


def test_empty_profile():
    p = build_profile([])
    assert p.token_count == 0
    assert p.unigram_dist == {}


def test_profile_is_order_invariant():
    texts = ["alpha beta", "gamma", "beta beta gamma"]
    a = build_profile(texts)
    b = build_profile(list(reversed(texts)))
    c = build_profile([" ".join(texts)])
    assert a.unigram_dist == b.unigram_dist == c.unigram_dist


def test_profile_probabilities_sum_to_one():
    p = build_profile(["some words here", "and some more words"])
    assert sum(p.unigram_dist.values()) == pytest.approx(1.0, abs=1e-9)
    assert p.vocab == frozenset(p.unigram_dist)


# --- Jensen-Shannon divergence ---


def test_jsd_identical_profiles_is_zero():
    p = profile({1: 0.5, 2: 0.5})
    assert js_divergence(p, p) == 0.0


def test_jsd_disjoint_supports_is_one():
    p = profile({1: 0.5, 2: 0.5})
    q = profile({3: 0.25, 4: 0.75})
    assert js_divergence(p, q) == pytest.approx(1.0, abs=1e-12)


def test_jsd_reference_value():
    # P = {a: 1}, Q = {a: 0.5, b: 0.5} -> 0.311278
    p = profile({1: 1.0})
    q = profile({1: 0.5, 2: 0.5})
    assert js_divergence(p, q) == pytest.approx(0.311278, abs=1e-6)


def test_jsd_empty_profile_rejected():
    p = profile({1: 1.0})
    with pytest.raises(EmptyProfile):
        js_divergence(p, CorpusProfile({}, 0))


def test_jsd_matches_dense_oracle_on_random_pairs():
    rng = random.Random(2024)
    for trial in range(100):
        shared = rng.randint(0, 12)
        p = random_distribution(rng, rng.randint(1, 20))
        q = random_distribution(rng, rng.randint(1, 20), offset=rng.randint(0, shared))
        sparse = js_divergence(profile(p), profile(q))
        assert sparse == pytest.approx(dense_jsd(p, q), abs=1e-9), f"trial {trial}"


def test_jsd_matches_scipy():
    from scipy.spatial.distance import jensenshannon

    rng = random.Random(5)
    for _ in range(20):
        p = random_distribution(rng, 10)
        q = random_distribution(rng, 14, offset=5)
        support = sorted(set(p) | set(q))
        pv = [p.get(b, 0.0) for b in support]
        qv = [q.get(b, 0.0) for b in support]
        expected = jensenshannon(pv, qv, base=2) ** 2
        assert js_divergence(profile(p), profile(q)) == pytest.approx(expected, abs=1e-9)


@given(st.integers(0, 2**31))
def test_jsd_symmetric_and_bounded(seed):
    rng = random.Random(seed)
    p = profile(random_distribution(rng, rng.randint(1, 15)))
    q = profile(random_distribution(rng, rng.randint(1, 15), offset=rng.randint(0, 10)))
    forward = js_divergence(p, q)
    backward = js_divergence(q, p)
    assert forward == pytest.approx(backward, abs=1e-12)
    assert 0.0 <= forward <= 1.0


# --- OOV rate ---


def test_oov_zero_when_window_within_reference():
    ref = build_profile(["alpha beta gamma"])
    window = build_profile(["alpha beta"])
    assert oov_rate(window, ref) == 0.0


def test_oov_one_when_disjoint():
    ref = build_profile(["alpha beta"])
    window = build_profile(["delta epsilon"])
    assert oov_rate(window, ref) == pytest.approx(1.0)


def test_oov_mass_fraction():
    # window "x x y" vs reference containing only x -> 1/3
    ref = build_profile(["x"])
    window = build_profile(["x x y"])
    assert oov_rate(window, ref) == pytest.approx(1 / 3)


def test_oov_empty_window_rejected():
    with pytest.raises(EmptyProfile):
        oov_rate(CorpusProfile({}, 0), build_profile(["a"]))


# --- check_drift ---


def msgs(texts, start=0):
    return [Message("c", start + i, 1000 + i, t) for i, t in enumerate(texts)]


def test_self_window_does_not_trigger():
    corpus = ["the usual топics here", "facts and figures", "the usual report"]
    ref = build_profile(corpus)
    report = check_drift(msgs(corpus), ref, tau_jsd=0.2, tau_oov=0.3, computed_at=5)
    assert report.jsd == pytest.approx(0.0, abs=1e-9)
    assert not report.triggered


def test_disjoint_window_triggers():
    ref = build_profile(["alpha beta gamma delta"])
    report = check_drift(msgs(["omega psi chi", "phi upsilon"]), ref, 0.2, 0.3, computed_at=5)
    assert report.jsd == pytest.approx(1.0, abs=1e-9)
    assert report.triggered


def test_unreachable_thresholds_never_trigger():
    ref = build_profile(["alpha beta"])
    report = check_drift(msgs(["omega psi"]), ref, tau_jsd=1.1, tau_oov=1.1, computed_at=5)
    assert not report.triggered


def test_trigger_invariant():
    ref = build_profile(["alpha beta gamma"])
    for texts in (["alpha beta"], ["omega"], ["alpha omega"]):
        report = check_drift(msgs(texts), ref, 0.2, 0.3, computed_at=1)
        assert report.triggered == ((report.jsd > 0.2) or (report.oov_rate > 0.3))


def test_empty_window_rejected():
    with pytest.raises(EmptyWindow):
        check_drift([], build_profile(["a"]), 0.2, 0.3, computed_at=0)


def test_check_drift_deterministic():
    ref = build_profile(["alpha beta gamma"])
    window = msgs(["alpha omega", "beta beta"])
    a = check_drift(window, ref, 0.2, 0.3, computed_at=9)
    b = check_drift(window, ref, 0.2, 0.3, computed_at=9)
    assert a == b
