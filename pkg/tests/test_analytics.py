from __future__ import annotations

import pytest
from hypothesis import given, strategies as st

from mandm.analytics import (
    AVATAR_MAX_SCALE,
    Alert,
    AlertKind,
    AlertRule,
    Tier,
    UsageConfig,
    avatar_scale,
    classify_usage,
    compute_usage,
    correlate_node,
    correlate_user,
    evaluate_alerts,
    gpu_color,
)
from mandm.core import JobEvent, NodeTelemetry, apply_job_event, apply_telemetry
from mandm.errors import UnknownNodeError, UnknownUserError, ValidationError

from .util import state

DEFAULTS = UsageConfig(node_cap=64, file_cap=1000)


def usage_oracle(n: int, f: int, cfg: UsageConfig = DEFAULTS) -> float:
    return cfg.node_weight * min(n / cfg.node_cap, 1) + cfg.file_weight * min(f / cfg.file_cap, 1)


class TestComputeUsage:
    def test_zero(self):
        assert compute_usage(0, 0, DEFAULTS) == 0.0

    def test_both_saturated_is_100(self):
        assert compute_usage(64, 1000, DEFAULTS) == 100.0

    def test_half_node_cap(self):
        assert compute_usage(32, 0, DEFAULTS) == pytest.approx(40.0, abs=1e-12)

    def test_clamps_above_cap(self):
        assert compute_usage(3 * 64, 0, DEFAULTS) == pytest.approx(80.0, abs=1e-12)

    def test_negative_counts_rejected(self):
        with pytest.raises(ValidationError):
            compute_usage(-1, 0, DEFAULTS)

    @given(n=st.integers(0, 500), f=st.integers(0, 5000))
    def test_matches_oracle_and_bounded(self, n, f):
        u = compute_usage(n, f, DEFAULTS)
        assert u == pytest.approx(usage_oracle(n, f), abs=1e-9)
        assert 0.0 <= u <= 100.0

    @given(n=st.integers(0, 200), f=st.integers(0, 2000))
    def test_monotone_in_each_count(self, n, f):
        u = compute_usage(n, f, DEFAULTS)
        assert compute_usage(n + 1, f, DEFAULTS) >= u
        assert compute_usage(n, f + 1, DEFAULTS) >= u

    @given(n=st.integers(0, 100), k=st.integers(1, 8))
    def test_ratio_invariance(self, n, k):
        # scaling count and cap together leaves the score unchanged
        base = compute_usage(n, 0, UsageConfig(node_cap=64))
        scaled = compute_usage(n * k, 0, UsageConfig(node_cap=64 * k))
        assert scaled == pytest.approx(base, abs=1e-9)


class TestUsageConfig:
    def test_weights_must_sum_to_100(self):
        with pytest.raises(ValidationError):
            UsageConfig(node_cap=64, node_weight=80, file_weight=30)

    def test_threshold_order_enforced(self):
        with pytest.raises(ValidationError):
            UsageConfig(node_cap=64, elevated_threshold=80, critical_threshold=50)

    def test_for_cluster_falls_back_to_node_count(self):
        assert UsageConfig.for_cluster(12).node_cap == 12
        assert UsageConfig.for_cluster(12, node_cap=4).node_cap == 4


class TestClassifyUsage:
    def test_zero_is_normal(self):
        assert classify_usage(0, DEFAULTS) is Tier.NORMAL

    def test_boundaries_inclusive_upward(self):
        assert classify_usage(50, DEFAULTS) is Tier.ELEVATED
        assert classify_usage(80, DEFAULTS) is Tier.CRITICAL

    def test_tier_order_and_colors(self):
        assert Tier.NORMAL < Tier.ELEVATED < Tier.CRITICAL
        assert [t.color for t in Tier] == ["green", "cyan", "red"]

    @given(a=st.floats(0, 100), b=st.floats(0, 100))
    def test_monotone(self, a, b):
        if a <= b:
            assert classify_usage(a, DEFAULTS) <= classify_usage(b, DEFAULTS)


class TestPresentationMaps:
    def test_avatar_scale_endpoints(self):
        assert avatar_scale(0) == 1.0
        assert avatar_scale(100) == AVATAR_MAX_SCALE == 4.0
        assert avatar_scale(50) == 2.5

    def test_gpu_color_endpoints_and_midpoint(self):
        assert gpu_color(0) == 0.0
        assert gpu_color(100) == 1.0
        assert gpu_color(50) == 0.5

    @given(a=st.floats(0, 100), b=st.floats(0, 100))
    def test_gpu_color_monotone(self, a, b):
        if a <= b:
            assert gpu_color(a) <= gpu_color(b)


class TestCorrelation:
    def test_user_with_no_jobs(self):
        s = state()
        assert correlate_user(s, "u0") == frozenset()

    def test_union_over_jobs(self):
        s = state(racks=1, nodes_per_rack=3)
        s = apply_job_event(s, JobEvent.start("j1", "u0", {"r0n0", "r0n1"}, 10, ts=1))
        s = apply_job_event(s, JobEvent.start("j2", "u0", {"r0n1", "r0n2"}, 5, ts=2))
        assert correlate_user(s, "u0") == {"r0n0", "r0n1", "r0n2"}

    def test_unknown_user(self):
        with pytest.raises(UnknownUserError):
            correlate_user(state(), "ghost")

    def test_idle_node(self):
        assert correlate_node(state(), "r0n0") == frozenset()

    def test_node_shared_by_two_users(self):
        s = state(racks=1, nodes_per_rack=2)
        s = apply_job_event(s, JobEvent.start("j1", "u0", {"r0n0"}, 1, ts=1))
        s = apply_job_event(s, JobEvent.start("j2", "u1", {"r0n0", "r0n1"}, 1, ts=2))
        assert correlate_node(s, "r0n0") == {"u0", "u1"}

    def test_unknown_node(self):
        with pytest.raises(UnknownNodeError):
            correlate_node(state(), "nope")

    def test_duality_on_small_random_states(self):
        import random

        rng = random.Random(11)
        for _ in range(25):
            s = state(racks=2, nodes_per_rack=3, n_users=3)
            node_ids = list(s.topology.node_ids)
            for j in range(rng.randint(0, 6)):
                owner = f"u{rng.randint(0, 2)}"
                picked = rng.sample(node_ids, rng.randint(1, 3))
                s = apply_job_event(
                    s, JobEvent.start(f"j{j}", owner, picked, rng.randint(0, 9), ts=j)
                )
            for u in s.users:
                for n in node_ids:
                    assert (u in correlate_node(s, n)) == (n in correlate_user(s, u))


def _tel(node_id: str, cpu: float, gpus=(), ts: int = 1) -> NodeTelemetry:
    return NodeTelemetry(node_id, ts, cpu, 10.0, 0.0, 0.0, tuple(gpus))


class TestAlerts:
    def test_no_rules(self):
        assert evaluate_alerts(state(), []) == []

    def test_usage_at_least_fires_once_per_user(self):
        s = state(racks=1, nodes_per_rack=2, n_users=2)
        # u0 takes both nodes: usage = 80 + file term
        s = apply_job_event(s, JobEvent.start("j1", "u0", {"r0n0", "r0n1"}, 0, ts=1))
        rule = AlertRule("hot", AlertKind.USAGE_AT_LEAST, 80.0)
        alerts = evaluate_alerts(s, [rule])
        assert alerts == [Alert("hot", "u0", s.state_ts, alerts[0].detail)]

    def test_node_cpu_attributes_to_all_users_on_node(self):
        s = state(racks=1, nodes_per_rack=2, n_users=2)
        s = apply_job_event(s, JobEvent.start("j1", "u0", {"r0n0"}, 1, ts=1))
        s = apply_job_event(s, JobEvent.start("j2", "u1", {"r0n0"}, 1, ts=1))
        s = apply_telemetry(s, _tel("r0n0", cpu=99.0))
        rule = AlertRule("cpu", AlertKind.NODE_CPU_AT_LEAST, 90.0)
        alerts = evaluate_alerts(s, [rule])
        assert [(a.rule_id, a.user_id) for a in alerts] == [("cpu", "u0"), ("cpu", "u1")]

    def test_node_cpu_dedupes_across_hot_nodes(self):
        s = state(racks=1, nodes_per_rack=2, n_users=1)
        s = apply_job_event(s, JobEvent.start("j1", "u0", {"r0n0", "r0n1"}, 1, ts=1))
        s = apply_telemetry(s, _tel("r0n0", cpu=95.0))
        s = apply_telemetry(s, _tel("r0n1", cpu=96.0))
        rule = AlertRule("cpu", AlertKind.NODE_CPU_AT_LEAST, 90.0)
        alerts = evaluate_alerts(s, [rule])
        assert len(alerts) == 1
        assert "r0n0" in alerts[0].detail and "r0n1" in alerts[0].detail

    def test_gpu_all_busy(self):
        s = state(racks=1, nodes_per_rack=2, gpus=2, n_users=1)
        s = apply_job_event(s, JobEvent.start("j1", "u0", {"r0n0"}, 1, ts=1))
        s = apply_telemetry(s, _tel("r0n0", cpu=50.0, gpus=(40.0, 0.0)))
        rule = AlertRule("gpu", AlertKind.GPU_ALL_BUSY)
        assert evaluate_alerts(s, [rule]) == []
        s = apply_telemetry(s, _tel("r0n0", cpu=50.0, gpus=(40.0, 10.0), ts=2))
        alerts = evaluate_alerts(s, [rule])
        assert [(a.rule_id, a.user_id) for a in alerts] == [("gpu", "u0")]

    def test_rule_validation(self):
        with pytest.raises(ValidationError):
            AlertRule("r", AlertKind.USAGE_AT_LEAST, None)
        with pytest.raises(ValidationError):
            AlertRule("r", AlertKind.NODE_CPU_AT_LEAST, 120.0)
        with pytest.raises(ValidationError):
            AlertRule("r", AlertKind.GPU_ALL_BUSY, 50.0)
