"""
Tests for the event-driven intersection simulator
"""

from dataclasses import replace

import pytest

from ..core.controller import GREEN_ROAD_1, GREEN_ROAD_2
from ..core.dynamics import classify_region
from ..core.exceptions import EventSkippedError
from ..core.models import (
    DEFAULT_PARAMETERS,
    PARAMETER_NAMES,
    ArrivalProcessSpec,
    EventKind,
    EventRecord,
    FlowRates,
    ParameterVector,
    PendingEvent,
    Policy,
    QueueLevel,
    Region,
    SimulationMode,
)
from ..services.simulator import (
    EventTrace,
    IntersectionSimulator,
    advance,
    apply_event,
    cost_of_trace,
    mean_wait_of_trace,
    initial_state,
    next_event,
    run_sample_path,
)

EMPTY, LOW, HIGH = QueueLevel.EMPTY, QueueLevel.LOW, QueueLevel.HIGH


def _params(**changes) -> ParameterVector:
    values = dict(zip(PARAMETER_NAMES, DEFAULT_PARAMETERS))
    values.update(changes)
    return ParameterVector(**values)


def _record(index, tau, x, kind=EventKind.X_UP_ZERO):
    return EventRecord(
        index=index, tau=tau, kind=kind, flow=1, x=x, z=(0.0, 0.0), w=(0.0, 0.0),
        u=GREEN_ROAD_1, region=Region.X0, p=(0, 0), region_before=Region.X0, p_before=(0, 0),
        alpha=(0.0, 0.0, 0.0, 0.0), h=1.2,
    )


def _trace(records, mode, t_end=100.0):
    return EventTrace(
        records=records, t0=0.0, t_end=t_end, mode=mode, policy=Policy.QUASI_DYNAMIC,
        params=_params(), weights=(1.0, 1.0, 1.0, 1.0), seed=0,
    )


def _kinds(trace):
    return [(r.kind, r.flow) for r in trace.records]


class TestAdvance:
    """Time-driven integration between events"""

    def test_green_queue_drains(self, default_params):
        state = replace(initial_state(default_params), x=(2.0, 0.0, 0.0, 0.0), levels=(LOW, EMPTY, EMPTY, EMPTY))
        rates = FlowRates(alpha=(0.2, 0.0, 0.0, 0.0), h=1.2)
        after = advance(state, 1.0, rates)
        assert after.x[0] == pytest.approx(1.0)
        assert after.t == 1.0

    def test_empty_red_pedestrian_queue_does_not_wait(self, default_params):
        state = initial_state(default_params)
        after = advance(state, 5.0, FlowRates(alpha=(0.0,) * 4, h=1.2))
        assert after.w == (0.0, 0.0)

    def test_only_green_clock_runs(self, default_params):
        after = advance(initial_state(default_params), 3.0, FlowRates(alpha=(0.0,) * 4, h=1.2))
        assert after.z == (3.0, 0.0)

    def test_discrete_queues_hold(self, default_params):
        state = replace(initial_state(default_params), x=(2.0, 1.0, 0.0, 0.0), levels=(LOW, LOW, EMPTY, EMPTY))
        after = advance(state, 2.0, FlowRates(alpha=(0.0,) * 4, h=1.2), mode=SimulationMode.DISCRETE)
        assert after.x == (2.0, 1.0, 0.0, 0.0)

    def test_stepping_over_an_event_raises(self, default_params):
        state = replace(initial_state(default_params), x=(1.0, 0.0, 0.0, 0.0), levels=(LOW, EMPTY, EMPTY, EMPTY),
                        z=(10.0, 0.0), z_min_reached=(True, False))
        rates = FlowRates(alpha=(0.2, 0.0, 0.0, 0.0), h=1.2)
        with pytest.raises(EventSkippedError):
            advance(state, 2.0, rates, default_params)

    def test_crossing_slack_from_zero_tolerance(self, default_params):
        state = replace(initial_state(default_params), x=(0.0, 8.0, 0.0, 0.0), levels=(EMPTY, LOW, EMPTY, EMPTY))
        rates = FlowRates(alpha=(0.0, 1e-9, 0.0, 0.0), h=1.2)
        # x2 ends 4e-9 above s2 = 8, inside the default slack of 8e-9
        after = advance(state, 4.0, rates, default_params)
        assert after.x[1] == pytest.approx(8.0 + 4e-9, abs=1e-12)
        with pytest.raises(EventSkippedError):
            advance(state, 4.0, rates, default_params, zero_tolerance=1e-10)

    def test_negative_step_rejected(self, default_params):
        with pytest.raises(EventSkippedError):
            advance(initial_state(default_params), -1.0, FlowRates(alpha=(0.0,) * 4, h=1.2))


class TestNextEvent:
    """Earliest hitting time and simultaneous event sets"""

    def test_queue_empties_first(self, default_params):
        state = replace(initial_state(default_params), x=(5.0, 0.0, 0.0, 0.0), levels=(LOW, EMPTY, EMPTY, EMPTY),
                        z=(10.0, 0.0), z_min_reached=(True, False))
        rates = FlowRates(alpha=(0.2, 0.0, 0.0, 0.0), h=1.2)
        dt, events = next_event(state, rates, default_params)
        assert dt == pytest.approx(5.0)
        assert events == (PendingEvent(EventKind.X_DOWN_ZERO, 1),)

    def test_min_green_clock(self, default_params):
        state = replace(initial_state(default_params), z=(9.0, 0.0))
        dt, events = next_event(state, FlowRates(alpha=(0.0,) * 4, h=1.2), default_params)
        assert dt == pytest.approx(1.0)
        assert events == (PendingEvent(EventKind.Z_MIN, 1),)

    def test_simultaneous_events_in_sub_order(self, default_params):
        state = replace(initial_state(default_params), x=(1.0, 0.0, 0.0, 0.0), levels=(LOW, EMPTY, EMPTY, EMPTY),
                        z=(9.0, 0.0))
        rates = FlowRates(alpha=(0.2, 0.0, 0.0, 0.0), h=1.2)
        dt, events = next_event(state, rates, default_params)
        assert dt == pytest.approx(1.0)
        assert events == (PendingEvent(EventKind.X_DOWN_ZERO, 1), PendingEvent(EventKind.Z_MIN, 1))

    def test_red_inflow_leaves_zero_immediately(self, default_params):
        state = initial_state(default_params)
        rates = FlowRates(alpha=(0.0, 0.2, 0.0, 0.0), h=1.2)
        dt, events = next_event(state, rates, default_params, clock_events=False)
        assert dt == 0.0
        assert events == (PendingEvent(EventKind.X_UP_ZERO, 2),)

    def test_nothing_due(self, default_params):
        state = initial_state(default_params)
        dt, events = next_event(state, FlowRates(alpha=(0.0,) * 4, h=1.2), default_params, clock_events=False)
        assert events == ()


class TestApplyEvent:
    """Resolution of one event instant"""

    def test_min_green_switch_resets_clocks_and_waits(self, default_params):
        state = replace(
            initial_state(default_params),
            x=(3.0, 9.0, 2.0, 0.0),
            levels=(LOW, HIGH, LOW, EMPTY),
            z=(10.0, 0.0),
            w=(4.0, 0.0),
            region=Region.X4,
        )
        rates = FlowRates(alpha=(0.2, 0.2, 0.0, 0.0), h=1.2)
        outcome = apply_event(state, (PendingEvent(EventKind.Z_MIN, 1),), default_params, rates, base_index=5)

        kinds = [(r.kind, r.flow) for r in outcome.records]
        assert kinds == [(EventKind.Z_MIN, 1), (EventKind.G2R, 1)]
        assert outcome.records[1].cause == 5
        assert outcome.state.u == GREEN_ROAD_2
        assert outcome.state.z == (0.0, 0.0)
        assert outcome.state.w[0] == 0.0
        assert outcome.switches == 1

    def test_pedestrian_threshold_triggers_switch(self, default_params):
        state = replace(
            initial_state(default_params),
            x=(0.0, 0.0, 5.0, 0.0),
            levels=(EMPTY, EMPTY, LOW, EMPTY),
            z=(15.0, 0.0),
            w=(8.0, 0.0),
            z_min_reached=(True, False),
        )
        rates = FlowRates(alpha=(0.0, 0.0, 0.1, 0.0), h=1.2)
        outcome = apply_event(state, (PendingEvent(EventKind.X_UP_THRESHOLD, 3),), default_params, rates)

        kinds = [(r.kind, r.flow) for r in outcome.records]
        assert kinds == [(EventKind.X_UP_THRESHOLD, 3), (EventKind.P_UP, 3), (EventKind.G2R, 1)]
        assert outcome.records[1].cause == outcome.records[0].index
        assert outcome.records[2].cause == outcome.records[1].index
        assert outcome.state.p == (1, 0)
        assert outcome.state.u == GREEN_ROAD_2

    def test_switch_cap_suppresses_further_requests(self, default_params):
        state = replace(initial_state(default_params), x=(0.0, 3.0, 0.0, 0.0), levels=(EMPTY, LOW, EMPTY, EMPTY),
                        region=Region.X2)
        rates = FlowRates(alpha=(0.0, 0.2, 0.0, 0.0), h=1.2)
        outcome = apply_event(state, (PendingEvent(EventKind.WINDOW_START),), default_params, rates,
                              max_switches=0)
        assert outcome.switches == 0
        assert outcome.suppressed == 1
        assert outcome.state.u == GREEN_ROAD_1


class TestSamplePath:
    """Whole-path behaviour"""

    def test_zero_traffic(self, default_params, constant_fluid):
        trace = run_sample_path(constant_fluid((0.0, 0.0, 0.0, 0.0)), default_params, 100.0)
        assert _kinds(trace) == [
            (EventKind.WINDOW_START, 0),
            (EventKind.Z_MIN, 1),
            (EventKind.Z_MAX, 1),
            (EventKind.HORIZON_END, 0),
        ]
        assert trace.cost == 0.0
        assert trace.diagnostics.switches == 0
        assert [r.tau for r in trace.records] == [0.0, 10.0, 20.0, 100.0]

    def test_zero_traffic_discrete(self, default_params, discrete_spec):
        spec = discrete_spec.model_copy(update={"mean_rates": (0.0, 0.0, 0.0, 0.0)})
        trace = run_sample_path(spec, default_params, 100.0)
        assert trace.cost == 0.0
        assert trace.diagnostics.switches == 0

    def test_red_road_queue_takes_green(self, default_params, constant_fluid):
        trace = run_sample_path(constant_fluid((0.0, 0.2, 0.0, 0.0)), default_params, 100.0)
        assert _kinds(trace) == [
            (EventKind.WINDOW_START, 0),
            (EventKind.X_UP_ZERO, 2),
            (EventKind.G2R, 1),
            (EventKind.X_DOWN_ZERO, 2),
            (EventKind.Z_MIN, 2),
            (EventKind.Z_MAX, 2),
            (EventKind.HORIZON_END, 0),
        ]
        switch = trace.records[2]
        assert switch.cause == 1
        assert switch.u == GREEN_ROAD_2
        assert trace.records[4].tau == pytest.approx(30.0)
        assert trace.records[5].tau == pytest.approx(50.0)
        assert trace.cost == pytest.approx(0.0)

    def test_pedestrian_wait_threshold_path(self, constant_fluid):
        params = _params(theta3=12.0)
        trace = run_sample_path(constant_fluid((0.0, 0.0, 0.1, 0.0)), params, 100.0)
        assert _kinds(trace) == [
            (EventKind.WINDOW_START, 0),
            (EventKind.X_UP_ZERO, 3),
            (EventKind.Z_MIN, 1),
            (EventKind.W_THRESHOLD, 3),
            (EventKind.P_UP, 3),
            (EventKind.G2R, 1),
            (EventKind.P_DOWN, 3),
            (EventKind.X_DOWN_ZERO, 3),
            (EventKind.Z_MIN, 2),
            (EventKind.Z_MAX, 2),
            (EventKind.HORIZON_END, 0),
        ]
        drained = trace.records[7]
        assert drained.tau == pytest.approx(12.0 + 1.2 / 1.1)
        # triangle areas of the growth and drain phases
        expected = (0.5 * 0.1 * 12.0 ** 2 + 0.5 * 1.2 ** 2 / 1.1) / 100.0
        assert trace.cost == pytest.approx(expected, rel=1e-9)
        assert trace.nep_intervals(3) == [(0.0, pytest.approx(12.0 + 1.2 / 1.1))]

    def test_same_seed_same_trace(self, default_params, discrete_spec):
        first = run_sample_path(discrete_spec, default_params, 300.0)
        second = run_sample_path(discrete_spec, default_params, 300.0)
        assert first.records == second.records
        assert first.cost == second.cost

    def test_different_seed_different_trace(self, default_params, discrete_spec):
        first = run_sample_path(discrete_spec, default_params, 300.0)
        second = run_sample_path(discrete_spec.with_seed(12), default_params, 300.0)
        assert first.records != second.records

    @pytest.mark.parametrize("spec_fixture", ["discrete_spec", "fluid_spec"])
    def test_path_invariants(self, spec_fixture, default_params, request):
        spec = request.getfixturevalue(spec_fixture)
        trace = run_sample_path(spec, default_params, 500.0)
        records = trace.records
        assert records[0].kind is EventKind.WINDOW_START
        assert records[-1].kind is EventKind.HORIZON_END
        assert records[-1].tau == 500.0
        for a, b in zip(records, records[1:]):
            assert b.tau >= a.tau
            assert b.index == a.index + 1
        for r in records:
            assert r.u in (GREEN_ROAD_1, GREEN_ROAD_2)
            assert min(r.x) >= 0.0
            assert r.z[0] * r.z[1] == 0.0
            assert r.w[0] * r.w[1] == 0.0
            if r.kind is EventKind.P_DOWN:
                assert r.u[r.flow - 1] == 1
            if r.cause is not None:
                assert r.cause < r.index
            if spec.mode is SimulationMode.DISCRETE:
                assert r.region == classify_region(r.x[0], r.x[1], default_params.s1, default_params.s2)
        assert trace.cost >= 0.0

    def test_baseline_pedestrians_halt_vehicles(self, default_params, discrete_spec):
        trace = run_sample_path(discrete_spec, default_params, 300.0, policy=Policy.BASELINE)
        records = trace.records
        for a, b in zip(records, records[1:]):
            assert a.u[2] == 1 and a.u[3] == 1
            if b.tau > a.tau:
                assert a.u[0] == (0 if a.x[2] > 0 else 1)
                assert a.u[1] == (0 if a.x[3] > 0 else 1)
        assert not any(r.kind in (EventKind.Z_MIN, EventKind.Z_MAX, EventKind.W_THRESHOLD) for r in records)

    def test_baseline_fluid_runs(self, default_params, fluid_spec):
        trace = run_sample_path(fluid_spec, default_params, 300.0, policy=Policy.BASELINE)
        assert trace.records[-1].kind is EventKind.HORIZON_END
        assert trace.cost >= 0.0

    def test_non_positive_horizon_rejected(self, default_params, discrete_spec):
        with pytest.raises(ValueError):
            run_sample_path(discrete_spec, default_params, 0.0)


class TestIntersectionSimulator:
    """Continuing one path across windows"""

    def test_windows_continue_the_path(self, default_params, discrete_spec):
        simulator = IntersectionSimulator(discrete_spec, default_params)
        first = simulator.run_until(100.0)
        second = simulator.run_until(200.0, _params(theta1_min=12.0))
        assert first.t_end == 100.0
        assert second.t0 == 100.0
        assert second.records[0].kind is EventKind.WINDOW_START
        assert second.records[0].x == first.records[-1].x
        assert second.params.theta1_min == 12.0

    def test_going_back_in_time_rejected(self, default_params, discrete_spec):
        simulator = IntersectionSimulator(discrete_spec, default_params)
        simulator.run_until(50.0)
        with pytest.raises(ValueError):
            simulator.run_until(10.0)


class TestCostOfTrace:
    """Time-averaged weighted queue content"""

    def test_rectangle(self):
        records = [
            _record(0, 0.0, (0.0, 0.0, 0.0, 0.0)),
            _record(1, 10.0, (2.0, 0.0, 0.0, 0.0)),
            _record(2, 20.0, (0.0, 0.0, 0.0, 0.0)),
            _record(3, 100.0, (0.0, 0.0, 0.0, 0.0)),
        ]
        assert cost_of_trace(_trace(records, SimulationMode.DISCRETE)) == pytest.approx(0.2)

    def test_triangle(self):
        records = [
            _record(0, 0.0, (0.0, 0.0, 0.0, 0.0)),
            _record(1, 5.0, (5.0, 0.0, 0.0, 0.0)),
            _record(2, 10.0, (0.0, 0.0, 0.0, 0.0)),
            _record(3, 100.0, (0.0, 0.0, 0.0, 0.0)),
        ]
        assert cost_of_trace(_trace(records, SimulationMode.FLUID)) == pytest.approx(0.25)

    def test_weights(self):
        records = [
            _record(0, 0.0, (0.0, 0.0, 0.0, 0.0)),
            _record(1, 10.0, (2.0, 0.0, 0.0, 0.0)),
            _record(2, 20.0, (0.0, 0.0, 0.0, 0.0)),
            _record(3, 100.0, (0.0, 0.0, 0.0, 0.0)),
        ]
        trace = _trace(records, SimulationMode.DISCRETE)
        assert cost_of_trace(trace, weights=(3.0, 1.0, 1.0, 1.0)) == pytest.approx(0.6)
        assert cost_of_trace(trace, weights=(0.0, 1.0, 1.0, 1.0)) == 0.0


class TestApproachTime:
    """Discrete vehicles need the detection-to-stop-line travel time"""

    def test_no_departure_before_travel_time(self, default_params, discrete_spec):
        spec = discrete_spec.model_copy(update={"approach_time": 14.4})
        trace = run_sample_path(spec, default_params, 500.0)
        for flow in (1, 2):
            arrived = [r.tau for r in trace.records if r.kind is EventKind.ARRIVAL and r.flow == flow]
            departed = [r.tau for r in trace.records if r.kind is EventKind.DEPARTURE and r.flow == flow]
            assert departed
            # no pass-through, so every detected vehicle queues and leaves in order
            for t_in, t_out in zip(arrived, departed):
                assert t_out >= t_in + 14.4 - 1e-9

    def test_detected_vehicles_count_at_once(self, default_params, discrete_spec):
        spec = discrete_spec.model_copy(update={"approach_time": 14.4})
        trace = run_sample_path(spec, default_params, 300.0)
        first = next(i for i, r in enumerate(trace.records) if r.kind is EventKind.ARRIVAL and r.flow == 1)
        before = trace.records[first - 1].x[0]
        assert trace.records[first].x[0] == before + 1

    def test_travel_time_raises_cost(self, default_params, discrete_spec):
        direct = run_sample_path(discrete_spec, default_params, 500.0)
        delayed = run_sample_path(discrete_spec.model_copy(update={"approach_time": 14.4}), default_params, 500.0)
        assert delayed.cost > direct.cost

    def test_fluid_ignores_travel_time(self, default_params, fluid_spec):
        plain = run_sample_path(fluid_spec, default_params, 200.0)
        delayed = run_sample_path(fluid_spec.model_copy(update={"approach_time": 14.4}), default_params, 200.0)
        assert plain.records == delayed.records


class TestMeanWait:
    """Mean queueing time per arrival"""

    def test_discrete_rectangle(self):
        records = [
            _record(0, 0.0, (0.0, 0.0, 0.0, 0.0)),
            _record(1, 10.0, (2.0, 0.0, 0.0, 0.0)),
            _record(2, 20.0, (0.0, 0.0, 0.0, 0.0)),
            _record(3, 100.0, (0.0, 0.0, 0.0, 0.0)),
        ]
        trace = replace(_trace(records, SimulationMode.DISCRETE), arrivals=((10.0, 10.0), (), (), ()))
        assert mean_wait_of_trace(trace) == pytest.approx(10.0)

    def test_arrivals_outside_the_trace_ignored(self):
        records = [
            _record(0, 0.0, (0.0, 0.0, 0.0, 0.0)),
            _record(1, 10.0, (2.0, 0.0, 0.0, 0.0)),
            _record(2, 20.0, (0.0, 0.0, 0.0, 0.0)),
            _record(3, 100.0, (0.0, 0.0, 0.0, 0.0)),
        ]
        trace = replace(_trace(records, SimulationMode.DISCRETE), arrivals=((-5.0, 10.0, 10.0, 100.0), (), (), ()))
        assert mean_wait_of_trace(trace) == pytest.approx(10.0)

    def test_fluid_triangle(self):
        records = [
            replace(_record(0, 0.0, (0.0, 0.0, 0.0, 0.0)), alpha=(1.0, 0.0, 0.0, 0.0)),
            _record(1, 5.0, (5.0, 0.0, 0.0, 0.0)),
            _record(2, 10.0, (0.0, 0.0, 0.0, 0.0)),
            _record(3, 100.0, (0.0, 0.0, 0.0, 0.0)),
        ]
        assert mean_wait_of_trace(_trace(records, SimulationMode.FLUID)) == pytest.approx(5.0)

    def test_no_arrivals(self):
        records = [_record(0, 0.0, (0.0, 0.0, 0.0, 0.0)), _record(1, 100.0, (0.0, 0.0, 0.0, 0.0))]
        assert mean_wait_of_trace(_trace(records, SimulationMode.DISCRETE)) == 0.0

    @pytest.mark.slow
    def test_reference_load_wait_level(self, default_params):
        """[5, 5, 20, 20] with 14.4 s travel time, 20 paths of 1000 s"""
        spec = ArrivalProcessSpec.from_interarrival(
            [5, 5, 20, 20], mode=SimulationMode.DISCRETE, seed=2024
        ).model_copy(update={"approach_time": 14.4})
        waits = [
            mean_wait_of_trace(run_sample_path(spec.with_seed(2024 + r), default_params, 1000.0))
            for r in range(20)
        ]
        assert 11.4 <= sum(waits) / len(waits) <= 26.7
