"""Scenario validation, execution, determinism, and JSON round-trips."""

import json

import pytest

from pixelsim.errors import ValidationError
from pixelsim.pixel import FBP_NAME
from pixelsim.scenarios import (
    Scenario,
    Step,
    load_scenario,
    run,
    scenario_from_dict,
    scenario_to_dict,
)
from pixelsim.world import DAY_MS, ConsentMode, SiteConfig
from helpers import random_scenario


def simple_scenario(**kwargs) -> Scenario:
    defaults = dict(
        seed=1,
        sites=[SiteConfig(domain="shop.example")],
        browsers=[{"id": "b1"}],
        steps=[
            Step(10, "Visit", {"browser": "b1", "site": "shop.example"}),
            Step(20, "Reload", {"browser": "b1", "site": "shop.example"}),
        ],
    )
    defaults.update(kwargs)
    return Scenario(**defaults)


class TestValidation:
    def test_unknown_action_rejected(self):
        scenario = simple_scenario(steps=[Step(1, "Teleport", {})])
        with pytest.raises(ValidationError):
            scenario.validate()

    def test_ticks_must_strictly_increase(self):
        scenario = simple_scenario(
            steps=[
                Step(10, "Visit", {"browser": "b1", "site": "shop.example"}),
                Step(10, "Visit", {"browser": "b1", "site": "shop.example"}),
            ]
        )
        with pytest.raises(ValidationError) as excinfo:
            scenario.validate()
        assert excinfo.value.step_index == 1

    def test_runtime_errors_carry_step_index(self):
        scenario = simple_scenario(
            steps=[Step(1, "Visit", {"browser": "ghost", "site": "shop.example"})]
        )
        with pytest.raises(ValidationError) as excinfo:
            run(scenario)
        assert excinfo.value.step_index == 0

    def test_platform_click_requires_prior_load(self):
        scenario = simple_scenario(
            steps=[
                Step(1, "CreateAccount", {"browser": "b1", "account": "u1"}),
                Step(2, "PlatformClick", {"account": "u1", "site": "shop.example"}),
            ]
        )
        with pytest.raises(ValidationError):
            run(scenario)


class TestExecution:
    def test_empty_scenario_runs(self):
        result = run(simple_scenario(steps=[]))
        assert result.log == []
        assert result.report.counters["emissions_total"] == 0

    def test_visits_emit_and_ingest(self):
        result = run(simple_scenario())
        assert result.report.counters["emissions_hop0"] == 2
        assert result.report.counters["profiles"] == 1
        assert result.log_steps == [0, 1]

    def test_full_deanonymization_path(self):
        scenario = simple_scenario(
            steps=[
                Step(1 * DAY_MS, "Visit", {"browser": "b1", "site": "shop.example"}),
                Step(2 * DAY_MS, "CreateAccount", {"browser": "b1", "account": "u1"}),
                Step(3 * DAY_MS, "PlatformLoad", {"account": "u1"}),
                Step(
                    3 * DAY_MS + 1,
                    "PlatformClick",
                    {"account": "u1", "site": "shop.example"},
                ),
            ]
        )
        result = run(scenario)
        links = result.graph.resolve()
        assert len(links) == 1
        assert links[0][1] == "u1"
        history = result.graph.account_history("u1")
        assert history[0].timestamp == 1 * DAY_MS

    def test_login_binds_existing_account_to_browser(self):
        scenario = simple_scenario(
            browsers=[{"id": "b1"}, {"id": "b2"}],
            steps=[
                Step(1, "CreateAccount", {"browser": "b1", "account": "u1"}),
                Step(2, "Login", {"browser": "b2", "account": "u1"}),
            ],
        )
        result = run(scenario)
        assert result.world.browser("b2").logged_in == "u1"

    def test_delete_cookie_and_advance_days(self):
        scenario = simple_scenario(
            steps=[
                Step(1, "Visit", {"browser": "b1", "site": "shop.example"}),
                Step(
                    2,
                    "DeleteCookie",
                    {"browser": "b1", "site": "shop.example", "name": FBP_NAME},
                ),
                Step(3, "AdvanceDays", {"days": 2}),
                Step(2 * DAY_MS + 4, "Visit", {"browser": "b1", "site": "shop.example"}),
            ]
        )
        result = run(scenario)
        hop0 = [r.report.fbp for r in result.log if r.hop == 0]
        assert hop0[0] != hop0[1]  # deletion forced a fresh cookie

    def test_incognito_browser_gets_fresh_cookie_each_step(self):
        scenario = simple_scenario(
            browsers=[{"id": "b1", "incognito": True}],
        )
        result = run(scenario)
        values = [r.report.fbp for r in result.log if r.hop == 0]
        assert values[0] != values[1]

    def test_injected_fbclid_recorded_and_visit_fires(self):
        scenario = simple_scenario(
            steps=[
                Step(
                    5,
                    "InjectFbclid",
                    {"browser": "b1", "site": "shop.example", "value": "Injected"},
                )
            ]
        )
        result = run(scenario)
        assert result.world.injected_fbclids == {"Injected"}
        assert result.log[0].report.fbc.endswith(".Injected")

    def test_log_browsers_covers_platform_clicks(self):
        scenario = simple_scenario(
            steps=[
                Step(1, "CreateAccount", {"browser": "b1", "account": "u1"}),
                Step(2, "PlatformLoad", {"account": "u1"}),
                Step(3, "PlatformClick", {"account": "u1", "site": "shop.example"}),
            ]
        )
        result = run(scenario)
        assert result.log_browsers() == ["b1"] * len(result.log)


class TestDeterminism:
    def test_identical_runs_are_identical(self):
        for seed in (0, 17):
            scenario = random_scenario(seed)
            a, b = run(scenario), run(random_scenario(seed))
            assert [r.report for r in a.log] == [r.report for r in b.log]
            assert a.world.snapshot() == b.world.snapshot()
            assert a.graph.dump() == b.graph.dump()

    def test_different_seed_changes_cookie_values(self):
        base = simple_scenario()
        other = simple_scenario(seed=2)
        a, b = run(base), run(other)
        assert a.log[0].report.fbp != b.log[0].report.fbp


class TestScenarioFiles:
    def test_dict_round_trip(self):
        scenario = random_scenario(3)
        data = scenario_to_dict(scenario)
        rebuilt = scenario_from_dict(json.loads(json.dumps(data)))
        assert scenario_to_dict(rebuilt) == data
        assert run(rebuilt).world.snapshot() == run(scenario).world.snapshot()

    def test_load_scenario_file(self, tmp_path):
        scenario = simple_scenario(consent_mode=ConsentMode.REJECT_ALL)
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps(scenario_to_dict(scenario)), encoding="utf-8")
        loaded = load_scenario(path)
        assert loaded.consent_mode is ConsentMode.REJECT_ALL
        assert loaded.steps == scenario.steps
