import pytest

from rachforge.config import SCENARIOS, ConfigError, RunConfig, load_config
from rachforge.experiment import make_controller
from rachforge.rach import ActionSet


def test_defaults_match_reference_settings():
    cfg = load_config()
    assert (cfg.traffic.alpha, cfg.traffic.beta, cfg.traffic.frames, cfg.traffic.devices) == \
        (3.0, 4.0, 20, 400)
    assert cfg.rach_core.preambles == 54 and cfg.rach_core.max_attempts == 10
    assert cfg.rach_core.frame_ms == 640
    assert (cfg.agents.gamma_acb, cfg.agents.gamma_bo_dq) == (0.1, 0.9)
    assert cfg.agents.batch_size == 32 and cfg.agents.memory_size == 10000
    assert cfg.neural.learning_rate == 1e-4 and cfg.neural.gru_units == 128
    assert cfg.fixed_action().bo == 2 and cfg.fixed_action().acb == 0.5
    assert cfg.energy().listen_energy == pytest.approx(0.65 * 0.09)


def test_ini_then_overrides(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text("[traffic]\ndevices = 600\n\n[agents]\nwindow = 7\n\n[cli]\nscenario = mle\n")
    cfg = load_config(path, ["traffic.devices=200", "predictor.raw_receptions=yes"])
    assert cfg.traffic.devices == 200
    assert cfg.agents.window == 7
    assert cfg.cli.scenario == "mle"
    assert cfg.predictor.raw_receptions is True


def test_ini_roundtrip(tmp_path):
    cfg = load_config(None, ["orchestrator.priority=0.25", "neural.gru_layers=1"])
    path = tmp_path / "snap.ini"
    with open(path, "w") as fh:
        cfg.to_ini().write(fh)
    assert load_config(path).to_dict() == cfg.to_dict()


def test_priority_builds_weights():
    w = load_config(None, ["orchestrator.priority=0.75"]).weights()
    assert (w.x_s, w.x_d, w.x_e) == (1.0, 0.75, 0.25)
    w = load_config().weights()
    assert (w.x_s, w.x_d, w.x_e) == (1.0, 0.0, 0.0)


@pytest.mark.parametrize("override", [
    "cli.scenario=warp", "traffic.devices=many", "nosuch.key=1", "traffic.nosuch=1", "novalue",
    "traffic.alpha=-1", "agents.gamma_acb=1.0", "agents.epsilon_floor=0.001",
    "neural.optimizer=rmsprop", "predictor.label_source=oracle", "cli.trails=0",
    "orchestrator.priority=2", "schemes.fixed_bo=12", "predictor.batch_size=20000",
    "predictor.raw_receptions=maybe",
])
def test_bad_values_raise_config_error(override):
    with pytest.raises(ConfigError):
        load_config(None, [override])


def test_malformed_ini(tmp_path):
    path = tmp_path / "bad.ini"
    path.write_text("devices = 3\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_missing_file_is_io_error(tmp_path):
    with pytest.raises(OSError):
        load_config(tmp_path / "absent.ini")


def test_every_scenario_validates():
    for s in SCENARIOS:
        assert load_config(None, [f"cli.scenario={s}"]).cli.scenario == s


def test_set_requires_dotted_key():
    with pytest.raises(ConfigError):
        RunConfig().set("devices", "3")


@pytest.mark.parametrize("scenario, expected", [
    ("acb-fix", ActionSet(0.5, 0, 1, 2)),
    ("bo-fix", ActionSet(1.0, 2, 1, 2)),
    ("dq-fix", ActionSet(1.0, 0, 2, 2)),
])
def test_single_scheme_fixed_scenarios(scenario, expected):
    cfg = load_config(overrides=[f"cli.scenario={scenario}"])
    assert make_controller(cfg, scenario)(None, None) == expected
