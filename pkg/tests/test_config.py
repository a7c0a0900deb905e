import pytest

from execq.config import SCHEMA, ConfigError, RunConfig, load_config


def test_defaults():
    cfg = RunConfig()
    assert cfg["env.q0"] == 20 and cfg["env.periods"] == 5
    assert cfg["env.seconds_per_period"] == 720 and cfg["env.penalty_a"] == 0.01
    assert cfg["agent.gamma"] == 0.99 and cfg["agent.rho"] == 15
    assert cfg["replay.capacity"] == 10_000
    assert cfg["features"] == "TIP"
    cfg.validate()


def test_file_and_overrides(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("# comment\nenv.q0 = 12\n\nfeatures = tipqv  # trailing\ndata.hours = 9, 10\n")
    cfg = load_config(p, ["env.q0=14", "env.strict_terminal=yes"])
    assert cfg["env.q0"] == 14
    assert cfg["features"] == "TIPQV"
    assert cfg["data.hours"] == (9, 10)
    assert cfg["env.strict_terminal"] is True


@pytest.mark.parametrize("line", ["env.q0 = ten", "bogus.key = 1", "no equals sign"])
def test_bad_lines_report_location(tmp_path, line):
    p = tmp_path / "bad.cfg"
    p.write_text("seed = 1\n" + line + "\n")
    with pytest.raises(ConfigError, match=r"bad.cfg:2"):
        load_config(p)


def test_missing_file():
    with pytest.raises(ConfigError):
        load_config("/nonexistent/run.cfg")


@pytest.mark.parametrize("override", ["agent.gamma=1.5", "nn.lr=0", "replay.capacity=1",
                                      "data.train_ratio=1", "synth.model=garch",
                                      "env.periods=0", "data.hours=25"])
def test_validation_rejects(override):
    with pytest.raises(ConfigError):
        load_config(None, [override]).validate()


def test_dumps_round_trip(tmp_path):
    cfg = load_config(None, ["agent.episodes=7", "synth.pbar=101.5", "data.shuffle=true"])
    p = tmp_path / "snap.cfg"
    p.write_text(cfg.dumps())
    again = load_config(p)
    assert again.values == cfg.values
    assert len(cfg.dumps().splitlines()) == len(SCHEMA)


def test_typed_views():
    cfg = load_config(None, ["seed=9", "features=ti", "nn.hidden_layers=2", "nn.hidden_units=5"])
    assert cfg.agent().seed == 9 and cfg.agent().feature_set == "TI"
    assert cfg.net().hidden == (5, 5)
    assert cfg.env().q0 == 20
