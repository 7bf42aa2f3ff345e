import pytest

from breath_utils.config import (
    MODEL_NAMES,
    RunConfig,
    load_run_config,
    normalize_key,
    overrides_from_args,
    parse_config_file,
)
from breath_utils.errors import ConfigError


def test_defaults():
    config = RunConfig()
    assert config.ranges == ("R2",)
    assert config.models == MODEL_NAMES
    assert config.folds == 10
    assert not config.whole_spectrum
    assert config.filter_params().sg_window == 7


def test_file_then_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "# whole-spectrum run\n"
        "ranges = R1,R2,R3,R4\n"
        "sg.window = 9   # wider smoothing\n"
        "filtering = off\n"
        "\n"
        "models = rf, lr\n"
    )
    config = load_run_config(path, {"sg_window": 11, "svm.gamma": "0.5"})
    assert config.whole_spectrum
    assert config.sg_window == 11
    assert not config.filtering
    assert config.models == ("rf", "lr")
    assert config.svm_gamma == 0.5


@pytest.mark.parametrize("key", ["sg.window", "sg_window", "sg-window", "--sg.window"])
def test_key_spellings(key):
    assert normalize_key(key) == "sg.window"


def test_unknown_key_is_rejected(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("sg.windw = 9\n")
    with pytest.raises(ConfigError):
        parse_config_file(path)


def test_line_without_equals_names_the_line(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("folds = 5\nbogus\n")
    with pytest.raises(ConfigError, match=":2:"):
        parse_config_file(path)


@pytest.mark.parametrize("overrides", [
    {"ranges": "R1,R2"},
    {"mode": "triple"},
    {"scaler": "minmax"},
    {"models": "rf,xgb"},
    {"folds": 1},
    {"sg.window": 8},
    {"sg.polyorder": 7},
    {"hp1": 0.01, "hp2": 0.001},
    {"plateau_q": 1.5},
    {"filtering": "maybe"},
    {"svm.gamma": "wide"},
])
def test_invalid_values(overrides):
    with pytest.raises(ConfigError):
        load_run_config(overrides=overrides)


def test_cli_override_tokens():
    overrides = overrides_from_args(["--sg.window", "9", "--mode=multiple", "--surf", "on"])
    assert overrides == {"sg.window": "9", "mode": "multiple", "surf": "on"}
    config = load_run_config(overrides=overrides)
    assert config.mode == "multiple"
    assert config.surf is True


def test_dangling_override_is_an_error():
    with pytest.raises(ConfigError):
        overrides_from_args(["--folds"])


def test_snapshot_uses_file_keys():
    snapshot = RunConfig(seed=3).to_dict()
    assert snapshot["seed"] == 3
    assert snapshot["sg.window"] == 7
    assert snapshot["ranges"] == ["R2"]
