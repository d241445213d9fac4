"""Unit tests for ConfigManager."""

import pytest

from core.config_manager import ConfigManager, config_digest
from models.run_config import RunConfig
from utils.constants import CONFIG_KEYS, PRESET_DIR
from utils.errors import ConfigError


@pytest.fixture
def manager():
    """ConfigManager over the shipped presets."""
    return ConfigManager()


class TestParseText:
    """Tests for parsing key = value files."""

    def test_comments_and_blank_lines(self, manager):
        """Test comments and blank lines are skipped."""
        text = "# header\n\nepochs = 3  # short run\nparadigm=separate\n"
        assert manager.parse_text(text) == {"epochs": "3", "paradigm": "separate"}

    def test_last_assignment_wins(self, manager):
        """Test a repeated key keeps its last value."""
        assert manager.parse_text("lr = 0.1\nlr = 0.2\n") == {"lr": "0.2"}

    def test_unknown_key(self, manager):
        """Test unknown keys are named in the error."""
        with pytest.raises(ConfigError) as info:
            manager.parse_text("ang.strength = 2\n")
        assert info.value.key == "ang.strength"
        assert "ang.strength" in str(info.value)

    def test_malformed_line(self, manager):
        """Test a line without '=' is rejected with its line number."""
        with pytest.raises(ConfigError, match=":2:"):
            manager.parse_text("epochs = 1\nepochs 2\n", source="run.cfg")


class TestCoerce:
    """Tests for type coercion."""

    @pytest.mark.parametrize("key,raw,expected", [
        ("epochs", "7", 7),
        ("lr", "1e-3", 1e-3),
        ("ablation.use_ang", "false", False),
        ("eval.pixel", "yes", True),
        ("recon.target", "noised", "noised"),
    ])
    def test_types(self, manager, key, raw, expected):
        """Test each schema type converts."""
        assert manager.coerce(key, raw) == expected

    @pytest.mark.parametrize("key,raw", [("epochs", "two"), ("ablation.use_ffm", "maybe"), ("lr", "")])
    def test_bad_value(self, manager, key, raw):
        """Test unparsable values raise ConfigError for their key."""
        with pytest.raises(ConfigError) as info:
            manager.coerce(key, raw)
        assert info.value.key == key


class TestLoad:
    """Tests for loading configs, presets and overrides."""

    def test_defaults(self, manager):
        """Test no file and no overrides gives the RunConfig defaults."""
        assert manager.load() == RunConfig()

    def test_desk_preset(self, manager):
        """Test the desk preset resolves by name."""
        config = manager.load("desk")
        assert config.image_size == 64
        assert config.num_blocks == 4
        assert config.residual_period == 3
        assert config.run_dir == "runs/desk"
        assert config.lr == 1e-3
        assert config.ang_intensity == 2.0
        assert config.recon_target == "clean"

    def test_paper_preset(self, manager):
        """Test the full-size preset uses 18 blocks with period 3."""
        config = manager.load("paper")
        assert config.num_blocks == 18
        assert config.residual_period == 3
        assert config.dilation == 4

    def test_file_then_overrides(self, manager, tmp_path):
        """Test overrides are applied after the file."""
        path = tmp_path / "run.cfg"
        path.write_text("epochs = 5\nbatch_size = 4\n", encoding="utf-8")
        config = manager.load(path, ["epochs=2", "ablation.use_ang = false"])
        assert config.epochs == 2
        assert config.batch_size == 4
        assert config.use_ang is False
        assert config.effective_intensity == 0.0

    def test_schema_violation(self, manager):
        """Test values outside the schema are rejected."""
        with pytest.raises(ConfigError) as info:
            manager.load(overrides=["image_size=40"])
        assert info.value.key == "image_size"
        with pytest.raises(ConfigError):
            manager.load(overrides=["paradigm=joint"])

    def test_unknown_override(self, manager):
        """Test an unknown override key fails before anything runs."""
        with pytest.raises(ConfigError, match="unknown config key: colour"):
            manager.load(overrides=["colour=red"])

    def test_missing_file(self, manager, tmp_path):
        """Test an unreadable config raises ConfigError."""
        with pytest.raises(ConfigError):
            manager.load(tmp_path / "nope.cfg")

    def test_validate_config(self, manager):
        """Test validate_config collects messages instead of raising."""
        data = RunConfig().to_dict()
        assert manager.validate_config(data) == (True, [])
        data["batch_size"] = 0
        is_valid, errors = manager.validate_config(data)
        assert not is_valid
        assert errors[0].startswith("batch_size:")


class TestSaveAndDigest:
    """Tests for dumps, save and digest."""

    def test_dumps_canonical(self, manager):
        """Test every key appears once, in CONFIG_KEYS order."""
        lines = manager.dumps(RunConfig()).splitlines()
        assert [line.split(" = ")[0] for line in lines] == list(CONFIG_KEYS)
        assert "ablation.use_ang = true" in lines

    def test_save_reload(self, manager, tmp_path):
        """Test a saved config loads back equal and leaves no temp file."""
        config = RunConfig(paradigm="separate", lr=3e-4, use_ffm=False)
        path = manager.save(config, tmp_path / "out" / "run.cfg")
        assert manager.load(path) == config
        assert not (tmp_path / "out" / "run.tmp").exists()

    def test_digest(self, manager):
        """Test the digest is stable and sensitive to any value."""
        config = RunConfig()
        assert config_digest(config) == manager.digest(RunConfig())
        assert manager.digest(config) != manager.digest(RunConfig(ang_seed=1))


class TestPresetFiles:
    """Tests for the shipped presets."""

    @pytest.mark.parametrize("name", ["desk.cfg", "paper.cfg"])
    def test_presets_parse(self, manager, name):
        """Test every preset line names a known key."""
        raw = manager.parse_text((PRESET_DIR / name).read_text(encoding="utf-8"))
        assert set(raw) <= set(CONFIG_KEYS)
