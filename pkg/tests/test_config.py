import pytest

from meshqs import config
from meshqs.errors import ConfigurationError


def test_defaults_roundtrip(tmp_path):
    cfg = config.RunConfig()
    (tmp_path / "c.yaml").write_text(cfg.dumps())
    assert config.load(tmp_path / "c.yaml").dumps() == cfg.dumps()


def test_overrides():
    cfg = config.apply_overrides(config.RunConfig(), ["seed=4", "train.lr=0.01", "model.mode=vanilla"])
    assert cfg.seed == 4 and cfg.train.lr == 0.01 and cfg.model["mode"] == "vanilla"
    assert cfg.model_config(300).mode == "vanilla"


@pytest.mark.parametrize(
    "data",
    [{"version": 2}, {"bogus": 1}, {"train": {"lr2": 1}}, {"model": {"mode": "hybrid"}}, {"model": {"depth": 2}}, {"ingest": 3}],
)
def test_rejects(data):
    with pytest.raises(ConfigurationError):
        config.from_dict(data)


def test_bad_override():
    with pytest.raises(ConfigurationError):
        config.apply_overrides(config.RunConfig(), ["train"])
