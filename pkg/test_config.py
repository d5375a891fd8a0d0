import pytest

from config import (
    RunConfig,
    apply_overrides,
    dumps,
    get_value,
    load_config,
    loads,
    save_config,
    to_dict,
)
from errors import ConfigError


def test_defaults():
    cfg = RunConfig()
    assert [cfg.loss.tau1, cfg.loss.tau2, cfg.loss.tau3, cfg.loss.tau4, cfg.meta.tau5] == [0.1] * 5
    assert [cfg.loss.alpha1, cfg.loss.alpha2, cfg.loss.alpha3] == [1.0] * 3
    assert (cfg.optim.momentum, cfg.optim.weight_decay) == (0.9, 5e-4)
    assert cfg.pretrain.schedule.kind == "cosine_with_warmup"
    assert cfg.pretrain.schedule.base_lr == 0.1
    assert (cfg.metatrain.schedule.kind, cfg.metatrain.schedule.step_size, cfg.metatrain.schedule.gamma) == ("step", 40, 0.5)
    assert (cfg.episode.ways, cfg.episode.shots, cfg.episode.queries) == (5, 1, 15)
    assert cfg.metatest.episodes == 2000
    assert cfg.meta.beta == 0.01
    assert cfg.augment.pretrain_views == ["simclr", "simclr"]
    assert cfg.augment.meta_views == ["standard", "simclr"]
    cfg.validate()


def test_five_shot_defaults():
    base = RunConfig()
    five = base.for_shots(5)
    assert (five.meta.beta, five.metatrain.schedule.step_size) == (0.1, 50)
    assert five.episode.shots == five.metatest.shots == 5
    assert (base.meta.beta, base.metatrain.schedule.step_size, base.episode.shots) == (0.01, 40, 1)
    one = five.for_shots(1)
    assert (one.meta.beta, one.metatrain.schedule.step_size) == (0.01, 40)


def test_overrides():
    cfg = apply_overrides(RunConfig(), [
        "loss.tau2=0.5",
        "pretrain.epochs=3",
        "loss.use_global_sup=false",
        "augment.meta_views=[\"simclr\", \"simclr\"]",
        "out_dir=/tmp/elsewhere",
        "loss.alpha1=2",
    ])
    assert cfg.loss.tau2 == 0.5
    assert cfg.pretrain.epochs == 3
    assert cfg.loss.use_global_sup is False
    assert cfg.augment.meta_views == ["simclr", "simclr"]
    assert cfg.out_dir == "/tmp/elsewhere"
    assert cfg.loss.alpha1 == 2.0 and isinstance(cfg.loss.alpha1, float)


@pytest.mark.parametrize("key", ["loss.tau9", "nothing", "loss.tau1.extra", "pretrain"])
def test_unknown_key_is_named(key):
    with pytest.raises(ConfigError) as excinfo:
        apply_overrides(RunConfig(), [f"{key}=1"])
    assert f"'{key}'" in str(excinfo.value)
    assert excinfo.value.exit_code == 2


@pytest.mark.parametrize("override", ["pretrain.epochs=abc", "pretrain.epochs=1.5", "loss.use_ce=maybe",
                                      "loss.tau1=true", "augment.meta_views=simclr", "loss.tau1"])
def test_bad_values(override):
    with pytest.raises(ConfigError):
        apply_overrides(RunConfig(), [override])


def test_text_round_trip():
    cfg = apply_overrides(RunConfig(), ["seed=7", "backbone.stage_channels=[8, 16]", "data.root=some dir"])
    again = loads(dumps(cfg))
    assert to_dict(again) == to_dict(cfg)
    assert get_value(again, "backbone.stage_channels") == [8, 16]


def test_file_round_trip(tmp_path):
    cfg = apply_overrides(RunConfig(), ["meta.beta=0.25"])
    path = str(tmp_path / "run.cfg")
    save_config(cfg, path)
    assert load_config(path).meta.beta == 0.25


def test_comments_and_malformed_lines():
    cfg = loads("# comment\n\nseed = 3\n")
    assert cfg.seed == 3
    with pytest.raises(ConfigError, match="line 2"):
        loads("seed = 3\nnot a pair\n")


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "nope.cfg"))


@pytest.mark.parametrize("override", [
    "loss.tau3=0",
    "meta.tau5=-1",
    "loss.alpha2=-0.5",
    "meta.beta=-1",
    "loss.loss_reduction=\"max\"",
    "pretrain.schedule.kind=\"linear\"",
    "augment.pretrain_views=[\"simclr\"]",
    "episode.ways=0",
    "backbone.input_size=[4, 4]",
    "stage=\"finetune\"",
])
def test_validation(override):
    cfg = apply_overrides(RunConfig(), [override])
    with pytest.raises(ConfigError):
        cfg.validate()


def test_validation_checks_data_files(tmp_path):
    cfg = apply_overrides(RunConfig(), [f"data.train_manifest={tmp_path}/missing.json"])
    cfg.validate()
    with pytest.raises(ConfigError, match="data.train_manifest"):
        cfg.validate(check_files=True)
