import json

import pytest

from gsba.config import ExperimentConfig, parse_fraction


def test_parse_fraction_forms():
    assert parse_fraction("8/255") == 8 / 255
    assert parse_fraction("0.1") == 0.1
    assert parse_fraction(0.25) == 0.25
    assert parse_fraction(1) == 1.0
    with pytest.raises(ValueError):
        parse_fraction("eight/255")


def test_defaults_match_protocol():
    cfg = ExperimentConfig()
    assert cfg.budget == 1_000_000
    assert cfg.delta == pytest.approx(8 / 255)
    assert cfg.eval_n == 1000
    assert (cfg.alpha1, cfg.alpha2, cfg.alpha3) == (1.0, 1.0, 1.0)
    assert cfg.oracle_mode == "probability"


def test_unknown_keys_rejected():
    with pytest.raises(ValueError, match="unknown config keys"):
        ExperimentConfig.from_mapping({"dataset": "digits", "turbo": True})


def test_flag_overrides_win(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"dataset": "digits", "budget": 5000, "delta": "8/255"}))
    cfg = ExperimentConfig.load(path, overrides={"budget": 777, "delta": None})
    assert cfg.budget == 777  # flag wins
    assert cfg.dataset == "digits"
    assert cfg.delta == pytest.approx(8 / 255)  # None override ignored


def test_validation_rejects_bad_values():
    with pytest.raises(ValueError):
        ExperimentConfig(dataset="imagenet")
    with pytest.raises(ValueError):
        ExperimentConfig(arch="transformer-xxl")
    with pytest.raises(ValueError):
        ExperimentConfig(setting="semi-targeted")
    with pytest.raises(ValueError):
        ExperimentConfig(delta=0)
    with pytest.raises(ValueError):
        ExperimentConfig(alpha2=-1)
    with pytest.raises(ValueError):
        ExperimentConfig(restarts=0)
    with pytest.raises(ValueError):
        ExperimentConfig(fractions=[0.5, 1.5])
    with pytest.raises(ValueError):
        ExperimentConfig(eval_n=0)


def test_delta_fraction_literal():
    cfg = ExperimentConfig(delta="8/255")
    assert cfg.delta == 8 / 255


def test_substitute_defaults_per_dataset():
    assert ExperimentConfig(dataset="digits").substitute() == "small-cnn"
    assert ExperimentConfig(dataset="cifar10").substitute() == "vgg13"
    assert ExperimentConfig(dataset="cifar100", arch="resnet50").substitute() == "resnet18"


def test_nested_params_constructed():
    cfg = ExperimentConfig(restarts=3, inversion_iterations=50, pgd_iterations=20)
    inv = cfg.inversion_params()
    assert inv.restarts == 3 and inv.iterations == 50
    pgd = cfg.pgd_params()
    assert pgd.iterations == 20
    assert pgd.epsilon == cfg.delta
    sched = cfg.surrogate_schedule(seed=5)
    assert sched.seed == 5
    assert sched.substitute_arch == "small-cnn"
