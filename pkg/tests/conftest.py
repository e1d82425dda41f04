"""Shared fixtures: the expensive trained runs are session-scoped and reused.

The acceptance suite records one line per criterion; a terminal-summary
hook prints the collected table after the run.
"""

from types import SimpleNamespace

import pytest

from promptseg.data import resize_pad
from promptseg.peft import FreezePolicy
from promptseg.synth import synth_generate
from promptseg.training import SyntheticDataConfig, TrainConfig, few_shot_train, prepare_data, train

ACCEPTANCE_LINES: list[str] = []


def record_criterion(name: str, ok: bool, detail: str) -> None:
    status = "PASS" if ok else "FAIL"
    ACCEPTANCE_LINES.append(f"[{status}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def overfit_run(tmp_path_factory):
    """50 synthetic images, desk preset, ppn_only, 2000 steps (AC 5/7/8/9)."""
    out = tmp_path_factory.mktemp("overfit")
    config = TrainConfig(
        seed=0,
        out_dir=str(out),
        max_steps=2000,
        augment_enabled=False,
        freeze=FreezePolicy("ppn_only"),
        synthetic=SyntheticDataConfig(seed=11, count=150, empty_fraction=0.2,
                                      train_count=50, test_count=100),
    )
    train_samples, test_samples = prepare_data(config)
    result = train(config, train_samples=train_samples)
    gate_samples = [resize_pad(s, config.geometry)
                    for s in synth_generate(12, 40, empty_fraction=0.5)]
    return SimpleNamespace(config=config, result=result, model=result.model,
                           train_samples=train_samples, test_samples=test_samples,
                           gate_samples=gate_samples)


@pytest.fixture(scope="session")
def fewshot_run(tmp_path_factory):
    """k=10 few-shot training with the augmentation pipeline on (AC 6)."""
    out = tmp_path_factory.mktemp("fewshot")
    config = TrainConfig(
        seed=0,
        out_dir=str(out),
        max_steps=1000,
        augment_enabled=True,
        freeze=FreezePolicy("ppn_only"),
        synthetic=SyntheticDataConfig(seed=11, count=150, empty_fraction=0.2,
                                      train_count=50, test_count=100),
    )
    _, test_samples = prepare_data(config)
    result = few_shot_train(config, k=10)
    return SimpleNamespace(config=config, result=result, model=result.model,
                           test_samples=test_samples)


@pytest.fixture(scope="session")
def decoder_run(tmp_path_factory):
    """full_decoder fine-tuning with manual-prompt simulation; powers the
    trained-service comparisons."""
    out = tmp_path_factory.mktemp("decoder")
    config = TrainConfig(
        seed=0,
        out_dir=str(out),
        max_steps=1600,
        augment_enabled=False,
        freeze=FreezePolicy("full_decoder"),
        synthetic=SyntheticDataConfig(seed=11, count=150, empty_fraction=0.2,
                                      train_count=50, test_count=100),
    )
    train_samples, test_samples = prepare_data(config)
    result = train(config, train_samples=train_samples)
    return SimpleNamespace(config=config, result=result, model=result.model,
                           train_samples=train_samples, test_samples=test_samples)
