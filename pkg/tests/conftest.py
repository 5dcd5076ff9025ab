import numpy as np
import pytest

from ids_adapt.data import balance_and_split, default_synth_spec, synth_generate
from ids_adapt.mlp import TrainConfig, init_mlp, train

# Plain gradient descent needs a larger step than the 0.001/512 default to
# converge within a few seconds on the small synthetic sets.
FAST = TrainConfig(learning_rate=0.05, batch_size=32, max_epochs=100, patience=25)

_ACCEPTANCE: list[str] = []


def record_acceptance(line: str) -> None:
    _ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)


def fit(ds, hidden=(32, 32), seed=0, config=FAST):
    model = init_mlp([ds.n_features, *hidden, 1], seed)
    Xtr, ytr = ds.view("train")
    Xva, yva = ds.view("val")
    train(model, Xtr, ytr, Xva, yva, config)
    return model


@pytest.fixture(scope="session")
def synth_ds():
    return balance_and_split(synth_generate(default_synth_spec(10, 200, seed=0)), seed=0)


@pytest.fixture(scope="session")
def teacher(synth_ds):
    return fit(synth_ds)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
