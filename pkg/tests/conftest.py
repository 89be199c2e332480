import pytest

from dmlp import TrainConfig, default_synth_split, synth_generate, train

SYNTH_SEED = 7


@pytest.fixture(scope="session")
def synth_frames():
    return synth_generate(1000, 0.5, 1.5, SYNTH_SEED)


@pytest.fixture(scope="session")
def synth_split():
    return default_synth_split()


@pytest.fixture(scope="session")
def split_frames(synth_frames, synth_split):
    train_frames = [f for f in synth_frames if f.subject in synth_split.train_subjects]
    eval_frames = [f for f in synth_frames if f.subject in synth_split.eval_subjects]
    return train_frames, eval_frames


@pytest.fixture(scope="session")
def trained_model(split_frames):
    train_frames, _ = split_frames
    model, history = train(train_frames, TrainConfig(seed=SYNTH_SEED))
    return model, history
