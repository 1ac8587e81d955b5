import pytest
import torch

from gsba.data import build_eval_set, load_dataset
from gsba.targets import TargetTrainConfig, train_target


@pytest.fixture(scope="session")
def digits_train():
    return load_dataset("digits", "train")


@pytest.fixture(scope="session")
def digits_test():
    return load_dataset("digits", "test")


@pytest.fixture(scope="session")
def desk_target(digits_train, digits_test):
    """A competent small target classifier, shared across the suite."""
    model = train_target(
        "small-cnn", digits_train, TargetTrainConfig(epochs=30, seed=0), test_data=digits_test
    )
    return model


@pytest.fixture(scope="session")
def desk_eval_set(desk_target, digits_test):
    return build_eval_set(desk_target, digits_test, n=100, seed=7, target_id="digits-smallcnn-0")


class FixedLogitsNet(torch.nn.Module):
    """Test double: a 'classifier' that returns preset logits."""

    def __init__(self, logits):
        super().__init__()
        self.logits = torch.as_tensor(logits, dtype=torch.float64).float()
        self.num_classes = self.logits.shape[-1]

    def forward(self, x):
        if self.logits.ndim == 1:
            return self.logits.unsqueeze(0).expand(x.shape[0], -1)
        return self.logits


def probs_to_logits(probs):
    """Logits whose softmax reproduces `probs` (zeros stay tiny, not -inf)."""
    p = torch.as_tensor(probs, dtype=torch.float64)
    return p.clamp_min(1e-30).log().float()


@pytest.fixture
def fixed_net():
    def make(probs):
        return FixedLogitsNet(probs_to_logits(probs))

    return make
