import numpy as np
import pytest

from extraction_lab.bench import get_benchmark
from extraction_lab.data import generate_true_dataset
from extraction_lab.metrics import train_teacher
from extraction_lab.network import Network, NetworkSpec, xavier_init
from extraction_lab.oracle import reference_top_classes


class TrainedBench:
    """A benchmark with its victim trained once and the evaluation labels
    precomputed (outside any budget)."""

    def __init__(self, name: str):
        self.bench = get_benchmark(name)
        self.train_set, self.test_set = generate_true_dataset(self.bench.data)
        self.teacher, self.teacher_accuracy, _ = train_teacher(
            self.train_set,
            self.test_set,
            self.bench.teacher_spec(),
            self.bench.teacher_train,
        )
        self.teacher_top = reference_top_classes(self.teacher, self.test_set.features)


@pytest.fixture(scope="session")
def blobs():
    return TrainedBench("blobs")


@pytest.fixture(scope="session")
def separable():
    return TrainedBench("separable_blobs")


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)


def random_network(rng: np.random.Generator, input_dim=4, hidden=(8,), num_classes=3) -> Network:
    spec = NetworkSpec(input_dim=input_dim, hidden_sizes=tuple(hidden), num_classes=num_classes)
    return xavier_init(spec, rng)


def identity_student(dim: int, num_classes: int = 2) -> Network:
    """Hidden layer is the identity, so latents equal (non-negative) inputs."""
    spec = NetworkSpec(input_dim=dim, hidden_sizes=(dim,), num_classes=num_classes)
    weights = [np.eye(dim), np.zeros((num_classes, dim))]
    biases = [np.zeros(dim), np.zeros(num_classes)]
    return Network(spec, weights, biases)
