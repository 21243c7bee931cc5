import numpy as np
import pytest

from fairsearch import data, nncore, synth
from fairsearch.data import AttributeSpec, DatasetSchema


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def tiny_schema():
    """Three features, one sensitive (3 values), binary label."""
    return DatasetSchema(
        [
            AttributeSpec("x0", "nonsensitive", lo=0, hi=10),
            AttributeSpec("grp", "sensitive", values=("a", "b", "c")),
            AttributeSpec("x1", "nonsensitive", lo=-5, hi=5),
            AttributeSpec("y", "label", values=("no", "yes")),
        ],
        name="tiny",
    )


@pytest.fixture
def small_net():
    return nncore.new_network(3, hidden=(8, 4), rng_seed=3)


def random_net(rng, input_dim, hidden=(6, 4)):
    seed = int(rng.integers(2**31))
    return nncore.new_network(input_dim, hidden=hidden, rng_seed=seed)


@pytest.fixture(scope="session")
def credit_paths(tmp_path_factory):
    """Synthetic credit CSV plus its schema file, shared across the session."""
    root = tmp_path_factory.mktemp("credit")
    csv_path = synth.write_synthetic_credit(root / "credit.csv")
    schema_path = root / "german_credit.json"
    data.save_schema(data.builtin_schema("german_credit"), schema_path)
    return {"csv": csv_path, "schema": schema_path, "root": root}
