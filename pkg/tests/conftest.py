import sys, pathlib, pytest
import numpy as np

root = pathlib.Path(__file__).resolve().parents[1]
if str(root) not in sys.path:
    sys.path.insert(0, str(root))

from app.dataset import ProtocolConfig, VerificationDataset, generate_synthetic_protocol  # noqa: E402


def make_dataset(samples, labels, roles, clients, impostors=()):
    """Dataset from rows in file order; role lists are derived per identity."""
    role_lists = {}
    for label, role in zip(labels, roles):
        role_lists.setdefault(label, []).append(role)
    protocol = ProtocolConfig(
        client_ids=tuple(clients),
        impostor_ids=tuple(impostors),
        role_assignment={k: tuple(v) for k, v in role_lists.items()},
    )
    return VerificationDataset.from_rows(np.asarray(samples, dtype=float), labels, roles, protocol)


def random_protocol(rng, clients=3, per_client_train=3, impostors=2, dim=5, spread=1.0, sep=4.0):
    """Small random dataset: Gaussian clients with 1 eval + 1 test row, impostors with 1 + 1."""
    samples, labels, roles = [], [], []
    client_ids = [f"c{k}" for k in range(clients)]
    impostor_ids = [f"i{k}" for k in range(impostors)]
    for identity in client_ids + impostor_ids:
        centre = sep * rng.standard_normal(dim)
        count = per_client_train + 2 if identity in client_ids else 2
        samples.append(centre + spread * rng.standard_normal((count, dim)))
        labels.extend([identity] * count)
        if identity in client_ids:
            roles.extend(["train"] * per_client_train + ["evaluation", "test"])
        else:
            roles.extend(["evaluation", "test"])
    return make_dataset(np.vstack(samples), labels, roles, client_ids, impostor_ids)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def toy_dataset(rng):
    """3 clients x (4 train + eval + test), 2 impostors, dim 6."""
    return random_protocol(rng, clients=3, per_client_train=4, impostors=2, dim=6)


@pytest.fixture
def separable_dataset():
    """Orthogonal cluster centres 20 spreads apart: linearly separable by construction."""
    return generate_synthetic_protocol(num_clients=3, num_impostors=2, samples_per_identity=12,
                                       dim=8, separation=20.0, warp="none", seed=7)


@pytest.fixture
def quiet_cli(tmp_path, monkeypatch):
    """Run CLI commands inside tmp_path without file logging."""
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("KERNEL_VERIFY_FILE_LOGGING", "false")
    return tmp_path
