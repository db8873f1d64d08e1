import numpy as np
import pytest

from parapnp.geometry import DEFAULT_INTRINSICS, CorrespondenceSet, RigidPose, euler_zxz_to_rotation
from parapnp.sim_bench import SceneConfig, generate_scene


def random_rotation(rng):
    q = rng.normal(size=4)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def rot_err_deg(R_true, R_est):
    # chord form of the column angle; arccos(dot) cannot resolve angles below ~1e-6 deg
    chords = np.linalg.norm(np.asarray(R_true) - np.asarray(R_est), axis=0)
    return float(np.degrees(np.max(2.0 * np.arcsin(np.clip(chords / 2.0, 0.0, 1.0)))))


def rel_trans_err(t_true, t_est):
    return float(np.linalg.norm(t_true - t_est) / np.linalg.norm(t_true))


def cloud_scene(seed, n=10, noise=0.0):
    cfg = SceneConfig(n_points=n, noise_sigma=noise, seed=seed)
    return generate_scene(cfg, 0), cfg


def biprism_scene(seed, L=50.0):
    cfg = SceneConfig(target_kind="biprism", L=L, seed=seed)
    return generate_scene(cfg, 0), cfg


@pytest.fixture
def intr():
    return DEFAULT_INTRINSICS


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
