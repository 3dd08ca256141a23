import pytest

SMALL_CONFIG = """
[g]
sigma_lo = 0.8
sigma_hi = 1.2

[coefficients]
phi = "tanh(x)"
T = 0.1

[grid]
x_min = -4.0
x_max = 4.0
nx = 81

[run]
seed = 11
n_paths = 200
n_steps = 20
output_dir = "{output_dir}"
"""


@pytest.fixture
def config_file(tmp_path):
    """Small G-heat config writing into tmp_path/out."""
    path = tmp_path / 'lab.toml'
    path.write_text(SMALL_CONFIG.format(output_dir=(tmp_path / 'out').as_posix()))
    return path


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ('GLAB_SEED', 'GLAB_THREADS', 'GLAB_OUTPUT_DIR'):
        monkeypatch.delenv(name, raising=False)
