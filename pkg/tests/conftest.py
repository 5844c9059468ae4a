import numpy as np
import pytest
import torch

from lumenrec.core import CameraIntrinsics
from lumenrec.synthcolon import RenderConfig, STYLE_A, STYLE_B, generate_dataset, random_colon

torch.set_num_threads(2)


@pytest.fixture(scope="session")
def mini_datasets(tmp_path_factory):
    """Two-style 48x48 micro-dataset pair sharing geometry and trajectories."""
    root = tmp_path_factory.mktemp("mini")
    spec = random_colon(seed=11, fold_amplitude=0.3, fold_frequency=8.0)
    k = CameraIntrinsics(fx=28.0, fy=28.0, cx=23.5, cy=23.5, width=48, height=48)
    cfg = RenderConfig(intrinsics=k)
    for style, name in ((STYLE_A, "A"), (STYLE_B, "B")):
        generate_dataset(
            spec,
            style,
            cfg,
            n_train=24,
            n_test_sets=1,
            n_test=6,
            out_dir=root / name,
            seed=77,
            write_mesh=(name == "A"),
        )
    return root


# Acceptance bookkeeping: collected by tests/test_acceptance.py, printed in
# the terminal summary.
ACCEPTANCE_RESULTS: list[tuple[str, bool, str]] = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{status}  {name}  {detail}")
