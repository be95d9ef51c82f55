import contextlib
from pathlib import Path

import numpy as np
import pytest

from hdrtk.image_core import HdrImage, save_pfm

ACCEPTANCE_RESULTS = []


@contextlib.contextmanager
def criterion(label: str):
    """Record a pass/fail line for the acceptance summary, re-raising failures."""
    try:
        yield
    except BaseException as exc:
        ACCEPTANCE_RESULTS.append(("FAIL", label, f"{type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"))
        raise
    ACCEPTANCE_RESULTS.append(("PASS", label, ""))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for status, label, detail in ACCEPTANCE_RESULTS:
        line = f"[{status}] {label}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_hdr(rng, h, w, peak=8.0) -> HdrImage:
    return HdrImage(rng.uniform(0.0, peak, size=(h, w, 3)).astype(np.float32))


def write_pfm_dir(directory: Path, images: dict) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    for name, img in images.items():
        save_pfm(img, directory / name)
    return directory
