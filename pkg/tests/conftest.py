import numpy as np
import pytest
from pathlib import Path

from fgunion import FeatureGrid

FIXTURES = Path(__file__).parent / "fixtures"


def unit_grid(rng, h, w, d):
    # random unit-norm feature grid
    f = rng.normal(size=(h, w, d))
    f /= np.linalg.norm(f, axis=-1, keepdims=True)
    return FeatureGrid.from_array(f)


def two_feature_grid(h, w, fg_rows, fg_cols, d=2):
    # planted rectangle: foreground gets +u, background gets -u; the classes
    # must anticorrelate or no patch qualifies as an anti-seed and every
    # voter degenerates to all-ones
    f = np.zeros((h, w, d), dtype=np.float32)
    f[..., 0] = -1.0
    r0, r1 = fg_rows
    c0, c1 = fg_cols
    f[r0:r1, c0:c1, 0] = 1.0
    mask = np.zeros((h, w), dtype=np.uint8)
    mask[r0:r1, c0:c1] = 1
    return FeatureGrid.from_array(f), mask


def fixture_manifest(name):
    p = FIXTURES / name / "manifest.txt"
    if not p.is_file():
        pytest.skip(f"dataset fixture {name!r} not staged at {p} "
                    f"(needs network access to source images; see README)")
    return p


@pytest.fixture
def report(capsys):
    # prints one PASS/FAIL line per criterion straight to the terminal,
    # then enforces it
    def _report(name, ok, detail=""):
        with capsys.disabled():
            line = f"[{'PASS' if ok else 'FAIL'}] {name}"
            if detail:
                line += f" ({detail})"
            print(line, flush=True)
        assert ok, f"{name}: {detail}"
    return _report
