import sys

import numpy as np
import pytest

from trackkit.mask_ops import encode_rle
from trackkit.metrics import Instance, VideoSequence


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def rect_mask(h, w, y0, x0, mh, mw):
    m = np.zeros((h, w), dtype=bool)
    m[y0:y0 + mh, x0:x0 + mw] = True
    return m


def seq_from_dense(seq_id, length, tracks, score=None):
    """``tracks``: {instance_id: {frame: dense mask}}."""
    insts = []
    for iid, frames in sorted(tracks.items()):
        masks = [encode_rle(frames[t]) if t in frames else None for t in range(length)]
        insts.append(Instance(iid, masks, score))
    return VideoSequence(seq_id, length, insts)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        terminalreporter.write_line(lines[n])
