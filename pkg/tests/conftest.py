import numpy as np
import pytest

from drivecog.session import CHANNELS, EegTrial, LandmarkFrame, LandmarkTrack
from drivecog.synth import SynthConfig, synth_dataset


@pytest.fixture(scope="session")
def small_attention(tmp_path_factory):
    """3 subjects x 4 attention trials of 4 s at high separation."""
    out = tmp_path_factory.mktemp("attention")
    return synth_dataset(SynthConfig(n_subjects=3, trials_per_subject=4, duration_s=4.0,
                                     seed=11), out)


@pytest.fixture(scope="session")
def small_hazard(tmp_path_factory):
    out = tmp_path_factory.mktemp("hazard")
    return synth_dataset(SynthConfig(n_subjects=3, trials_per_subject=4, task="hazard",
                                     signal="drift", seed=5), out)


def make_trial(samples, trial_id="T", subject_id="S"):
    samples = np.asarray(samples, dtype=float)
    return EegTrial(subject_id, trial_id, samples, samples.shape[0] / 128)


def noise_trial(seed=0, seconds=4.0, scale=10.0):
    rng = np.random.default_rng(seed)
    return make_trial(scale * rng.standard_normal((int(seconds * 128), len(CHANNELS))))


def frame_from_points(points, box=(0.0, 0.0, 200.0, 200.0), t=0.0, valid=True):
    return LandmarkFrame(t, box, np.asarray(points, dtype=float), valid)


def template_frame(seed=0, box=(100.0, 50.0, 200.0, 200.0), t=0.0):
    from drivecog.synth import _TEMPLATE
    rng = np.random.default_rng(seed)
    pts = _TEMPLATE + rng.normal(0, 0.003, _TEMPLATE.shape)
    x0, y0, w, h = box
    return LandmarkFrame(t, box, np.array([x0, y0]) + pts * np.array([w, h]))


def template_track(n=20, seed=0):
    return LandmarkTrack([template_frame(seed + k, t=k / 10) for k in range(n)])


# ---------------------------------------------------------------------------
# Acceptance summary: tests/test_acceptance.py records one line per criterion

ACCEPTANCE = {}


def record_acceptance(number, title, ok, detail):
    ACCEPTANCE[number] = (title, bool(ok), detail)
    print(f"ACCEPTANCE {number} {'PASS' if ok else 'FAIL'}: {title} -- {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n}. {title}: {detail}")
