import numpy as np
import pytest

from gauzecut import mesh
from gauzecut.contour import Contour, build_schedule, schedule_for, segment_contour
from gauzecut.errors import EpisodeFinishedError, InsufficientFiducialsError, PinchOnTrajectoryError
from gauzecut.mdp import (
    ACTIONS,
    NOOP,
    MdpConfig,
    noop_policy,
    reset,
    rollout,
    step_env,
    write_trace_csv,
)
from gauzecut.policy import MLPPolicy


@pytest.fixture
def line_setup(sagged_15):
    c = Contour(np.array([[2.0, 7.0], [12.0, 7.0]]), False, "line")
    _, sched = schedule_for(c, 15, 1.0)
    return sagged_15, sched


@pytest.fixture
def v_setup(sagged_15, v_contour):
    _, sched = schedule_for(v_contour, 15, 1.0)
    return sagged_15, sched


def test_state_dimension_and_initial_state(line_setup):
    sheet, sched = line_setup
    cfg = MdpConfig()
    assert cfg.state_dim() == 39
    ep, s = reset(cfg, sheet, sched, (10, 7))
    assert s.shape == (39,)
    assert s[0] == 0.0 and np.all(s[-2:] == 0.0)
    assert np.all(np.isfinite(s))
    assert len(ACTIONS) == 5 and ACTIONS[NOOP] == "noop"


def test_reset_determinism_and_fiducials(line_setup):
    sheet, sched = line_setup
    a, sa = reset(MdpConfig(fiducial_seed=3), sheet, sched, (10, 7))
    b, sb = reset(MdpConfig(fiducial_seed=3), sheet, sched, (10, 7))
    assert a.fiducials == b.fiducials and np.array_equal(sa, sb)
    bad = set(sched.vertices) | {(10, 7)} | set(sheet.corners)
    assert not (set(a.fiducials) & bad)
    assert len(set(a.fiducials)) == 12


def test_reset_errors(line_setup):
    sheet, sched = line_setup
    with pytest.raises(PinchOnTrajectoryError):
        reset(MdpConfig(), sheet, sched, sched.vertices[3])
    tiny = mesh.new_sheet(mesh.SimParams(resolution=3))
    _, s3 = schedule_for(Contour(np.array([[0.0, 1.0], [2.0, 1.0]]), False), 3, 1.0)
    with pytest.raises(InsufficientFiducialsError):
        reset(MdpConfig(), tiny, s3, None)


def test_reset_does_not_touch_template(line_setup):
    sheet, sched = line_setup
    before = sheet.pos.copy()
    ep, _ = reset(MdpConfig(), sheet, sched, (10, 7))
    rollout(ep, noop_policy)
    assert np.array_equal(sheet.pos, before) and not sheet.cut.any()


def test_sparse_reward_and_length(v_setup):
    sheet, sched = v_setup
    pol = MLPPolicy.for_dims(39, 5, init_seed=1)
    ep, _ = reset(MdpConfig(reward_scale=10.0), sheet, sched, (12, 2))
    tr = rollout(ep, pol, np.random.default_rng(0))
    assert len(tr) == len(sched) == ep.horizon
    assert np.count_nonzero(tr.rewards[:-1]) == 0
    assert tr.rewards.sum() == tr.rewards[-1] == -tr.score / 10.0
    assert all(0.0 <= s[0] <= 1.0 for s in tr.states)


def test_episode_finished(v_setup):
    sheet, sched = v_setup
    ep, _ = reset(MdpConfig(), sheet, sched, None)
    rollout(ep, noop_policy)
    with pytest.raises(EpisodeFinishedError):
        step_env(ep, NOOP)


def test_invalid_action(v_setup):
    sheet, sched = v_setup
    ep, _ = reset(MdpConfig(), sheet, sched, None)
    with pytest.raises(ValueError):
        step_env(ep, 5)


def test_noop_equals_no_tension(v_setup):
    """All-no-op with no pinch is the no-tension baseline; a held pinch is the fixed baseline."""
    sheet, sched = v_setup
    a, _ = reset(MdpConfig(), sheet, sched, None, seed=4)
    b, _ = reset(MdpConfig(), sheet, sched, None, seed=4)
    sa = rollout(a, noop_policy).score
    sb = rollout(b, lambda s, e: NOOP).score
    assert sa == sb


def test_perfect_cut_zero_reward():
    """Without gravity, blade drag or tension, vertices are severed exactly at rest."""
    sheet = mesh.new_sheet(mesh.SimParams(resolution=15))
    _, sched = schedule_for(Contour(np.array([[2.0, 7.0], [12.0, 7.0]]), False), 15, 1.0)
    ep, _ = reset(MdpConfig(blade_force=0.0), sheet, sched, None)
    tr = rollout(ep, noop_policy)
    assert tr.score == 0 and tr.rewards[-1] == 0


def test_workspace_clamp(line_setup):
    sheet, sched = line_setup
    ep, _ = reset(MdpConfig(), sheet, sched, (10, 7))
    for _ in range(8):
        step_env(ep, 1)  # +x
    limit = 0.2 * sheet.params.width
    assert ep.displacement[0] == pytest.approx(limit)
    assert ep.sheet.pos[10, 7, 0] == pytest.approx(sheet.rest[10, 7, 0] + limit)


def test_rollout_reproducible_with_seed(v_setup):
    sheet, sched = v_setup
    pol = MLPPolicy((39, 5), [np.zeros((39, 5))], [np.zeros(5)])

    def run(seed):
        ep, _ = reset(MdpConfig(), sheet, sched, (12, 2))
        return rollout(ep, pol, np.random.default_rng(seed))

    a, b = run(11), run(11)
    assert np.array_equal(a.actions, b.actions) and a.score == b.score
    assert not np.array_equal(a.actions, run(12).actions)


def test_state_markov_in_action_prefix(v_setup):
    sheet, sched = v_setup
    acts = [1, 3, 0, 2, 4, 1]
    states = []
    for _ in range(2):
        ep, _ = reset(MdpConfig(), sheet, sched, (12, 2), seed=5)
        for a in acts:
            s, _, _ = step_env(ep, a)
        states.append(s)
    assert np.array_equal(states[0], states[1])


def test_multi_pinch_switching(sagged_15, v_contour):
    segs = segment_contour(v_contour)
    sched = build_schedule(segs, (1, 0), 15, 1.0)
    ep, _ = reset(MdpConfig(), sagged_15, sched, pinches={1: (3, 11), 0: (12, 2)})
    assert ep.active_pinch == (3, 11)
    while ep.current_segment == 1:
        step_env(ep, 1)
    assert ep.active_pinch == (12, 2)
    assert np.all(ep.displacement == 0)
    # the released pinch goes back to following the sheet
    assert not ep.sheet.pinned[3, 11]


def test_trace_csv(tmp_path, v_setup):
    sheet, sched = v_setup
    ep, _ = reset(MdpConfig(), sheet, sched, None)
    rollout(ep, noop_policy)
    write_trace_csv([ep], tmp_path / "trace.csv")
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "episode,step,action,reward"
    assert len(lines) == 1 + len(sched)
