import json
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from seesaw_neat import envs
from seesaw_neat.envs import ExternalEnv, PatchChase, greedy_policy
from seesaw_neat.errors import (
    BadAction,
    EpisodeFailed,
    EpisodeOver,
    ProtocolError,
)
from seesaw_neat.pipeline import run_episode


# ---------------------------------------------------------------- determinism

def test_reset_same_seed_gives_identical_frames():
    env = PatchChase()
    a = env.reset(99).data.copy()
    b = env.reset(99).data
    assert np.array_equal(a, b)


def test_reset_placement_matches_seeded_oracle():
    # independent reconstruction of the seeded placement stream
    for seed in (0, 1, 17, 12345):
        env = PatchChase()
        env.reset(seed)
        r = np.random.default_rng(seed)
        agent = r.integers(0, 57, 2)
        while True:
            target = r.integers(0, 57, 2)
            dy = 8 - abs(int(agent[0]) - int(target[0]))
            dx = 8 - abs(int(agent[1]) - int(target[1]))
            if max(dy, 0) * max(dx, 0) < 32:
                break
        assert np.array_equal(env.agent, agent)
        assert np.array_equal(env.target, target)


def test_different_seeds_move_the_target():
    env = PatchChase()
    env.reset(1)
    t1 = env.target.copy()
    env.reset(2)
    assert not np.array_equal(t1, env.target)


def test_frame_size_matches_spec():
    env = PatchChase()
    frame = env.reset(0)
    assert (frame.height, frame.width) == (env.spec.height, env.spec.width)
    assert frame.data.shape == (64, 64, 3)
    result = env.step(0)
    assert result.frame.data.shape == (64, 64, 3)
    assert result.frame.data.dtype == np.uint8


def test_replay_determinism_randomized():
    rng = np.random.default_rng(0)
    for _ in range(100):
        seed = int(rng.integers(1 << 30))
        actions = rng.integers(0, 5, 40)
        traces = []
        for _ in range(2):
            env = PatchChase()
            env.reset(seed)
            traces.append([env.step(int(a)).frame.data.tobytes()
                           for a in actions])
        assert traces[0] == traces[1]


def test_rewards_replay_identically():
    env1, env2 = PatchChase(), PatchChase()
    env1.reset(5)
    env2.reset(5)
    policy = greedy_policy(env1)
    for _ in range(100):
        a = policy(None)
        r1 = env1.step(a)
        r2 = env2.step(a)
        assert r1.reward == r2.reward
        assert np.array_equal(r1.frame.data, r2.frame.data)


# ---------------------------------------------------------------- rules

def test_episode_ends_at_max_frames():
    env = PatchChase(max_frames=10)
    env.reset(0)
    done = False
    for _ in range(10):
        done = env.step(0).done
    assert done
    with pytest.raises(EpisodeOver):
        env.step(0)


def test_bad_action_rejected():
    env = PatchChase()
    env.reset(0)
    with pytest.raises(BadAction):
        env.step(5)
    with pytest.raises(BadAction):
        env.step(-1)


def test_capture_reward_and_respawn():
    env = PatchChase()
    env.reset(0)
    # place the agent one move left of the target, then move right
    env.target = np.array([20, 20])
    env.agent = np.array([20, 16])
    result = env.step(4)
    assert result.reward == pytest.approx(1.0 - 0.01)
    assert not np.array_equal(env.target, np.array([20, 20]))
    # respawned target never overlaps the agent by >= 50%
    assert env._overlap() < 32


def test_noop_in_empty_region_costs_step_penalty():
    env = PatchChase()
    env.reset(0)
    env.agent = np.array([0, 0])
    env.target = np.array([40, 40])
    assert env.step(0).reward == pytest.approx(-0.01)


def test_all_noop_policy_scores_minus_two():
    # spawn never overlaps by construction, so 200 * -0.01 exactly
    score = run_episode(PatchChase(), lambda f: 0, seed=3)
    assert score == pytest.approx(-2.0)


def test_movement_clamped_to_board():
    env = PatchChase()
    env.reset(0)
    env.agent = np.array([0, 0])
    env.target = np.array([40, 40])
    env.step(1)  # up
    env.step(3)  # left
    assert tuple(env.agent) == (0, 0)
    for _ in range(30):
        env.step(2)  # down
    assert env.agent[0] == 64 - 8


def test_score_is_sum_of_step_rewards():
    env = PatchChase()
    frame = env.reset(7)
    policy = greedy_policy(env)
    total = 0.0
    done = False
    while not done:
        result = env.step(policy(frame))
        total += result.reward
        frame, done = result.frame, result.done
    env2 = PatchChase()
    assert run_episode(env2, greedy_policy(env2), seed=7) == pytest.approx(total)


def test_random_policy_scores_below_greedy_oracle():
    greedy_scores, random_scores = [], []
    rng = np.random.default_rng(0)
    for seed in range(100):
        env = envs.PatchChase()
        greedy_scores.append(run_episode(env, greedy_policy(env), seed))
        env2 = envs.PatchChase()
        random_scores.append(
            run_episode(env2, lambda f: int(rng.integers(5)), seed))
    assert np.mean(random_scores) < np.mean(greedy_scores)
    assert np.mean(greedy_scores) > 5.0  # greedy collects many targets


# ---------------------------------------------------------------- external adapter

SERVER = [sys.executable, "-m", "seesaw_neat.envs", "patch_chase"]


def make_fake_server(tmp_path, body):
    path = tmp_path / "fake_env.py"
    path.write_text(textwrap.dedent(body))
    return [sys.executable, str(path)]


def test_external_handshake_populates_spec():
    env = ExternalEnv(SERVER)
    try:
        assert env.spec.name == "patch_chase"
        assert (env.spec.height, env.spec.width) == (64, 64)
        assert env.spec.actions == 5
        assert env.spec.max_frames == 200
    finally:
        env.close()


def test_external_env_mirrors_local_env():
    local = PatchChase()
    remote = ExternalEnv(SERVER)
    try:
        f_local = local.reset(42)
        f_remote = remote.reset(42)
        assert np.array_equal(f_local.data, f_remote.data)
        for action in (4, 4, 2, 0, 1, 3):
            r_local = local.step(action)
            r_remote = remote.step(action)
            assert np.array_equal(r_local.frame.data, r_remote.frame.data)
            assert r_local.reward == r_remote.reward
            assert r_local.done == r_remote.done
    finally:
        remote.close()


def test_malformed_reply_names_offending_field(tmp_path):
    cmd = make_fake_server(tmp_path, """
        import sys, json
        for line in sys.stdin:
            if line.startswith("hello"):
                print(json.dumps({"name": "x", "h": 8, "w": 8,
                                  "actions": "five", "max_frames": 10}))
                sys.stdout.flush()
    """)
    with pytest.raises(ProtocolError) as err:
        ExternalEnv(cmd)
    assert err.value.field == "actions"


def test_missing_field_named(tmp_path):
    cmd = make_fake_server(tmp_path, """
        import sys, json
        for line in sys.stdin:
            print(json.dumps({"name": "x", "h": 8, "w": 8, "actions": 3}))
            sys.stdout.flush()
    """)
    with pytest.raises(ProtocolError) as err:
        ExternalEnv(cmd)
    assert err.value.field == "max_frames"


def test_bad_frame_payload(tmp_path):
    cmd = make_fake_server(tmp_path, """
        import sys, json, base64
        for line in sys.stdin:
            if line.startswith("hello"):
                print(json.dumps({"name": "x", "h": 8, "w": 8,
                                  "actions": 3, "max_frames": 10}))
            else:
                print(json.dumps({"frame": base64.b64encode(b"xx").decode()}))
            sys.stdout.flush()
    """)
    env = ExternalEnv(cmd)
    try:
        with pytest.raises(ProtocolError) as err:
            env.reset(0)
        assert err.value.field == "frame"
    finally:
        env.close()


def test_child_exit_mid_episode_fails_with_floor(tmp_path):
    cmd = make_fake_server(tmp_path, """
        import sys, json, base64
        print(json.dumps({"name": "x", "h": 2, "w": 2,
                          "actions": 2, "max_frames": 10}))
        sys.stdout.flush()
        line = sys.stdin.readline()  # reset
        print(json.dumps({"frame": base64.b64encode(bytes(12)).decode()}))
        sys.stdout.flush()
        sys.exit(1)  # die before the first step reply
    """)
    env = ExternalEnv(cmd, failure_fitness=-5.0)
    try:
        env.reset(0)
        with pytest.raises(EpisodeFailed) as err:
            env.step(0)
        assert err.value.floor == -5.0
    finally:
        env.close()


def test_failed_episode_scores_env_floor(tmp_path):
    cmd = make_fake_server(tmp_path, """
        import sys, json, base64
        print(json.dumps({"name": "x", "h": 2, "w": 2,
                          "actions": 2, "max_frames": 10}))
        sys.stdout.flush()
        line = sys.stdin.readline()
        print(json.dumps({"frame": base64.b64encode(bytes(12)).decode()}))
        sys.stdout.flush()
    """)
    from seesaw_neat.pipeline import EvaluationProtocol, evaluate_policy
    protocol = EvaluationProtocol(root_seed=0, trials=1)
    score = evaluate_policy(lambda env: (lambda f: 0),
                            lambda: ExternalEnv(cmd, failure_fitness=-9.0),
                            protocol, seeds=[0])
    assert score == -9.0
