"""Deterministic pixel environments and the external-environment adapter.

Built-in environments render RGB frames as numpy arrays and are fully
determined by the reset seed: identical (seed, action sequence) pairs give
byte-identical episodes.  The external adapter proxies reset/step to a
child process over a newline-delimited JSON protocol (see the README for
the exact framing).
"""

import base64
import json
import selectors
import subprocess
import sys
from dataclasses import dataclass

import numpy as np

from .errors import (
    BadAction,
    EnvTimeout,
    EpisodeFailed,
    EpisodeOver,
    ProtocolError,
    ShapeMismatch,
)


@dataclass
class Frame:
    height: int
    width: int
    data: np.ndarray           # (H, W, 3) uint8, row-major RGB

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.uint8)
        if self.data.shape != (self.height, self.width, 3):
            raise ShapeMismatch(
                f"frame data shape {self.data.shape} != "
                f"({self.height}, {self.width}, 3)")


@dataclass
class StepResult:
    frame: Frame
    reward: float
    done: bool


@dataclass
class EnvSpec:
    name: str
    height: int
    width: int
    actions: int               # discrete action count
    max_frames: int

    def __post_init__(self):
        if self.actions < 2 or self.max_frames < 1:
            raise ShapeMismatch("EnvSpec needs >= 2 actions and >= 1 max frame")


class PatchChase:
    """64x64 chase game: steer a white square onto a colored target.

    Rules: black background; the agent is an 8x8 white square, the target an
    8x8 orange square at a seeded position.  Five actions (noop, up, down,
    left, right) move the agent 4 pixels per step, clamped to the board.
    Reward is -0.01 per step, +1 whenever the agent overlaps the target by at
    least 50% of its area (the target then respawns from the episode's seeded
    stream, never overlapping the agent by >= 50%).  Episodes last 200 frames.
    """

    SIZE = 64
    SQUARE = 8
    MOVE = 4
    CAPTURE_AREA = SQUARE * SQUARE // 2
    STEP_PENALTY = -0.01
    AGENT_COLOR = (255, 255, 255)
    TARGET_COLOR = (255, 96, 0)
    ACTIONS = 5                # noop, up, down, left, right
    MAX_FRAMES = 200

    def __init__(self, max_frames=MAX_FRAMES):
        self.spec = EnvSpec("patch_chase", self.SIZE, self.SIZE,
                            self.ACTIONS, max_frames)
        self._rng = None
        self._done = True

    def reset(self, seed):
        self._rng = np.random.default_rng(int(seed))
        hi = self.SIZE - self.SQUARE + 1
        self.agent = self._rng.integers(0, hi, 2)
        self._spawn_target()
        self.frames = 0
        self._done = False
        return self._render()

    def _spawn_target(self):
        hi = self.SIZE - self.SQUARE + 1
        while True:
            self.target = self._rng.integers(0, hi, 2)
            if self._overlap() < self.CAPTURE_AREA:
                return

    def _overlap(self):
        dy = self.SQUARE - abs(int(self.agent[0]) - int(self.target[0]))
        dx = self.SQUARE - abs(int(self.agent[1]) - int(self.target[1]))
        return max(dy, 0) * max(dx, 0)

    def _render(self):
        img = np.zeros((self.SIZE, self.SIZE, 3), dtype=np.uint8)
        ty, tx = self.target
        img[ty:ty + self.SQUARE, tx:tx + self.SQUARE] = self.TARGET_COLOR
        ay, ax = self.agent
        img[ay:ay + self.SQUARE, ax:ax + self.SQUARE] = self.AGENT_COLOR
        return Frame(self.SIZE, self.SIZE, img)

    def step(self, action):
        if self._done:
            raise EpisodeOver("episode finished; call reset()")
        action = int(action)
        if not 0 <= action < self.ACTIONS:
            raise BadAction(f"action {action} outside [0, {self.ACTIONS})")
        dy, dx = [(0, 0), (-1, 0), (1, 0), (0, -1), (0, 1)][action]
        limit = self.SIZE - self.SQUARE
        self.agent = np.clip(self.agent + np.array([dy, dx]) * self.MOVE, 0, limit)
        reward = self.STEP_PENALTY
        if self._overlap() >= self.CAPTURE_AREA:
            reward += 1.0
            self._spawn_target()
        self.frames += 1
        self._done = self.frames >= self.spec.max_frames
        return StepResult(self._render(), reward, self._done)

    def close(self):
        pass


def greedy_policy(env):
    """Shortest-path oracle for PatchChase: close the larger axis gap first."""
    def act(_frame):
        dy = int(env.target[0]) - int(env.agent[0])
        dx = int(env.target[1]) - int(env.agent[1])
        if abs(dy) >= abs(dx) and dy != 0:
            return 1 if dy < 0 else 2
        if dx != 0:
            return 3 if dx < 0 else 4
        return 0
    return act


def make_env(name, max_frames=None, executable=None, **kwargs):
    """Environment factory by name ('patch_chase' or 'external')."""
    if name == "patch_chase":
        return PatchChase(max_frames or PatchChase.MAX_FRAMES)
    if name == "external":
        if not executable:
            raise ShapeMismatch("external env requires an executable path")
        return ExternalEnv(executable, **kwargs)
    raise ShapeMismatch(f"unknown environment '{name}'")


# -- external environment adapter --------------------------------------------------
#
# Line protocol over the child's stdin/stdout, one JSON object per line:
#   -> "hello"            <- {"name":..,"h":..,"w":..,"actions":..,"max_frames":..}
#   -> "reset <seed>"     <- {"frame": "<base64 raw RGB bytes>"}
#   -> "step <action>"    <- {"frame": "...", "reward": <float>, "done": <bool>}

class ExternalEnv:
    """Adapter owning one child process that speaks the line protocol."""

    def __init__(self, executable, timeout=10.0, failure_fitness=0.0):
        self.timeout = timeout
        self.failure_fitness = failure_fitness
        argv = executable if isinstance(executable, (list, tuple)) else [executable]
        self._proc = subprocess.Popen(
            list(argv), stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, bufsize=1)
        self._sel = selectors.DefaultSelector()
        self._sel.register(self._proc.stdout, selectors.EVENT_READ)
        self._done = True
        reply = self._roundtrip("hello")
        self.spec = EnvSpec(
            name=str(self._field(reply, "name")),
            height=self._int_field(reply, "h"),
            width=self._int_field(reply, "w"),
            actions=self._int_field(reply, "actions"),
            max_frames=self._int_field(reply, "max_frames"))

    @staticmethod
    def _field(reply, name):
        if name not in reply:
            raise ProtocolError("missing", field=name)
        return reply[name]

    def _int_field(self, reply, name):
        value = self._field(reply, name)
        if not isinstance(value, int):
            raise ProtocolError(f"expected integer, got {value!r}", field=name)
        return value

    def _roundtrip(self, line):
        if self._proc.poll() is not None:
            raise EpisodeFailed("environment process exited", self.failure_fitness)
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, ValueError):
            raise EpisodeFailed("environment process closed its pipe",
                                self.failure_fitness)
        if not self._sel.select(timeout=self.timeout):
            raise EnvTimeout(f"no reply to {line.split()[0]!r} "
                             f"within {self.timeout}s")
        reply = self._proc.stdout.readline()
        if not reply:
            raise EpisodeFailed("environment process exited mid-episode",
                                self.failure_fitness)
        try:
            obj = json.loads(reply)
        except json.JSONDecodeError as e:
            raise ProtocolError(f"reply is not valid JSON: {e}")
        if not isinstance(obj, dict):
            raise ProtocolError("reply is not a JSON object")
        return obj

    def _decode_frame(self, reply):
        raw = self._field(reply, "frame")
        try:
            data = base64.b64decode(raw, validate=True)
        except Exception:
            raise ProtocolError("not valid base64", field="frame")
        expected = self.spec.height * self.spec.width * 3
        if len(data) != expected:
            raise ProtocolError(
                f"expected {expected} bytes, got {len(data)}", field="frame")
        img = np.frombuffer(data, dtype=np.uint8).reshape(
            self.spec.height, self.spec.width, 3)
        return Frame(self.spec.height, self.spec.width, img)

    def reset(self, seed):
        reply = self._roundtrip(f"reset {int(seed)}")
        self._done = False
        return self._decode_frame(reply)

    def step(self, action):
        if self._done:
            raise EpisodeOver("episode finished; call reset()")
        action = int(action)
        if not 0 <= action < self.spec.actions:
            raise BadAction(f"action {action} outside [0, {self.spec.actions})")
        reply = self._roundtrip(f"step {action}")
        reward = self._field(reply, "reward")
        if not isinstance(reward, (int, float)) or isinstance(reward, bool):
            raise ProtocolError(f"expected number, got {reward!r}", field="reward")
        done = self._field(reply, "done")
        if not isinstance(done, bool):
            raise ProtocolError(f"expected boolean, got {done!r}", field="done")
        self._done = done
        return StepResult(self._decode_frame(reply), float(reward), done)

    def close(self):
        if self._proc.poll() is None:
            self._proc.terminate()
            try:
                self._proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                self._proc.kill()
        self._sel.close()


def serve(env, stdin=None, stdout=None):
    """Child side of the line protocol; wraps any built-in environment."""
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        parts = line.split()
        if not parts:
            continue
        cmd = parts[0]
        if cmd == "hello":
            s = env.spec
            out = {"name": s.name, "h": s.height, "w": s.width,
                   "actions": s.actions, "max_frames": s.max_frames}
        elif cmd == "reset":
            frame = env.reset(int(parts[1]))
            out = {"frame": base64.b64encode(frame.data.tobytes()).decode()}
        elif cmd == "step":
            res = env.step(int(parts[1]))
            out = {"frame": base64.b64encode(res.frame.data.tobytes()).decode(),
                   "reward": res.reward, "done": res.done}
        elif cmd == "quit":
            return
        else:
            out = {"error": f"unknown command {cmd!r}"}
        stdout.write(json.dumps(out) + "\n")
        stdout.flush()


if __name__ == "__main__":  # `python -m seesaw_neat.envs patch_chase`
    serve(make_env(sys.argv[1] if len(sys.argv) > 1 else "patch_chase"))
