"""Probability oracles queried by the explainer.

Every model counts the predictions it serves in ``query_count``.  The
external client talks to a spawned process either over a newline-delimited
JSON protocol on stdin/stdout or through a pair of CSV files.
"""

from __future__ import annotations

import csv
import json
import math
import os
import queue
import subprocess
import sys
import tempfile
import threading
import time
from typing import Sequence

import numpy as np


class BlackBoxError(RuntimeError):
    """The oracle failed, timed out or returned something unusable."""


class BlackBox:
    """Base class: subclasses implement ``_predict_batch``."""

    bounded = True

    def __init__(self):
        self.query_count = 0

    def _predict_batch(self, Z: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def batch_predict(self, Z) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[0] == 0:
            return np.zeros(0)
        y = np.asarray(self._predict_batch(Z), dtype=float).reshape(-1)
        if y.shape[0] != Z.shape[0]:
            raise BlackBoxError(f"oracle returned {y.shape[0]} values for {Z.shape[0]} queries")
        if not np.all(np.isfinite(y)):
            raise BlackBoxError("oracle returned non-finite predictions")
        if self.bounded and (np.any(y < 0.0) or np.any(y > 1.0)):
            raise BlackBoxError("oracle returned a probability outside [0, 1]")
        self.query_count += Z.shape[0]
        return y

    def predict(self, z) -> float:
        return float(self.batch_predict(np.asarray(z, dtype=float)[None, :])[0])

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class SyntheticLinearModel(BlackBox):
    """``y = z' phi_star + eps`` with ``eps ~ N(0, sigma^2)``.

    Responses are returned raw (unclipped); ``clip_for_report`` maps them
    into [0, 1] for display only.  Noise is drawn from a private stream, so
    the t-th call is reproducible from ``rng_seed``.
    """

    bounded = False

    def __init__(self, phi_star, sigma: float = 0.0, rng_seed: int = 0):
        super().__init__()
        if sigma < 0:
            raise ValueError("noise std must be nonnegative")
        self.phi_star = np.array(phi_star, dtype=float).reshape(-1)
        self.sigma = float(sigma)
        self.rng_seed = rng_seed
        self._rng = np.random.default_rng(rng_seed)

    def _predict_batch(self, Z):
        if Z.shape[1] != self.phi_star.shape[0]:
            raise BlackBoxError(f"query dimension {Z.shape[1]} != model dimension {self.phi_star.shape[0]}")
        noise = self._rng.standard_normal(Z.shape[0]) * self.sigma if self.sigma > 0 else 0.0
        return Z @ self.phi_star + noise

    @staticmethod
    def clip_for_report(y):
        return np.clip(y, 0.0, 1.0)


def synthetic_predict(m: SyntheticLinearModel, z) -> float:
    return m.predict(z)


def _arc_distance(P: np.ndarray, center, lo: float, hi: float) -> np.ndarray:
    """Distance from points ``P`` (n, 2) to a unit-radius arc spanning angles [lo, hi]."""
    rel = P - np.asarray(center, dtype=float)
    r = np.hypot(rel[:, 0], rel[:, 1])
    ang = np.arctan2(rel[:, 1], rel[:, 0])
    on_arc = (ang >= lo) & (ang <= hi)
    ends = np.array([[math.cos(lo), math.sin(lo)], [math.cos(hi), math.sin(hi)]]) + center
    to_ends = np.min(np.linalg.norm(P[:, None, :] - ends[None, :, :], axis=2), axis=1)
    return np.where(on_arc, np.abs(r - 1.0), to_ends)


class MoonsModel(BlackBox):
    """Analytic two-crescent classifier on the first two coordinates.

    The crescents are the noise-free ``make_moons`` curves: an upper arc
    centred at (0, 0) (class 0) and a lower arc centred at (1, 0.5)
    (class 1).  The positive-class probability is
    ``logistic(sharpness * (dist_upper - dist_lower))``.  Remaining
    coordinates, if any, are ignored.
    """

    def __init__(self, sharpness: float = 2.0, dim: int = 2):
        super().__init__()
        if sharpness <= 0:
            raise ValueError("sharpness must be positive")
        if dim < 2:
            raise ValueError("MoonsModel needs at least two input coordinates")
        self.sharpness = float(sharpness)
        self.dim = int(dim)

    def decision(self, Z) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        P = Z[:, :2]
        upper = _arc_distance(P, (0.0, 0.0), 0.0, math.pi)
        lower = _arc_distance(P, (1.0, 0.5), -math.pi, 0.0)
        return upper - lower

    def _predict_batch(self, Z):
        if Z.shape[1] != self.dim:
            raise BlackBoxError(f"query dimension {Z.shape[1]} != model dimension {self.dim}")
        # scipy.special.expit would also do; keep this module numpy-only
        return 1.0 / (1.0 + np.exp(-self.sharpness * self.decision(Z)))


def _check_response(y, rid) -> float:
    if isinstance(y, bool) or not isinstance(y, (int, float)):
        raise BlackBoxError(f"response for id {rid} has non-numeric y: {y!r}")
    y = float(y)
    if not math.isfinite(y) or y < 0.0 or y > 1.0:
        raise BlackBoxError(f"response for id {rid} has out-of-range y={y!r}")
    return y


class ExternalProcessModel(BlackBox):
    """Client for a model served by a child process over stdin/stdout.

    Request lines are ``{"id": <uint>, "z": [...]}`` and response lines
    ``{"id": <uint>, "y": <float>}``; responses may arrive in any order and
    are matched by id.  A blank line asks the server to exit.
    """

    def __init__(self, command: Sequence[str], timeout: float = 30.0, env: dict | None = None):
        super().__init__()
        self.command = list(command)
        self.timeout = float(timeout)
        self._next_id = 0
        # a file, not a pipe, so a chatty server cannot block on stderr
        self._stderr = tempfile.TemporaryFile(mode="w+", encoding="utf-8")
        try:
            self._proc = subprocess.Popen(
                self.command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=self._stderr,
                text=True,
                encoding="utf-8",
                bufsize=1,
                env=env,
            )
        except OSError as exc:
            raise BlackBoxError(f"failed to spawn {self.command!r}: {exc}") from exc
        self._lines: queue.Queue = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self):
        for line in self._proc.stdout:
            self._lines.put(line)
        self._lines.put(None)

    def _predict_batch(self, Z):
        ids = list(range(self._next_id, self._next_id + Z.shape[0]))
        self._next_id += Z.shape[0]
        payload = "".join(
            json.dumps({"id": i, "z": [float(v) for v in z]}) + "\n" for i, z in zip(ids, Z)
        )
        try:
            self._proc.stdin.write(payload)
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError, ValueError) as exc:
            raise BlackBoxError(f"external model closed its input: {exc}") from exc

        wanted = set(ids)
        got: dict[int, float] = {}
        deadline = time.monotonic() + self.timeout
        while wanted - got.keys():
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise BlackBoxError(f"timed out after {self.timeout}s waiting for {len(wanted - got.keys())} responses")
            try:
                line = self._lines.get(timeout=remaining)
            except queue.Empty:
                continue
            if line is None:
                self._stderr.seek(0)
                err = self._stderr.read()
                raise BlackBoxError(f"external model exited early; stderr: {err.strip()[:500]}")
            line = line.strip()
            if not line:
                continue
            try:
                msg = json.loads(line)
                rid = msg["id"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise BlackBoxError(f"malformed response line: {line[:200]!r}") from exc
            if rid not in wanted:
                raise BlackBoxError(f"response carries unknown id {rid!r}")
            got[rid] = _check_response(msg.get("y"), rid)
        return np.array([got[i] for i in ids])

    def close(self):
        proc = getattr(self, "_proc", None)
        if proc is None or proc.poll() is not None:
            return
        try:
            proc.stdin.write("\n")
            proc.stdin.flush()
            proc.stdin.close()
            proc.wait(timeout=2)
        except (OSError, ValueError, subprocess.TimeoutExpired):
            proc.kill()
            proc.wait()
        finally:
            proc.stdout.close()
            self._stderr.close()


class CsvBatchModel(BlackBox):
    """Batch-file variant: write ``queries.csv``, run ``command <path>``, read ``predictions.csv``.

    ``predictions.csv`` is looked up next to ``queries.csv``.
    """

    def __init__(self, command: Sequence[str], timeout: float = 60.0, workdir: str | None = None):
        super().__init__()
        self.command = list(command)
        self.timeout = float(timeout)
        self.workdir = workdir
        self._next_id = 0

    def _predict_batch(self, Z):
        ids = list(range(self._next_id, self._next_id + Z.shape[0]))
        self._next_id += Z.shape[0]
        with tempfile.TemporaryDirectory(dir=self.workdir) as tmp:
            qpath = os.path.join(tmp, "queries.csv")
            with open(qpath, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(["id"] + [f"z{j}" for j in range(Z.shape[1])])
                for i, z in zip(ids, Z):
                    w.writerow([i] + [repr(float(v)) for v in z])
            try:
                res = subprocess.run(self.command + [qpath], capture_output=True, text=True, timeout=self.timeout)
            except subprocess.TimeoutExpired as exc:
                raise BlackBoxError(f"batch model timed out after {self.timeout}s") from exc
            except OSError as exc:
                raise BlackBoxError(f"failed to spawn {self.command!r}: {exc}") from exc
            if res.returncode != 0:
                raise BlackBoxError(f"batch model exited with {res.returncode}: {res.stderr.strip()[:500]}")
            ppath = os.path.join(tmp, "predictions.csv")
            if not os.path.exists(ppath):
                raise BlackBoxError("batch model did not write predictions.csv")
            got = {}
            with open(ppath, newline="", encoding="utf-8") as fh:
                reader = csv.DictReader(fh)
                if reader.fieldnames is None or not {"id", "y"} <= set(reader.fieldnames):
                    raise BlackBoxError("predictions.csv must have header id,y")
                for row in reader:
                    try:
                        rid, y = int(row["id"]), float(row["y"])
                    except (TypeError, ValueError) as exc:
                        raise BlackBoxError(f"malformed prediction row {row!r}") from exc
                    got[rid] = _check_response(y, rid)
        missing = [i for i in ids if i not in got]
        if missing:
            raise BlackBoxError(f"predictions.csv is missing {len(missing)} ids")
        return np.array([got[i] for i in ids])


def external_predict(endpoint: dict, zs) -> np.ndarray:
    """One-shot helper: spawn the endpoint, score ``zs``, shut it down."""
    with make_external(endpoint) as bb:
        return bb.batch_predict(zs)


def make_external(endpoint: dict) -> BlackBox:
    mode = endpoint.get("mode", "lines")
    command = endpoint["command"]
    if isinstance(command, str):
        command = [command]
    if mode == "lines":
        return ExternalProcessModel(command, timeout=endpoint.get("timeout", 30.0))
    if mode == "csv":
        return CsvBatchModel(command, timeout=endpoint.get("timeout", 60.0))
    raise ValueError(f"unknown external mode {mode!r}")


def serve_lines(model: BlackBox, stdin=None, stdout=None):
    """Serve ``model`` over the line protocol until EOF or a blank line.

    Used by the test fixtures and handy for wrapping any in-process model.
    """
    stdin = stdin or sys.stdin
    stdout = stdout or sys.stdout
    for line in stdin:
        line = line.strip()
        if not line:
            break
        msg = json.loads(line)
        y = model.predict(np.asarray(msg["z"], dtype=float))
        stdout.write(json.dumps({"id": msg["id"], "y": y}) + "\n")
        stdout.flush()
