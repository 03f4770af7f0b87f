"""Line-oriented request/response protocol with a long-lived child process."""

from __future__ import annotations

import collections
import queue
import shlex
import subprocess
import threading
import time

DEFAULT_TIMEOUT_S = 30.0


class EngineError(RuntimeError):
    """An external engine crashed, timed out or answered out of protocol."""

    def __init__(self, message: str, diagnostics: str = ""):
        super().__init__(message + (f"\n--- engine stderr ---\n{diagnostics}" if diagnostics else ""))
        self.diagnostics = diagnostics


class LineProcess:
    """One child process; one request in flight at a time."""

    def __init__(self, command, timeout_s: float = DEFAULT_TIMEOUT_S, cwd=None):
        self.argv = shlex.split(command) if isinstance(command, str) else list(command)
        self.timeout_s = timeout_s
        self.cwd = cwd
        self._proc = None
        self._lines = None
        self._stderr = collections.deque(maxlen=50)
        self._lock = threading.Lock()

    def _start(self):
        try:
            self._proc = subprocess.Popen(
                self.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=subprocess.PIPE,
                text=True, encoding="utf-8", bufsize=1, cwd=self.cwd,
            )
        except OSError as exc:
            raise EngineError(f"cannot start engine {self.argv!r}: {exc}") from None
        self._lines = queue.Queue()
        threading.Thread(target=self._pump, args=(self._proc.stdout, self._lines), daemon=True).start()
        threading.Thread(target=self._drain, args=(self._proc.stderr,), daemon=True).start()

    @staticmethod
    def _pump(stream, q):
        for line in stream:
            q.put(line.rstrip("\r\n"))
        q.put(None)

    def _drain(self, stream):
        for line in stream:
            self._stderr.append(line.rstrip("\n"))

    @property
    def diagnostics(self) -> str:
        return "\n".join(self._stderr)

    def request(self, line: str, done) -> list[str]:
        """Send one request line; collect response lines until ``done(line)`` is true.

        The terminating line is included in the result.
        """
        with self._lock:
            if self._proc is None or self._proc.poll() is not None:
                self._start()
            try:
                self._proc.stdin.write(line + "\n")
                self._proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                self._fail(f"engine closed its input ({exc})")
            deadline = time.monotonic() + self.timeout_s
            out = []
            while True:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    self._fail(f"engine timed out after {self.timeout_s:g} s")
                try:
                    resp = self._lines.get(timeout=remaining)
                except queue.Empty:
                    self._fail(f"engine timed out after {self.timeout_s:g} s")
                if resp is None:
                    self._fail(f"engine exited (status {self._proc.wait()}) mid-response")
                out.append(resp)
                if done(resp):
                    return out

    def _fail(self, message):
        self.close(kill=True)
        time.sleep(0.05)  # let the stderr drain thread catch up
        raise EngineError(message, self.diagnostics)

    def close(self, kill: bool = False):
        proc, self._proc = self._proc, None
        if proc is None:
            return
        try:
            if kill:
                proc.kill()
            else:
                proc.stdin.close()
                proc.wait(timeout=5)
        except (OSError, subprocess.TimeoutExpired):
            proc.kill()
        finally:
            try:
                proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
