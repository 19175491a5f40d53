"""Executes one payload and reports a single-line JSON verdict on stdout.

Usage: runner_shim.py <payload.json>

Exit codes: 0 pass, 1 fail or error, 2 shim fault.
"""
import json
import linecache
import os
import sys
import time
import traceback

CANDIDATE_FILE = "<candidate>"
TEST_FILE = "<test>"
TRACEBACK_LIMIT = 8000


def _emit(out, verdict, code):
    for stream in (sys.stdout, sys.stderr):
        try:
            stream.flush()
        except BaseException:  # noqa: BLE001
            pass
    try:
        out.write("\n" + json.dumps(verdict, ensure_ascii=False) + "\n")
        out.flush()
    finally:
        os._exit(code)


def _message(exc):
    try:
        return str(exc)
    except BaseException:
        return "<unprintable exception>"


def _traceback_tail(exc):
    # Only frames from the executed sources are reported; shim frames would
    # leak temporary paths into otherwise deterministic feedback.
    frames = [
        f for f in traceback.extract_tb(exc.__traceback__)
        if f.filename in (CANDIDATE_FILE, TEST_FILE)
    ]
    lines = ["Traceback (most recent call last):\n"]
    lines.extend(traceback.format_list(frames))
    lines.extend(traceback.format_exception_only(type(exc), exc))
    text = "".join(lines)
    return text[-TRACEBACK_LIMIT:]


def main():
    start = time.perf_counter()
    out = os.fdopen(os.dup(1), "w", encoding="utf-8", errors="replace")

    def elapsed_ms():
        return int((time.perf_counter() - start) * 1000)

    try:
        with open(sys.argv[1], encoding="utf-8") as fh:
            payload = json.load(fh)
        program = payload["prompt"] + "\n" + payload["candidate"] + "\n"
        test = payload["test"]
        entry_point = payload["entry_point"]
    except BaseException as exc:  # noqa: BLE001
        _emit(out, {
            "status": "error",
            "error_class": "ShimFault",
            "message": _message(exc)[:2000],
            "duration_ms": elapsed_ms(),
        }, 2)
        return

    linecache.cache[CANDIDATE_FILE] = (len(program), None, program.splitlines(True), CANDIDATE_FILE)
    namespace = {"__name__": "__main__", "__builtins__": __builtins__}
    try:
        exec(compile(program, CANDIDATE_FILE, "exec"), namespace)
        exec(compile(test, TEST_FILE, "exec"), namespace)
        for name in ("check", entry_point):
            if name not in namespace:
                raise NameError("name '%s' is not defined" % name)
        namespace["check"](namespace[entry_point])
    except BaseException as exc:  # noqa: BLE001
        status = "fail" if isinstance(exc, AssertionError) else "error"
        _emit(out, {
            "status": status,
            "error_class": type(exc).__name__,
            "message": _message(exc)[:2000],
            "traceback_tail": _traceback_tail(exc),
            "duration_ms": elapsed_ms(),
        }, 1)
        return
    _emit(out, {"status": "pass", "duration_ms": elapsed_ms()}, 0)


if __name__ == "__main__":
    main()
