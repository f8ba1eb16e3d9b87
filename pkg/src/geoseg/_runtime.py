"""Process-level knobs: worker count and crash-point fault injection.

``GEOSEG_WORKERS`` caps the size of worker pools.  ``GEOSEG_CRASH_AT=k``
terminates the process abruptly (``os._exit``) at the k-th crash point hit,
which is how the resume tests simulate power loss.  ``GEOSEG_CRASH_REPORT``
names a file that receives the number of crash points hit at exit, so a
harness can learn how many kill sites an uninterrupted run passes through.
"""

import atexit
import os

CRASH_EXIT_CODE = 77

_hits = 0
_report_registered = False


def worker_count(requested=None):
    if requested is not None:
        n = int(requested)
    else:
        env = os.environ.get("GEOSEG_WORKERS")
        n = int(env) if env else (os.cpu_count() or 1)
    return max(1, n)


def fault_injection_active():
    return "GEOSEG_CRASH_AT" in os.environ or "GEOSEG_CRASH_REPORT" in os.environ


def _write_report():
    path = os.environ.get("GEOSEG_CRASH_REPORT")
    if path:
        with open(path, "w") as fh:
            fh.write(str(_hits))


def crash_point(label=""):
    """Count a potential kill site; die here if it is the configured one."""
    global _hits, _report_registered
    if not fault_injection_active():
        return
    if not _report_registered:
        atexit.register(_write_report)
        _report_registered = True
    _hits += 1
    target = os.environ.get("GEOSEG_CRASH_AT")
    if target is not None and _hits == int(target):
        os._exit(CRASH_EXIT_CODE)


def crash_hits():
    return _hits
