#!/usr/bin/env python3
"""Smoke test for the lsnap_py extension module.

Builds nothing itself: run `cargo build -p lambda-snap-py` (or --release)
first. The script locates the compiled cdylib, imports it, and exercises the
snapshot objects, the explorer and the history checker.
"""

import json
import shutil
import sys
import tempfile
import threading
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def import_module():
    candidates = [
        REPO / "target" / "release" / "liblsnap_py.so",
        REPO / "target" / "debug" / "liblsnap_py.so",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("liblsnap_py.so not found; run: cargo build -p lambda-snap-py")
    stage = Path(tempfile.mkdtemp(prefix="lsnap-py-"))
    shutil.copy2(built, stage / "lsnap_py.so")
    sys.path.insert(0, str(stage))
    import lsnap_py

    return lsnap_py


PASSED = 0


def ok(name, condition):
    global PASSED
    if not condition:
        sys.exit(f"FAIL: {name}")
    PASSED += 1
    print(f"ok: {name}")


def main():
    lsnap_py = import_module()
    ok("module imports", hasattr(lsnap_py, "__version__"))

    # --- Snap1 basics -----------------------------------------------------
    snap = lsnap_py.Snap1(3, 2, 1)
    ok("fresh scan is empty", snap.scan() == [None, None, None])
    snap.update(0, 0, 5)
    snap.update(0, 1, 7)
    ok("updates become visible", snap.scan() == [5, 7, None])
    ok("partial scan restricts", snap.partial_scan([1]) == {1: 7})
    try:
        snap.update(0, 9, 1)
        sys.exit("FAIL: out-of-range component accepted")
    except ValueError:
        ok("component range is validated", True)

    # --- LambdaSnap under real threads -------------------------------------
    obj = lsnap_py.LambdaSnap(2, 4, [2, 3])
    ok("scanner count getter", obj.scanner_count == 2)
    stop = threading.Event()
    seen = []

    def updater(process):
        k = 0
        while not stop.is_set():
            obj.update(process, k % 2, (process << 40) | k)
            k += 1

    def scanner(rank):
        while not stop.is_set():
            seen.append(obj.scan(rank))

    threads = [threading.Thread(target=updater, args=(p,)) for p in (0, 1)]
    threads += [threading.Thread(target=scanner, args=(r,)) for r in (0, 1)]
    for t in threads:
        t.start()
    import time

    time.sleep(0.3)
    stop.set()
    for t in threads:
        t.join()
    ok("threads made progress", len(seen) > 0)
    final = obj.scan(0)
    ok("final scan has both components", len(final) == 2 and all(v is not None for v in final))

    # --- history checker ----------------------------------------------------
    lin = "\n".join(
        [
            json.dumps({"stamp": 1, "kind": "invoke", "op": "update", "process": 0,
                        "args": {"component": 0, "value": 5}, "result": None}),
            json.dumps({"stamp": 2, "kind": "response", "op": "update", "process": 0,
                        "args": None, "result": "unit"}),
            json.dumps({"stamp": 3, "kind": "invoke", "op": "scan", "process": 1,
                        "args": None, "result": None}),
            json.dumps({"stamp": 4, "kind": "response", "op": "scan", "process": 1,
                        "args": None, "result": {"view": [5]}}),
        ]
    )
    good, witness = lsnap_py.check_history_text(lin)
    ok("sequential history is linearizable", good and witness == [0, 1])

    bad = lin.replace('{"view": [5]}', '{"view": [9]}')
    good, witness = lsnap_py.check_history_text(bad)
    ok("impossible read is rejected", not good and witness is None)

    # --- explorer ------------------------------------------------------------
    scenario = json.dumps(
        {
            "object": "lsnap",
            "m": 1,
            "scanners": [1],
            "scripts": [
                [{"op": "update", "component": 0, "value": 5}],
                [{"op": "scan"}],
            ],
        }
    )
    report = json.loads(lsnap_py.enumerate_scenario(scenario, branch_steps=8))
    ok("exhaustive exploration is clean",
       report["exhaustive"] and not report["violations"] and report["schedules_explored"] > 1)

    a = lsnap_py.stress_scenario(scenario, 7, 200)
    b = lsnap_py.stress_scenario(scenario, 7, 200)
    ok("stress is reproducible from its seed", a == b)
    ok("stress is clean", not json.loads(a)["violations"])

    # Replay a fixed schedule deterministically.
    linearizable, complete, history = lsnap_py.replay_schedule(scenario, [0] * 11 + [1] * 28)
    ok("replay is linearizable and complete", linearizable and complete)
    again = lsnap_py.replay_schedule(scenario, [0] * 11 + [1] * 28)
    ok("replay is bit-exact", again == (linearizable, complete, history))

    print(f"PASS ({PASSED} checks)")


if __name__ == "__main__":
    main()
