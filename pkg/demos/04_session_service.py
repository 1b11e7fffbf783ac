#!/usr/bin/env python3
"""Drive the HTTP session API end to end, playing the human yourself.

Starts the service in a background thread on a local port, walks the
ambiguous flow (question -> clarifying question -> clarification -> final
answer) over plain HTTP, then the direct flow for the precise twin. This is
exactly the contract the browser chat client consumes.
"""

import threading
import time

import requests
import uvicorn

from clam.backend import ScriptedBackend, load_script_rules
from clam.corpus import bundled_sample_path
from clam.service import ServiceConfig, create_app

PORT = 8731
BASE = f"http://127.0.0.1:{PORT}"

backend = ScriptedBackend(load_script_rules(bundled_sample_path("fixture_rules.json")))
app = create_app(ServiceConfig(backend=backend, backend_name="scripted:fixture"))
server = uvicorn.Server(uvicorn.Config(app, host="127.0.0.1", port=PORT, log_level="warning"))
threading.Thread(target=server.run, daemon=True).start()

while True:
    try:
        if requests.get(f"{BASE}/healthz", timeout=1).ok:
            break
    except requests.RequestException:
        time.sleep(0.05)

print("service config:", requests.get(f"{BASE}/config").json(), "\n")


def show(view):
    print(f"  state={view['state']}")
    for turn in view["turns"]:
        print(f"    {turn['kind']:20s} {turn['text']}")
    if view["score"]:
        print(f"    score {view['score']['logprob_true']:+.2f} -> {view['decision']}")
    print()


print("=== ambiguous flow ===")
sid = requests.post(f"{BASE}/sessions", json={}).json()["session_id"]
view = requests.post(
    f"{BASE}/sessions/{sid}/messages", json={"text": "On what date did he land on the moon?"}
).json()
show(view)
print("  (the human replies...)")
view = requests.post(f"{BASE}/sessions/{sid}/messages", json={"text": "Alan Bean"}).json()
show(view)

print("=== direct flow ===")
sid = requests.post(f"{BASE}/sessions", json={}).json()["session_id"]
view = requests.post(
    f"{BASE}/sessions/{sid}/messages",
    json={"text": "On what date did Alan Bean land on the moon?"},
).json()
show(view)

server.should_exit = True
