"""Drive a human-labeler experiment through the HTTP API: serve it in a
thread, fetch task batches like the browser console would, answer them,
and advance the loop. Two annotators, attention checks included."""
import json
import threading
import time
import urllib.request

import numpy as np
import uvicorn

from rareloop.corpus import Corpus
from rareloop.experiment import ExperimentConfig, ExperimentRunner
from rareloop.server import create_app

rng = np.random.default_rng(3)
filler = "river stone market morning evening coffee paper train garden window".split()
corpus = Corpus()
for i in range(400):
    body = " ".join(rng.choice(filler, size=6))
    u = rng.random()
    if u < 0.10:
        text = f"i lost my job today {body}"
    elif u < 0.20:
        text = f"i got hired today at the {body}"
    else:
        text = body
    corpus.add(f"h{i:04d}", text)

config = ExperimentConfig(
    classes=("lost_job", "is_hired"),
    strategy="uncertainty",
    seeds={
        "lost_job": [{"kind": "ordered", "pattern": ["lost", "job"],
                      "specificity": 0.95, "frequency": 0.10}],
        "is_hired": [{"kind": "ordered", "pattern": ["got", "hired"],
                      "specificity": 0.95, "frequency": 0.10}],
    },
    labeler="human",
    seed=19,
    batch_size=6,
    init_per_seed=10,
    rank_schedule=((1, 10), (21, 30), (41, 50)),
    metrics_B=100,
    calibration_B=100,
    n_fit_seeds=3,
    top_size=50,
    max_iterations=1,
)

runner = ExperimentRunner(config, corpus=corpus)
state = runner.initialize()
app = create_app(runner, state)

server = uvicorn.Server(uvicorn.Config(app, port=8765, log_level="error"))
threading.Thread(target=server.run, daemon=True).start()
while not server.started:
    time.sleep(0.05)
base = "http://127.0.0.1:8765"


def get(path):
    with urllib.request.urlopen(base + path) as resp:
        return json.loads(resp.read())


def post(path, payload=None):
    body = json.dumps(payload).encode() if payload is not None else b"[]"
    req = urllib.request.Request(
        base + path, data=body, headers={"content-type": "application/json"}
    )
    with urllib.request.urlopen(req) as resp:
        return json.loads(resp.read())


def answer(text):
    return {
        "lost_job": "yes" if "lost my job" in text else "no",
        "is_hired": "yes" if "got hired" in text else "no",
    }


session = get("/api/session")
print(f"session: {session['queue_size']} docs queued, "
      f"{session['required_annotations']} annotations each")

for annotator in ("ada", "ben"):
    labeled = 0
    while True:
        batch = get(f"/api/tasks/next?annotator={annotator}&n=50")
        if not batch["tasks"]:
            break
        records = [
            {"doc_id": t["doc_id"], "annotator": annotator,
             "answers": answer(t["text"])}
            for t in batch["tasks"]
        ]
        labeled += post("/api/labels", records)["accepted"]
    print(f"{annotator} answered {labeled} tasks (attention checks among them)")

advanced = post("/api/iterations/advance")
print(f"advanced: phase={advanced['phase']}")

server.should_exit = True
