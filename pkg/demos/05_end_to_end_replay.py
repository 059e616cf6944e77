"""The whole loop, offline: corpus -> gold targets -> replay -> report.

A replay generator serves canned decodes keyed by turn id, standing in for
a real model server behind the HTTP contract. Canning the gold targets
themselves gives an oracle run (every score 1.0), which doubles as a
self-test of the pipeline; swap in real samples to study voting behavior.
"""

import json
import tempfile
from pathlib import Path

from pcqa import (
    ReplayGenerator,
    RunConfig,
    Task,
    build_examples,
    load_corpus,
    run_eval,
)
from pcqa.generation import GeneratedOutput

CORPUS = [
    {
        "uid": "demo-dialogue",
        "table": {
            "uid": "demo-doc",
            "cells": [
                ["Region", "2018", "2019"],
                ["Americas", "88", "105"],
                ["EMEA", "70", "84"],
            ],
        },
        "paragraphs": [
            {"uid": "p1", "order": 1, "text": "Revenue grew across all regions in 2019."}
        ],
        "questions": [
            {
                "uid": "q1", "order": 1,
                "question": "What was the revenue for Americas in 2019?",
                "answer": ["105"], "answer_type": "span", "answer_from": "table",
                "derivation": "", "scale": "", "req_clari": False, "clari_question": "",
            },
            {
                "uid": "q2", "order": 2,
                "question": "What is the percentage change of it?",
                "answer": "Which period are you asking about?",
                "answer_type": "clarification", "answer_from": "table",
                "derivation": "", "scale": "", "req_clari": True,
                "clari_question": "Which period are you asking about?",
            },
            {
                "uid": "q3", "order": 3,
                "question": "From 2018 to 2019.",
                "answer": 0.1932, "answer_type": "arithmetic", "answer_from": "table",
                "derivation": "(105-88)/88", "scale": "", "req_clari": False,
                "clari_question": "",
            },
        ],
    }
]

with tempfile.TemporaryDirectory() as tmp:
    corpus_path = Path(tmp) / "corpus.json"
    corpus_path.write_text(json.dumps(CORPUS))
    corpus = load_corpus(corpus_path)

    # Oracle replay: the canned greedy decode for each turn is its gold target.
    entries = {}
    for example in build_examples(corpus, Task.MULTI):
        print("turn", example.turn_id, "target:", example.target_text)
        entries[(example.turn_id, "greedy")] = [GeneratedOutput(text=example.target_text)]
    generator = ReplayGenerator(entries)

    report, logs = run_eval(corpus, generator, RunConfig(mode="greedy"))
    print()
    for log in logs:
        print(f"{log['turn_id']}: responded {log['final_response']!r}  em={log['em']}")
    print()
    print(report.format_text())

# The same run is available from the command line:
#   pcqa run corpus.json --fixture replay.jsonl --mode cv --report both
# and a live model server plugs in with --endpoint http://host:port
