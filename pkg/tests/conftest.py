from __future__ import annotations

import os

from hypothesis import HealthCheck, settings

from tntprove.lang import parse_program

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CORPUS = os.path.join(ROOT, "corpus")

# property suites: 200 seeded cases each
settings.register_profile("repo", max_examples=200, deadline=None, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large,
                                                 HealthCheck.filter_too_much])
settings.load_profile("repo")


def corpus_path(name: str) -> str:
    return os.path.join(CORPUS, name if name.endswith(".imp") else name + ".imp")


def load(name: str):
    with open(corpus_path(name)) as fh:
        return parse_program(fh.read())


def corpus_names():
    return sorted(f[:-4] for f in os.listdir(CORPUS) if f.endswith(".imp"))
