import sys
import threading
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from rbmm.frontend import load_file, load_program
from rbmm.transform import annotate_program

CORPUS = Path(__file__).parent.parent / "corpus"
GOLDENS = Path(__file__).parent / "goldens"

QSORT_SRC = (CORPUS / "qsort.rl").read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def corpus_dir():
    return CORPUS


@pytest.fixture(scope="session")
def qsort_ann():
    return annotate_program(load_file(CORPUS / "qsort.rl"))


@pytest.fixture(scope="session")
def corpus_anns():
    out = {}
    for f in sorted(CORPUS.glob("*.rl")):
        out[f.name] = annotate_program(load_file(f))
    return out


def run_deep(fn, *args, **kwargs):
    """Interpreter runs recurse one native frame per call; give them room."""
    result = {}

    def work():
        old = sys.getrecursionlimit()
        sys.setrecursionlimit(4_000_000)
        try:
            result["value"] = fn(*args, **kwargs)
        except BaseException as e:
            result["error"] = e
        finally:
            sys.setrecursionlimit(old)

    old_size = threading.stack_size(512 * 1024 * 1024)
    try:
        t = threading.Thread(target=work)
        t.start()
        t.join()
    finally:
        threading.stack_size(old_size)
    if "error" in result:
        raise result["error"]
    return result["value"]


def region_names(ann, key, nodes):
    return sorted(ann.pointsto.region_name(key, n) for n in nodes)


def node_of(ann, key, var):
    return ann.pointsto.graphs[key].node_of(var)
