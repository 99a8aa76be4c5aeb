import json

import pytest

from gcgts.corpus import generate_synthetic_corpus, parse_corpus
from gcgts.model import ModelConfig

PRICE = {
    "chars": list("原材料价格上涨。"),
    "words": [[0, 3], [3, 5], [5, 7], [7, 8]],
    "pos": ["NN", "NN", "VV", "PU"],
    "deps": [{"head": 1, "rel": "compound:nn"}, {"head": 2, "rel": "nsubj"},
             {"head": -1, "rel": "root"}, {"head": 2, "rel": "punct"}],
    "aspects": [[0, 5]],
    "opinions": [[5, 7]],
    "pairs": [[0, 0]],
}


@pytest.fixture
def price_line():
    return json.dumps(PRICE, ensure_ascii=False)


@pytest.fixture
def price(price_line):
    return parse_corpus([price_line])[0]


@pytest.fixture(scope="session")
def corpus20():
    return generate_synthetic_corpus(7, 20)


@pytest.fixture
def tiny_config():
    def make(**kw):
        base = dict(d_h=8, d_r=4, d_p=4, d_beta=4, d_g=8, d_z=8)
        base.update(kw)
        return ModelConfig(**base)
    return make


def pytest_terminal_summary(terminalreporter):
    from _util import ACCEPTANCE
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for status, name, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{status}  {name}: {detail}")
