import pytest

from snippetfuzz.config import CampaignConfig
from snippetfuzz.mock import MockDevice, builtin_corpus, load_profile
from snippetfuzz.orchestrator import Campaign
from snippetfuzz.similarity import Response, ResponsePool
from snippetfuzz.transport import LoopbackSession, ResetRestarter

# Replies from the worked probing example for {"on":true}.
R0 = b'{"success":{"/lights/1/state/on":true}}'
R1 = b'{"error":{"type":2,"address":"/lights/1/state","description":"body contains invalid json"}}'
R3 = b'{"error":{"type":6,"address":"/lights/1/state/n","description":"parameter, n, not available"}}'
R4 = b'{"error":{"type":6,"address":"/lights/1/state/o","description":"parameter, o, not available"}}'
ON_TRUE = b'{"on":true}'


@pytest.fixture
def table_pool():
    """Categories 0..3 as numbered in the worked example, all with self-similarity 1."""
    pool = ResponsePool(("m", 0))
    for probe, r in ((ON_TRUE, R0), (b'"on":true}', R1), (b'{"n":true}', R3), (b'{"o":true}', R4)):
        pool.add(Response(r), probe, 1.0)
    return pool


def make_campaign(profile="jsonlike", corpus=None, **cfg):
    device = MockDevice(load_profile(profile))
    session = LoopbackSession(device)
    corpus = corpus if corpus is not None else builtin_corpus(profile)
    config = CampaignConfig(rng_seed=cfg.pop("rng_seed", 0), **cfg)
    return Campaign(corpus, session, config, restarter=ResetRestarter(device)), device


@pytest.fixture
def campaign_factory():
    return make_campaign
