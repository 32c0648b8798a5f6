import numpy as np
import pytest

from seesaw_neat import neat

_pytest_config = None


def pytest_configure(config):
    global _pytest_config
    _pytest_config = config


def terminal_reporter():
    """The live terminal writer, for verdict lines that must survive capture."""
    if _pytest_config is None:
        return None
    return _pytest_config.pluginmanager.get_plugin("terminalreporter")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def build_genome(conn_specs, num_inputs=1, num_outputs=1, hidden=(), biases=None):
    """Hand-build a genome from (innovation, src, dst, weight[, enabled]) tuples."""
    nodes = {}
    for i in range(num_inputs):
        nodes[i] = neat.NodeGene(i, "input")
    for j in range(num_outputs):
        nodes[num_inputs + j] = neat.NodeGene(num_inputs + j, "output")
    for h in hidden:
        nodes[h] = neat.NodeGene(h, "hidden")
    if biases:
        for nid, b in biases.items():
            nodes[nid].bias = b
    conns = {}
    for spec in conn_specs:
        innov, src, dst, w = spec[:4]
        enabled = spec[4] if len(spec) > 4 else True
        conns[innov] = neat.ConnectionGene(innov, src, dst, w, enabled)
    return neat.Genome(nodes, conns)


def random_evolved_genome(rng, cfg=None, registry=None, steps=10):
    """Random genome produced by running the real operators for a few rounds."""
    cfg = cfg or neat.NeatConfig(num_inputs=3, num_outputs=2,
                                 add_connection_prob=0.5, delete_connection_prob=0.2,
                                 add_node_prob=0.4, delete_node_prob=0.1)
    registry = registry or neat.InnovationRegistry()
    g = neat.Genome.initial(cfg, registry, rng)
    for _ in range(steps):
        g = neat.mutate_structural(neat.mutate_weights(g, cfg, rng),
                                   registry, cfg, rng)
    return g, cfg, registry
