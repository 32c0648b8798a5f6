"""NEAT genomes, operators, speciation and recurrent network evaluation.

Direct-encoding neuroevolution: genomes are sets of node genes and
connection genes tagged with global innovation numbers.  Networks are
recurrent-capable (cycles allowed) and use sigmoid activation with sum
aggregation throughout.  Defaults follow the hyper-parameter table this
toolkit is configured for (population 64, compatibility threshold 3.0,
weight range [-30, 30], ...).
"""

import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import (
    EmptyPopulation,
    IncompatibleIO,
    LengthMismatch,
    ShapeMismatch,
    BadConfig,
)

GENOME_FORMAT = "seesaw-neat-genome"
GENOME_VERSION = 1


@dataclass
class NeatConfig:
    """All evolution hyper-parameters, with the standard defaults."""

    num_inputs: int = 20
    num_outputs: int = 5
    population_size: int = 64
    fitness_criterion: str = "max"
    reset_on_extinction: bool = True
    activation: str = "sigmoid"
    aggregation: str = "sum"
    compat_disjoint_coeff: float = 1.0   # shared by disjoint and excess genes
    compat_weight_coeff: float = 0.4
    compat_threshold: float = 3.0
    compat_normalizer: float = 1.0       # N in the distance formula; overridable
    add_connection_prob: float = 0.05
    delete_connection_prob: float = 0.05
    add_node_prob: float = 0.03
    delete_node_prob: float = 0.03
    feed_forward: bool = False
    weight_min: float = -30.0
    weight_max: float = 30.0
    weight_mutate_power: float = 0.05
    weight_mutate_rate: float = 0.8
    weight_replace_rate: float = 0.1
    max_stagnation: int = 15
    species_elitism: int = 2
    elitism_threshold: int = 5
    survival_threshold: float = 0.2
    weight_init_std: float = 1.0

    def __post_init__(self):
        if self.population_size < 2:
            raise BadConfig("population_size must be >= 2")
        if self.num_inputs < 1 or self.num_outputs < 1:
            raise BadConfig("need at least one input and one output")
        for name in ("add_connection_prob", "delete_connection_prob",
                     "add_node_prob", "delete_node_prob",
                     "weight_mutate_rate", "weight_replace_rate",
                     "survival_threshold"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise BadConfig(f"{name} must be in [0, 1], got {p}")
        if self.weight_min >= self.weight_max:
            raise BadConfig("weight_min must be < weight_max")
        if self.fitness_criterion != "max":
            raise BadConfig("only fitness_criterion='max' is supported")
        if self.activation != "sigmoid" or self.aggregation != "sum":
            raise BadConfig("only sigmoid activation with sum aggregation is supported")

    def clamp(self, w):
        return min(self.weight_max, max(self.weight_min, float(w)))


@dataclass
class NodeGene:
    id: int
    kind: str                      # 'input' | 'output' | 'hidden'
    bias: float = 0.0
    activation: str = "sigmoid"
    aggregation: str = "sum"

    def copy(self):
        return NodeGene(self.id, self.kind, self.bias, self.activation, self.aggregation)


@dataclass
class ConnectionGene:
    innovation: int
    src: int
    dst: int
    weight: float
    enabled: bool = True

    def copy(self):
        return ConnectionGene(self.innovation, self.src, self.dst, self.weight, self.enabled)


class InnovationRegistry:
    """Global historical markings for structural events.

    The same (src, dst) pair always maps to the same innovation number for
    the lifetime of a run, and splitting the same connection gene yields the
    same new node id, so parallel structural mutations stay alignable in
    crossover.  Mutation is single-threaded by contract.
    """

    def __init__(self, next_node_id=0, next_innovation=0):
        self.conn_ids = {}       # (src, dst) -> innovation
        self.split_ids = {}      # connection innovation -> new node id
        self.next_node_id = next_node_id
        self.next_innovation = next_innovation

    def connection_innovation(self, src, dst):
        key = (src, dst)
        if key not in self.conn_ids:
            self.conn_ids[key] = self.next_innovation
            self.next_innovation += 1
        return self.conn_ids[key]

    def split_node_id(self, conn_innovation):
        if conn_innovation not in self.split_ids:
            self.split_ids[conn_innovation] = self.next_node_id
            self.next_node_id += 1
        return self.split_ids[conn_innovation]

    def to_dict(self):
        return {
            "conn_ids": [[s, d, i] for (s, d), i in sorted(self.conn_ids.items())],
            "split_ids": sorted([c, n] for c, n in self.split_ids.items()),
            "next_node_id": self.next_node_id,
            "next_innovation": self.next_innovation,
        }

    @classmethod
    def from_dict(cls, d):
        reg = cls(d["next_node_id"], d["next_innovation"])
        reg.conn_ids = {(s, dd): i for s, dd, i in d["conn_ids"]}
        reg.split_ids = {c: n for c, n in d["split_ids"]}
        return reg


class Genome:
    """One NEAT individual: node genes, connection genes, optional fitness."""

    def __init__(self, nodes, connections, fitness=None):
        self.nodes = nodes              # {node_id: NodeGene}
        self.connections = connections  # {innovation: ConnectionGene}
        self.fitness = fitness

    @classmethod
    def initial(cls, cfg, registry, rng):
        """Minimal starting genome: inputs fully connected to outputs, no hidden nodes."""
        nodes = {}
        for i in range(cfg.num_inputs):
            nodes[i] = NodeGene(i, "input")
        for j in range(cfg.num_outputs):
            oid = cfg.num_inputs + j
            nodes[oid] = NodeGene(oid, "output",
                                  bias=cfg.clamp(rng.normal(0.0, cfg.weight_init_std)))
        registry.next_node_id = max(registry.next_node_id, cfg.num_inputs + cfg.num_outputs)
        conns = {}
        for i in range(cfg.num_inputs):
            for j in range(cfg.num_outputs):
                dst = cfg.num_inputs + j
                innov = registry.connection_innovation(i, dst)
                w = cfg.clamp(rng.normal(0.0, cfg.weight_init_std))
                conns[innov] = ConnectionGene(innov, i, dst, w)
        return cls(nodes, conns)

    def copy(self):
        return Genome({i: n.copy() for i, n in self.nodes.items()},
                      {i: c.copy() for i, c in self.connections.items()},
                      self.fitness)

    # -- structure queries ---------------------------------------------------

    def input_ids(self):
        return sorted(i for i, n in self.nodes.items() if n.kind == "input")

    def output_ids(self):
        return sorted(i for i, n in self.nodes.items() if n.kind == "output")

    def hidden_ids(self):
        return sorted(i for i, n in self.nodes.items() if n.kind == "hidden")

    def connection_pairs(self):
        return {(c.src, c.dst) for c in self.connections.values()}

    def size(self):
        return len(self.nodes), len(self.connections)

    def validate(self):
        """Raise if any structural invariant is broken."""
        pairs = set()
        for c in self.connections.values():
            if c.src not in self.nodes or c.dst not in self.nodes:
                raise ShapeMismatch(f"connection {c.innovation} references a missing node")
            if self.nodes[c.dst].kind == "input":
                raise ShapeMismatch(f"input node {c.dst} has an incoming connection")
            if (c.src, c.dst) in pairs:
                raise ShapeMismatch(f"duplicate connection pair {(c.src, c.dst)}")
            pairs.add((c.src, c.dst))

    # -- weight-vector view (stage-2 tuning) ----------------------------------

    def weight_vector(self):
        """Flatten enabled connection weights then non-input biases, in stable order."""
        weights = [self.connections[i].weight for i in sorted(self.connections)
                   if self.connections[i].enabled]
        biases = [self.nodes[i].bias for i in sorted(self.nodes)
                  if self.nodes[i].kind != "input"]
        return np.array(weights + biases, dtype=np.float64)

    def with_weight_vector(self, vec, cfg):
        """Inverse of weight_vector(); values clamped to the weight range."""
        enabled = [i for i in sorted(self.connections) if self.connections[i].enabled]
        biased = [i for i in sorted(self.nodes) if self.nodes[i].kind != "input"]
        vec = np.asarray(vec, dtype=np.float64)
        if vec.shape != (len(enabled) + len(biased),):
            raise LengthMismatch(
                f"expected {len(enabled) + len(biased)} values, got {vec.shape}")
        g = self.copy()
        for i, innov in enumerate(enabled):
            g.connections[innov].weight = cfg.clamp(vec[i])
        for j, nid in enumerate(biased):
            g.nodes[nid].bias = cfg.clamp(vec[len(enabled) + j])
        return g

    # -- serialization ---------------------------------------------------------

    def to_dict(self):
        return {
            "nodes": [asdict(self.nodes[i]) for i in sorted(self.nodes)],
            "connections": [asdict(self.connections[i]) for i in sorted(self.connections)],
            "fitness": self.fitness,
        }

    @classmethod
    def from_dict(cls, d):
        nodes = {n["id"]: NodeGene(**n) for n in d["nodes"]}
        conns = {c["innovation"]: ConnectionGene(**c) for c in d["connections"]}
        return cls(nodes, conns, d.get("fitness"))

    def save(self, path, cfg):
        doc = {"format": GENOME_FORMAT, "version": GENOME_VERSION,
               "config": asdict(cfg), "genome": self.to_dict()}
        with open(path, "w") as f:
            json.dump(doc, f, indent=1)

    @classmethod
    def load(cls, path):
        with open(path) as f:
            doc = json.load(f)
        if doc.get("format") != GENOME_FORMAT:
            raise ShapeMismatch(f"not a genome file: {path}")
        return cls.from_dict(doc["genome"]), NeatConfig(**doc["config"])


def extract_weight_vector(genome):
    return genome.weight_vector()


def apply_weight_vector(genome, vec, cfg):
    return genome.with_weight_vector(vec, cfg)


# -- compatibility distance ----------------------------------------------------

def compatibility_distance(a, b, cfg):
    """delta = c1*(D+E)/N + c3*mean|dw| over matching connection innovations."""
    ia, ib = set(a.connections), set(b.connections)
    matching = ia & ib
    mismatched = len(ia ^ ib)
    if matching:
        wbar = sum(abs(a.connections[i].weight - b.connections[i].weight)
                   for i in matching) / len(matching)
    else:
        wbar = 0.0
    return (cfg.compat_disjoint_coeff * mismatched / cfg.compat_normalizer
            + cfg.compat_weight_coeff * wbar)


# -- crossover -------------------------------------------------------------------

def crossover(parent_a, parent_b, rng):
    """Recombine two parents.

    Matching genes are chosen uniformly from either parent; disjoint and
    excess genes come from the fitter parent (ties favour parent_a).
    """
    if (parent_a.input_ids() != parent_b.input_ids()
            or parent_a.output_ids() != parent_b.output_ids()):
        raise IncompatibleIO("parents have different input/output node sets")

    fa = parent_a.fitness if parent_a.fitness is not None else float("-inf")
    fb = parent_b.fitness if parent_b.fitness is not None else float("-inf")
    if fb > fa:
        fit, other = parent_b, parent_a
    else:
        fit, other = parent_a, parent_b

    conns = {}
    for innov, gene in fit.connections.items():
        if innov in other.connections and rng.random() < 0.5:
            conns[innov] = other.connections[innov].copy()
        else:
            conns[innov] = gene.copy()

    nodes = {}
    needed = set(fit.input_ids()) | set(fit.output_ids())
    for gene in conns.values():
        needed.add(gene.src)
        needed.add(gene.dst)
    for nid in needed:
        in_a, in_b = nid in fit.nodes, nid in other.nodes
        if in_a and in_b:
            src = other if rng.random() < 0.5 else fit
        else:
            src = fit if in_a else other
        nodes[nid] = src.nodes[nid].copy()
    return Genome(nodes, conns)


# -- mutation -----------------------------------------------------------------

def mutate_weights(genome, cfg, rng):
    """Perturb/replace every weight and bias independently; returns a new genome.

    Per value: with prob weight_mutate_rate add N(0, power) noise; with the
    next weight_replace_rate slice of probability replace with U(min, max);
    otherwise leave unchanged.  Everything is clamped to the weight range.
    """
    g = genome.copy()

    def mutate_value(v):
        u = rng.random()
        if u < cfg.weight_mutate_rate:
            return cfg.clamp(v + rng.normal(0.0, cfg.weight_mutate_power))
        if u < cfg.weight_mutate_rate + cfg.weight_replace_rate:
            return cfg.clamp(rng.uniform(cfg.weight_min, cfg.weight_max))
        return v

    for innov in sorted(g.connections):
        g.connections[innov].weight = mutate_value(g.connections[innov].weight)
    for nid in sorted(g.nodes):
        if g.nodes[nid].kind != "input":
            g.nodes[nid].bias = mutate_value(g.nodes[nid].bias)
    return g


def mutate_structural(genome, registry, cfg, rng):
    """Independent Bernoulli attempts at the four structural mutations.

    Attempts that cannot apply (no free pair, no hidden node, ...) are no-ops.
    """
    g = genome.copy()
    if rng.random() < cfg.add_connection_prob:
        _add_connection(g, registry, cfg, rng)
    if rng.random() < cfg.delete_connection_prob:
        _delete_connection(g, rng)
    if rng.random() < cfg.add_node_prob:
        _add_node(g, registry, cfg, rng)
    if rng.random() < cfg.delete_node_prob:
        _delete_node(g, rng)
    return g


def _add_connection(g, registry, cfg, rng):
    sources = sorted(g.nodes)
    targets = [i for i in sources if g.nodes[i].kind != "input"]
    existing = g.connection_pairs()
    free = [(s, d) for s in sources for d in targets if (s, d) not in existing]
    if not free:
        return
    src, dst = free[int(rng.integers(len(free)))]
    innov = registry.connection_innovation(src, dst)
    w = cfg.clamp(rng.normal(0.0, cfg.weight_init_std))
    g.connections[innov] = ConnectionGene(innov, src, dst, w)


def _delete_connection(g, rng):
    if not g.connections:
        return
    innov = sorted(g.connections)[int(rng.integers(len(g.connections)))]
    del g.connections[innov]


def _add_node(g, registry, cfg, rng):
    enabled = [i for i in sorted(g.connections) if g.connections[i].enabled]
    if not enabled:
        return
    innov = enabled[int(rng.integers(len(enabled)))]
    old = g.connections[innov]
    old.enabled = False
    nid = registry.split_node_id(innov)
    if nid in g.nodes:  # split already present (can happen after crossover)
        old.enabled = True
        return
    g.nodes[nid] = NodeGene(nid, "hidden", bias=0.0)
    in_innov = registry.connection_innovation(old.src, nid)
    out_innov = registry.connection_innovation(nid, old.dst)
    g.connections[in_innov] = ConnectionGene(in_innov, old.src, nid, 1.0)
    g.connections[out_innov] = ConnectionGene(out_innov, nid, old.dst, old.weight)


def _delete_node(g, rng):
    hidden = g.hidden_ids()
    if not hidden:
        return
    nid = hidden[int(rng.integers(len(hidden)))]
    del g.nodes[nid]
    for innov in [i for i, c in g.connections.items() if nid in (c.src, c.dst)]:
        del g.connections[innov]


# -- speciation ------------------------------------------------------------------

@dataclass
class Species:
    key: int
    representative: Genome
    members: list = field(default_factory=list)
    best_fitness: float = float("-inf")
    stagnation: int = 0

    def champion(self):
        return max(self.members, key=lambda g: g.fitness)


def speciate(population, prev_species, cfg, next_key=None):
    """Assign genomes to species by compatibility distance.

    Each genome joins the first previous species whose representative lies
    within the threshold, else founds a new species.  Species stagnant for
    max_stagnation generations are removed, except the top species_elitism
    species by best-ever fitness.  Returns the updated species list (possibly
    empty, in which case the caller handles extinction).
    """
    if not population:
        raise EmptyPopulation("cannot speciate an empty population")
    if next_key is None:
        next_key = 1 + max((s.key for s in prev_species), default=-1)

    species = [Species(s.key, s.representative, [], s.best_fitness, s.stagnation)
               for s in prev_species]
    for genome in population:
        for sp in species:
            if compatibility_distance(genome, sp.representative, cfg) < cfg.compat_threshold:
                sp.members.append(genome)
                break
        else:
            species.append(Species(next_key, genome, [genome]))
            next_key += 1
    species = [sp for sp in species if sp.members]

    for sp in species:
        sp.representative = min(
            sp.members,
            key=lambda g: compatibility_distance(g, sp.representative, cfg))
        fits = [g.fitness for g in sp.members if g.fitness is not None]
        if not fits:
            continue  # unevaluated population: leave stagnation untouched
        best = max(fits)
        if best > sp.best_fitness:
            sp.best_fitness = best
            sp.stagnation = 0
        else:
            sp.stagnation += 1

    ranked = sorted(species, key=lambda s: s.best_fitness, reverse=True)
    protected = {s.key for s in ranked[:cfg.species_elitism]}
    return [sp for sp in species
            if sp.stagnation < cfg.max_stagnation or sp.key in protected]


def _largest_remainder(weights, total):
    """Integer quotas summing to `total`, proportional to nonnegative weights."""
    weights = np.asarray(weights, dtype=np.float64)
    if weights.sum() <= 0:
        weights = np.ones_like(weights)
    exact = weights / weights.sum() * total
    quotas = np.floor(exact).astype(int)
    remainder = exact - quotas
    # hand out leftover seats to the largest remainders, ties to lower index
    order = sorted(range(len(weights)), key=lambda i: (-remainder[i], i))
    for i in order[: total - quotas.sum()]:
        quotas[i] += 1
    return quotas.tolist()


def next_generation(species, registry, cfg, rng):
    """Produce the next population of exactly cfg.population_size genomes.

    Offspring quotas are proportional to each species' mean adjusted fitness
    (fitness shared by species size), largest-remainder rounded, with one
    champion seat reserved first for every species of size >=
    elitism_threshold.  Within a species only the top survival_threshold
    fraction reproduce.  Negative adjusted means are shifted up so the quota
    weights stay nonnegative.
    """
    if not species:
        if not cfg.reset_on_extinction:
            raise EmptyPopulation("all species extinct and reset disabled")
        return [Genome.initial(cfg, registry, rng) for _ in range(cfg.population_size)]

    for sp in species:
        for g in sp.members:
            if g.fitness is None:
                raise ShapeMismatch("next_generation requires evaluated fitness")

    adj_means = [sum(g.fitness for g in sp.members) / len(sp.members) ** 2
                 for sp in species]
    low = min(adj_means)
    weights = adj_means if low > 0 else [m - low for m in adj_means]

    elite_seats = [1 if len(sp.members) >= cfg.elitism_threshold else 0 for sp in species]
    remaining = cfg.population_size - sum(elite_seats)
    if remaining < 0:  # more big species than seats; trim elites from the worst
        order = sorted(range(len(species)), key=lambda i: weights[i])
        for i in order:
            if remaining >= 0:
                break
            if elite_seats[i]:
                elite_seats[i] = 0
                remaining += 1
    quotas = _largest_remainder(weights, remaining)

    offspring = []
    for sp, elites, quota in zip(species, elite_seats, quotas):
        members = sorted(sp.members, key=lambda g: g.fitness, reverse=True)
        if elites:
            champ = members[0].copy()
            champ.fitness = None
            offspring.append(champ)
        survivors = members[: max(1, int(np.ceil(cfg.survival_threshold * len(members))))]
        for _ in range(quota):
            pa = survivors[int(rng.integers(len(survivors)))]
            pb = survivors[int(rng.integers(len(survivors)))]
            child = crossover(pa, pb, rng)
            child = mutate_weights(child, cfg, rng)
            child = mutate_structural(child, registry, cfg, rng)
            offspring.append(child)
    return offspring


# -- network evaluation ------------------------------------------------------------

def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class Network:
    """Recurrent-capable network compiled from a genome.

    One activate() call performs a single synchronous step: input node values
    are written first, then every non-input node reads the resulting state
    snapshot (so hidden->hidden and recurrent edges see the previous step's
    values) and applies sigmoid(bias + sum of weighted inputs).
    """

    def __init__(self, genome):
        self.num_inputs = len(genome.input_ids())
        order = genome.input_ids() + sorted(
            i for i, n in genome.nodes.items() if n.kind != "input")
        self.index = {nid: k for k, nid in enumerate(order)}
        n_total = len(order)
        n_non = n_total - self.num_inputs
        self.bias = np.array(
            [genome.nodes[nid].bias for nid in order[self.num_inputs:]])
        self.weights = np.zeros((n_non, n_total))
        for c in genome.connections.values():
            if c.enabled:
                self.weights[self.index[c.dst] - self.num_inputs,
                             self.index[c.src]] += c.weight
        self.out_rows = np.array(
            [self.index[nid] - self.num_inputs for nid in genome.output_ids()])
        self.values = np.zeros(n_total)

    def reset(self):
        """Zero the node-value memory (episode start)."""
        self.values[:] = 0.0

    def activate(self, inputs):
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.shape != (self.num_inputs,):
            raise ShapeMismatch(
                f"expected {self.num_inputs} inputs, got shape {inputs.shape}")
        self.values[: self.num_inputs] = inputs
        new = sigmoid(self.bias + self.weights @ self.values)
        self.values[self.num_inputs:] = new
        return new[self.out_rows].copy()


def activate(genome, inputs, network=None):
    """One-shot functional wrapper; pass the returned Network back to keep state."""
    net = network or Network(genome)
    return net.activate(inputs), net
