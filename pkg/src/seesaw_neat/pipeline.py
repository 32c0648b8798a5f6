"""Two-stage training orchestration.

Stage 1 is the Seesaw loop: each generation first freezes the best known
controller genome and evolves attention parameters with CMA-ES (phase A),
then freezes that generation's best attention and evaluates/reproduces the
NEAT population (phase B).  Stage 2 freezes topology and attention and tunes
the flattened weight vector of the final genome with a second CMA-ES run.

Every episode seed is a pure function of (root seed, stage, generation,
phase, individual index, trial), so runs are reproducible and evaluations
are order-independent.
"""

import csv
import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict, field

import numpy as np

from . import attention as att
from . import cmaes, neat
from .errors import EpisodeFailed, IoMismatch, LedgerParseError, ShapeMismatch
from .rng import derive_seed, make_rng, restore_rng, rng_state

CHECKPOINT_FORMAT = "seesaw-checkpoint"
MODEL_FORMAT = "seesaw-model"
FORMAT_VERSION = 1
LEDGER_FIELDS = ["stage", "generation", "phase", "best", "mean", "std", "episodes"]


def eval_workers():
    """Evaluation parallelism cap from SEESAW_THREADS (default serial)."""
    return max(1, int(os.environ.get("SEESAW_THREADS", "1")))


@dataclass
class EvaluationProtocol:
    """How individuals are scored: trials per individual, seed schedule."""

    root_seed: int = 0
    trials: int = 3
    frame_limit: int | None = None
    seed_mode: str = "fresh"   # 'fresh': new seeds each generation; 'fixed': per-trial only

    def __post_init__(self):
        if self.trials < 1:
            raise ShapeMismatch("trials must be >= 1")
        if self.seed_mode not in ("fresh", "fixed"):
            raise ShapeMismatch(f"unknown seed_mode {self.seed_mode!r}")

    def episode_seed(self, stage, generation, phase, index, trial):
        if self.seed_mode == "fixed":
            return derive_seed(self.root_seed, trial)
        return derive_seed(self.root_seed, stage, generation, phase, index, trial)


class ObservationEncoder:
    """Frame -> patch-center vector under fixed attention params, memoized.

    Frames repeat heavily within an evaluation phase, so observations are
    cached by a content hash of the frame bytes.  The cache is scoped to one
    set of attention parameters; results are bit-identical with or without it.
    """

    def __init__(self, params, cfg, max_entries=300_000):
        self.params = params
        self.cfg = cfg
        self.max_entries = max_entries
        self._cache = {}

    def __call__(self, frame_data):
        key = hashlib.blake2b(frame_data.tobytes(), digest_size=16).digest()
        obs = self._cache.get(key)
        if obs is None:
            obs = att.observe(frame_data, self.params, self.cfg)
            if len(self._cache) >= self.max_entries:
                self._cache.clear()
            self._cache[key] = obs
        return obs


def run_episode(env, policy, seed, frame_limit=None):
    """Play one episode; returns the total reward (sum of step rewards)."""
    frame = env.reset(seed)
    total = 0.0
    steps = 0
    limit = frame_limit or env.spec.max_frames
    while steps < limit:
        result = env.step(policy(frame))
        total += result.reward
        frame = result.frame
        steps += 1
        if result.done:
            break
    return total


def evaluate_policy(policy_factory, env_factory, protocol, seeds):
    """Mean episode score of a policy over the given trial seeds."""
    scores = []
    for seed in seeds:
        env = env_factory()
        try:
            policy = policy_factory(env)
            scores.append(run_episode(env, policy, seed, protocol.frame_limit))
        except EpisodeFailed as e:
            scores.append(e.floor)
        finally:
            env.close()
    return float(np.mean(scores))


def evaluate_individual(genome, attention_params, env_factory, protocol, att_cfg,
                        *, stage=1, generation=0, phase=0, index=0):
    """Score one (genome, attention) pair: mean total reward over the trials.

    Per frame: patches are extracted and scored, the top-K centers feed the
    genome network, and the action is the argmax output.
    """
    if isinstance(attention_params, ObservationEncoder):
        encoder = attention_params
    else:
        encoder = ObservationEncoder(attention_params, att_cfg)
    n_inputs = 2 * encoder.cfg.k

    def policy_factory(env):
        if (len(genome.input_ids()) != n_inputs
                or len(genome.output_ids()) != env.spec.actions):
            raise IoMismatch(
                f"genome has {len(genome.input_ids())}/{len(genome.output_ids())} "
                f"inputs/outputs; need {n_inputs}/{env.spec.actions}")
        net = neat.Network(genome)

        def policy(frame):
            return int(np.argmax(net.activate(encoder(frame.data))))
        return policy

    seeds = [protocol.episode_seed(stage, generation, phase, index, t)
             for t in range(protocol.trials)]
    return evaluate_policy(policy_factory, env_factory, protocol, seeds)


def _parallel_map(fn, items):
    """Index-keyed evaluation map; parallel when SEESAW_THREADS > 1."""
    workers = eval_workers()
    if workers == 1:
        return [fn(i, item) for i, item in enumerate(items)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, i, item) for i, item in enumerate(items)]
        return [f.result() for f in futures]


def _best_index(values):
    """Index of the maximum; ties go to the lowest index."""
    best = 0
    for i, v in enumerate(values):
        if v > values[best]:
            best = i
    return best


@dataclass
class FinalModel:
    """Frozen topology + tuned weights + attention params + config snapshot."""

    genome: neat.Genome
    attention_vector: np.ndarray
    neat_config: neat.NeatConfig
    attention_config: att.AttentionConfig
    fitness: float | None = None
    tuned: bool = False

    def attention_params(self):
        return att.vector_to_params(self.attention_vector, self.attention_config)

    def to_dict(self):
        return {
            "format": MODEL_FORMAT,
            "version": FORMAT_VERSION,
            "tuned": self.tuned,
            "fitness": self.fitness,
            "neat_config": asdict(self.neat_config),
            "attention_config": asdict(self.attention_config),
            "attention_vector": self.attention_vector.tolist(),
            "genome": self.genome.to_dict(),
        }

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=1)

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != MODEL_FORMAT:
            raise ShapeMismatch("not a model file")
        return cls(genome=neat.Genome.from_dict(d["genome"]),
                   attention_vector=np.array(d["attention_vector"]),
                   neat_config=neat.NeatConfig(**d["neat_config"]),
                   attention_config=att.AttentionConfig(**d["attention_config"]),
                   fitness=d.get("fitness"),
                   tuned=d.get("tuned", False))

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))


def count_parameters(model):
    """Learnable-parameter accounting for a final model, with cross-check."""
    attention_count = att.param_count(model.attention_config)
    if len(model.attention_vector) != attention_count:
        raise ShapeMismatch("attention vector length disagrees with config")
    weights = sum(1 for c in model.genome.connections.values() if c.enabled)
    biases = sum(1 for n in model.genome.nodes.values() if n.kind != "input")
    genome_count = len(model.genome.weight_vector())
    if genome_count != weights + biases:
        raise ShapeMismatch("genome weight vector disagrees with gene counts")
    return {"attention": attention_count, "genome_weights": weights,
            "genome_biases": biases, "total": attention_count + genome_count}


class SeesawTrainer:
    """Owns all stage-1 state: population, species, registry, CMA-ES, ledger."""

    def __init__(self, neat_cfg, att_cfg, env_factory, protocol,
                 cma_population=32, cma_sigma=0.1, generations=50):
        self.neat_cfg = neat_cfg
        self.att_cfg = att_cfg
        self.env_factory = env_factory
        self.protocol = protocol
        self.generations = generations
        self.generation = 0

        self.rng_neat = make_rng(derive_seed(protocol.root_seed, 101))
        self.rng_cma = make_rng(derive_seed(protocol.root_seed, 202))

        self.registry = neat.InnovationRegistry()
        self.population = [neat.Genome.initial(neat_cfg, self.registry, self.rng_neat)
                           for _ in range(neat_cfg.population_size)]
        self.species = []

        dim = att.param_count(att_cfg)
        self.cma = cmaes.CmaEs(cmaes.CmaesConfig(
            dimension=dim, population_size=cma_population, init_sigma=cma_sigma))

        self.best_attention = np.zeros(dim)
        self.best_genome = self.population[0]
        self.best_fitness = float("-inf")
        self.evaluated_population = None     # most recent population with fitness
        self.ledger = []

    # -- internals ---------------------------------------------------------------

    def _controller(self):
        """Best genome of the most recently evaluated population (ties: lowest index)."""
        pop = self.evaluated_population or self.population
        if pop[0].fitness is None:
            return pop[0]
        return pop[_best_index([g.fitness for g in pop])]

    def _record(self, stage, phase, fitnesses):
        fitnesses = np.asarray(fitnesses, dtype=np.float64)
        self.ledger.append({
            "stage": stage, "generation": self.generation, "phase": phase,
            "best": float(fitnesses.max()), "mean": float(fitnesses.mean()),
            "std": float(fitnesses.std()),
            "episodes": len(fitnesses) * self.protocol.trials})

    def _note_best(self, genome, attention_vec, fitness):
        if fitness > self.best_fitness:
            self.best_fitness = fitness
            self.best_genome = genome.copy()
            self.best_attention = np.array(attention_vec)

    # -- one Seesaw generation ----------------------------------------------------

    def run_generation(self):
        gen = self.generation
        controller = self._controller()

        # phase A: freeze the controller, evolve attention with CMA-ES
        candidates = self.cma.ask(self.rng_cma)

        def eval_candidate(i, vec):
            encoder = ObservationEncoder(
                att.vector_to_params(vec, self.att_cfg), self.att_cfg)
            return evaluate_individual(
                controller, encoder, self.env_factory, self.protocol, self.att_cfg,
                stage=1, generation=gen, phase=0, index=i)

        fits_a = _parallel_map(eval_candidate, candidates)
        self.cma.tell(candidates, fits_a)
        gen_best = _best_index(fits_a)
        current_attention = np.array(candidates[gen_best])
        self._note_best(controller, current_attention, fits_a[gen_best])
        self._record(1, "A", fits_a)

        # phase B: freeze this generation's attention, evaluate the population
        encoder = ObservationEncoder(
            att.vector_to_params(current_attention, self.att_cfg), self.att_cfg)

        def eval_genome(i, genome):
            return evaluate_individual(
                genome, encoder, self.env_factory, self.protocol, self.att_cfg,
                stage=1, generation=gen, phase=1, index=i)

        fits_b = _parallel_map(eval_genome, self.population)
        for genome, fit in zip(self.population, fits_b):
            genome.fitness = fit
        self._note_best(self.population[_best_index(fits_b)], current_attention,
                        max(fits_b))
        self._record(1, "B", fits_b)

        self.evaluated_population = self.population
        self.species = neat.speciate(self.population, self.species, self.neat_cfg)
        self.population = neat.next_generation(
            self.species, self.registry, self.neat_cfg, self.rng_neat)
        self.generation += 1

    def train(self, checkpoint_dir=None, keep_last=3):
        """Run remaining generations; returns the best FinalModel candidate."""
        while self.generation < self.generations:
            self.run_generation()
            if checkpoint_dir:
                self._checkpoint(checkpoint_dir, keep_last)
        return self.final_model()

    def final_model(self):
        return FinalModel(genome=self.best_genome.copy(),
                          attention_vector=self.best_attention.copy(),
                          neat_config=self.neat_cfg,
                          attention_config=self.att_cfg,
                          fitness=None if self.best_fitness == float("-inf")
                          else self.best_fitness,
                          tuned=False)

    # -- checkpointing ---------------------------------------------------------------

    def state_dict(self):
        return {
            "format": CHECKPOINT_FORMAT,
            "version": FORMAT_VERSION,
            "generation": self.generation,
            "generations": self.generations,
            "neat_config": asdict(self.neat_cfg),
            "attention_config": asdict(self.att_cfg),
            "protocol": asdict(self.protocol),
            "population": [g.to_dict() for g in self.population],
            "species": [{"key": s.key, "representative": s.representative.to_dict(),
                         "best_fitness": s.best_fitness, "stagnation": s.stagnation}
                        for s in self.species],
            "registry": self.registry.to_dict(),
            "cma": self.cma.state_dict(),
            "rng_neat": rng_state(self.rng_neat),
            "rng_cma": rng_state(self.rng_cma),
            "best_fitness": self.best_fitness if self.best_fitness > float("-inf")
            else None,
            "best_genome": self.best_genome.to_dict(),
            "best_attention": self.best_attention.tolist(),
            "evaluated_population": None if self.evaluated_population is None
            else [g.to_dict() for g in self.evaluated_population],
            "ledger": self.ledger,
        }

    def load_state_dict(self, d):
        if d.get("format") != CHECKPOINT_FORMAT:
            raise ShapeMismatch("not a checkpoint file")
        self.generation = d["generation"]
        self.generations = d["generations"]
        self.population = [neat.Genome.from_dict(g) for g in d["population"]]
        self.species = [
            neat.Species(s["key"], neat.Genome.from_dict(s["representative"]),
                         [], s["best_fitness"], s["stagnation"])
            for s in d["species"]]
        self.registry = neat.InnovationRegistry.from_dict(d["registry"])
        self.cma.load_state_dict(d["cma"])
        self.rng_neat = restore_rng(d["rng_neat"])
        self.rng_cma = restore_rng(d["rng_cma"])
        self.best_fitness = (float("-inf") if d["best_fitness"] is None
                             else d["best_fitness"])
        self.best_genome = neat.Genome.from_dict(d["best_genome"])
        self.best_attention = np.array(d["best_attention"])
        self.evaluated_population = (
            None if d["evaluated_population"] is None
            else [neat.Genome.from_dict(g) for g in d["evaluated_population"]])
        self.ledger = d["ledger"]

    def save_checkpoint(self, path):
        with open(path, "w") as f:
            json.dump(self.state_dict(), f)

    def load_checkpoint(self, path):
        with open(path) as f:
            self.load_state_dict(json.load(f))

    def _checkpoint(self, directory, keep_last):
        os.makedirs(directory, exist_ok=True)
        path = os.path.join(directory, f"stage1_gen{self.generation:04d}.ckpt.json")
        self.save_checkpoint(path)
        best_path = os.path.join(directory, "stage1_best.model.json")
        self.final_model().save(best_path)
        ckpts = sorted(p for p in os.listdir(directory)
                       if p.startswith("stage1_gen") and p.endswith(".ckpt.json"))
        for stale in ckpts[:-keep_last]:
            os.remove(os.path.join(directory, stale))


def train_stage1(neat_cfg, att_cfg, env_factory, protocol, generations=50,
                 cma_population=32, cma_sigma=0.1, checkpoint_dir=None,
                 resume=None):
    """Run stage 1 end to end; returns (trainer, best FinalModel candidate)."""
    trainer = SeesawTrainer(neat_cfg, att_cfg, env_factory, protocol,
                            cma_population=cma_population, cma_sigma=cma_sigma,
                            generations=generations)
    if resume:
        trainer.load_checkpoint(resume)
    model = trainer.train(checkpoint_dir=checkpoint_dir)
    return trainer, model


def tune_stage2(model, env_factory, protocol, budget=100, cma_population=32,
                cma_sigma=0.1, trace_path=None, ledger=None):
    """Stage 2: CMA-ES over the frozen topology's weight vector.

    The CMA-ES mean starts at the stage-1 weights and the starting point is
    always evaluated first, so on a deterministic seed schedule the tuned
    fitness can never fall below the stage-1 candidate's.
    """
    start = model.genome.weight_vector()
    if budget <= 0:
        return model
    encoder = ObservationEncoder(model.attention_params(), model.attention_config)
    rng = make_rng(derive_seed(protocol.root_seed, 303))
    es = cmaes.CmaEs(cmaes.CmaesConfig(
        dimension=len(start), population_size=cma_population,
        init_sigma=cma_sigma, initial_mean=start))

    def evaluate(i, vec, generation):
        genome = model.genome.with_weight_vector(vec, model.neat_config)
        return evaluate_individual(
            genome, encoder, env_factory, protocol, model.attention_config,
            stage=2, generation=generation, phase=2, index=i)

    best_vec = start.copy()
    best_fit = evaluate(0, start, 0)
    trace = cmaes.TraceWriter(trace_path) if trace_path else None
    try:
        for gen in range(budget):
            candidates = es.ask(rng)
            fits = _parallel_map(
                lambda i, vec, g=gen: evaluate(i, vec, g), candidates)
            es.tell(candidates, fits)
            i = _best_index(fits)
            if fits[i] > best_fit:
                best_fit = fits[i]
                best_vec = np.array(candidates[i])
            if trace:
                trace.record(es, fits)
            if ledger is not None:
                fits_arr = np.asarray(fits, dtype=np.float64)
                ledger.append({
                    "stage": 2, "generation": gen, "phase": "T",
                    "best": float(fits_arr.max()), "mean": float(fits_arr.mean()),
                    "std": float(fits_arr.std()),
                    "episodes": len(fits) * protocol.trials})
            if es.should_stop():
                break
    finally:
        if trace:
            trace.close()
    return FinalModel(
        genome=model.genome.with_weight_vector(best_vec, model.neat_config),
        attention_vector=model.attention_vector.copy(),
        neat_config=model.neat_config,
        attention_config=model.attention_config,
        fitness=best_fit,
        tuned=True)


# -- ledger files -----------------------------------------------------------------

def write_ledger(path, rows):
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=LEDGER_FIELDS)
        writer.writeheader()
        for row in rows:
            out = dict(row)
            for key in ("best", "mean", "std"):
                out[key] = repr(float(out[key]))
            writer.writerow(out)


def read_ledger(path):
    try:
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            if reader.fieldnames != LEDGER_FIELDS:
                raise LedgerParseError(f"bad ledger header: {reader.fieldnames}")
            rows = []
            for row in reader:
                rows.append({
                    "stage": int(row["stage"]),
                    "generation": int(row["generation"]),
                    "phase": row["phase"],
                    "best": float(row["best"]),
                    "mean": float(row["mean"]),
                    "std": float(row["std"]),
                    "episodes": int(row["episodes"])})
    except (OSError, ValueError, TypeError) as e:
        raise LedgerParseError(f"cannot read ledger {path}: {e}")
    if not rows:
        raise LedgerParseError(f"ledger {path} has no rows")
    return rows
