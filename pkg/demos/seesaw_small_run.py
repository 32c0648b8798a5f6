"""A small but complete two-stage training run on PatchChase.

Stage 1 alternates between evolving attention parameters with CMA-ES
(controller frozen) and evolving NEAT genomes (attention frozen).  Stage 2
freezes the winning topology and attention and fine-tunes the flattened
weight vector with a second CMA-ES run.  Scaled down (small population,
short episodes) so it finishes in well under a minute; for a full-scale
run use the `seesaw-neat train` command instead.
"""

from seesaw_neat import attention as att
from seesaw_neat import neat
from seesaw_neat.envs import PatchChase
from seesaw_neat.pipeline import (
    EvaluationProtocol,
    SeesawTrainer,
    count_parameters,
    tune_stage2,
)

# 8x8 patches with stride 8 give an 8x8 grid of 64 patches; the top-2
# centers form a 4-value observation, so genomes have 4 inputs, 5 outputs
ATT_CFG = att.AttentionConfig(patch_size=8, patch_stride=8, d=2, k=2)
NEAT_CFG = neat.NeatConfig(num_inputs=4, num_outputs=5, population_size=16)


def env_factory():
    return PatchChase(max_frames=100)


def main():
    protocol = EvaluationProtocol(root_seed=0, trials=3, frame_limit=100,
                                  seed_mode="fixed")
    trainer = SeesawTrainer(NEAT_CFG, ATT_CFG, env_factory, protocol,
                            cma_population=8, cma_sigma=0.1, generations=10)
    print(f"stage 1: {trainer.generations} generations, "
          f"{NEAT_CFG.population_size} genomes, "
          f"{att.param_count(ATT_CFG)} attention parameters")
    while trainer.generation < trainer.generations:
        trainer.run_generation()
        a, b = trainer.ledger[-2], trainer.ledger[-1]
        print(f"  gen {trainer.generation - 1:2d}  "
              f"attention best {a['best']:7.3f}  "
              f"population best {b['best']:7.3f}  "
              f"best so far {trainer.best_fitness:7.3f}  "
              f"species {len(trainer.species)}")

    model = trainer.final_model()
    counts = count_parameters(model)
    print(f"\nbest genome: {counts['genome_weights']} enabled connections, "
          f"{counts['genome_biases']} biases "
          f"(total with attention: {counts['total']} parameters)")

    print("\nstage 2: tuning the frozen topology's weight vector")
    tuned = tune_stage2(model, env_factory, protocol, budget=10,
                        cma_population=8)
    print(f"  stage-1 fitness {model.fitness:.3f} -> tuned {tuned.fitness:.3f}")


if __name__ == "__main__":
    main()
