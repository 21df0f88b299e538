"""Mining visual concepts from a few-shot support set.

Given a support episode (M images per class) and a dictionary of
concept-text features, two concept families are built:

* description concepts: for each concept text, the similarity-weighted
  average of the top-I most similar support images (one unit row per
  concept word);
* class concepts: the unit-normalized mean of each class's support
  features.

Run:  python3 demos/02_concept_mining.py
"""

import numpy as np

from ccli import (
    SynthSpec,
    build_concept_bank,
    gen_synth,
    init_params,
    sample_episode,
    top_i_select,
)
from ccli.evaluation import concept_report

spec = SynthSpec(
    num_classes=10,
    dim=64,
    num_concepts=40,
    train_per_class=16,
    test_per_class=50,
    sigma=0.6,
    seed=7,
)
train_bundle, test_bundle = gen_synth(spec)

episode = sample_episode(train_bundle, shots=16, seed=0)
print(f"episode: {episode.shots} shots/class, indices {episode.indices.shape}")
print(f"class 0 support rows: {episode.indices[0][:6]} ...")

# the selector behind description-concept mining
sims = np.array([0.91, 0.15, 0.55, 0.91, -0.2])
idx, weights = top_i_select(sims, 3)
print(f"\ntop-3 of {sims.tolist()}: indices {idx.tolist()}, weights {weights.tolist()}")

bank = build_concept_bank(train_bundle, episode, top_i=5)
print(f"\nconcept bank: {bank.num_concepts} description concepts, "
      f"{bank.num_classes} class concepts, dim {bank.dim}")
print(f"row norms (all unit): {np.linalg.norm(bank.description_concepts, axis=1)[:4]}")
print(f"provenance: {bank.provenance}")

# which class produced each concept's strongest support image
counts = np.bincount(bank.top1_image_class, minlength=bank.num_classes)
print(f"concepts per top-1 class: {counts.tolist()}")

# rank concepts for one test image at initialization
params = init_params(bank, train_bundle.class_text_features)
sample = 7
true_class = test_bundle.labels[sample]
print(f"\ntop-5 concepts for test image {sample} (class {true_class}):")
for text, score in concept_report(params, test_bundle, sample, 5):
    print(f"  {score:+.3f}  {text}")
