"""
Multi-task training of the reference encoder
============================================

Trains the small numpy encoder on all three objectives at once.  Every
update uses a batch drawn from a single task.
"""

import random

from finprog.corpus import example_from_parts
from finprog.model import evaluate, train_multitask
from finprog.pretrain import gen_vir_pairs, gen_vir_sets, gen_vkm, gen_vop

rng = random.Random(0)
words = ["revenue", "margin", "units", "cash", "growth", "costs"]
examples = []
for i in range(30):
    a, b = rng.randint(10, 999), rng.randint(10, 999)
    topic = rng.choice(words)
    op = rng.choice(["add", "subtract", "divide", "multiply"])
    examples.append(example_from_parts(
        f"ex{i:02d}",
        f"what is the {topic} result ?",
        f"{op}({a}, {b})",
        pre_text=[f"{topic} was {a} in 2017 .", f"{topic} was {b} in 2016 .",
                  f"{rng.choice(words)} is not discussed here .", "the board met twice ."],
        gold_ids=["text_0", "text_1"],
    ))

corpora = {"vir": [], "vop": [], "vkm": []}
for ex in examples:
    corpora["vir"] += gen_vir_pairs(gen_vir_sets(ex, 2, seed=0), ex.question, ex.id)
    corpora["vop"] += gen_vop(ex)
    corpora["vkm"] += gen_vkm(ex, seed=0)
print({task: len(v) for task, v in corpora.items()})

result = train_multitask(corpora, batch_size=8, steps=600, lr=0.5, d=16, seed=0)
for entry in result.log[::100]:
    print(entry["step"], entry["task"], round(entry["loss"], 4))
for task, instances in corpora.items():
    print(task, evaluate(result.encoder, result.heads, instances, task))
