"""
Building the three pretraining corpora
======================================

One hand-written example with two gold table rows and a few distractor
sentences, turned into ranking pairs, operator-prediction instances and a
masked sequence.
"""

from finprog.corpus import cell_evidence, example_from_parts
from finprog.pretrain import gen_noisy_vir_sets, gen_vir_pairs, gen_vir_sets, gen_vkm, gen_vop

ex = example_from_parts(
    "demo-1",
    "what was the purchase price per apartment in millions ?",
    "divide(1760, add(279, 320))",
    pre_text=["The company acquired two communities for a total purchase price of $1,760 million .",
              "Leasing activity was stable during the year ."],
    table=[["", "Units", "Year"],
           ["The Charlotte at Midtown", "279", "2017"],
           ["The acklen west end", "320", "2016"],
           ["Hayes house", "95", "2015"]],
    post_text=["Both communities are located in Nashville ."],
    gold_ids=["text_0", "table_1", "table_2"],
)

for c in ex.candidates:
    print("*" if c.is_gold else " ", c.id, c.sentence)

# Integrity ranking: level i has i gold items swapped for distractors.
sets = gen_vir_sets(ex, k=2, seed=0)
for s in sets:
    print(s.level, s.gold_count, [e.id for e in s.evidence])
print(len(gen_vir_pairs(sets)), "ranking pairs")

noisy = gen_noisy_vir_sets(ex, k=2, seed=0)
print("noisy set sizes:", [len(s.evidence) for s in noisy])

# Operator prediction: add(279, 320) is the only step with two literal operands.
for exm in gen_vop(ex):
    print(exm.label.value, [exm.span_text(s) for s in exm.spans])

# Keyphrase masking over the question plus cell-level evidence.
print(cell_evidence(ex))
(masked,) = gen_vkm(ex, seed=0)
print(" ".join(masked.tokens))
print(masked.targets)
