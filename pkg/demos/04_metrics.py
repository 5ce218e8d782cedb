"""
Scoring predictions
===================

Execution accuracy checks the answer.  Program accuracy checks the program
itself, so it can never exceed execution accuracy.
"""

from finprog.metrics import PredictionRecord, mean_recall_at_k, recall_at_k, score_records

gold = "divide(1760, add(279, 320))"
answer = 1760 / 599
records = [
    PredictionRecord.from_text("a", "divide(1760, add(320, 279))", gold, answer),
    PredictionRecord.from_text("b", "add(279, 320), divide(1760, #0)", gold, answer),
    PredictionRecord.from_text("c", "divide(3520, add(558, 640))", gold, answer),
    PredictionRecord.from_text("d", "divide(1760, 279)", gold, answer),
    PredictionRecord.from_text("e", "divide(1760,", gold, answer),
]
print(score_records(records))

# Retriever recall: the share of gold evidence within the top k.
scored = [("text_0", 0.91), ("table_1", 0.85), ("text_1", 0.40), ("table_2", 0.38)]
gold_ids = ["text_0", "table_1", "table_2"]
for k in (1, 2, 3, 4):
    print(k, recall_at_k(scored, gold_ids, k))
print(mean_recall_at_k([(scored, gold_ids), (scored, ["text_1"])], 3))
