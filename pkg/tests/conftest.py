import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from finprog.corpus import example_from_parts  # noqa: E402

UNITS_TABLE = [
    ["", "Units", "Year"],
    ["The Charlotte at Midtown", "279", "2017"],
    ["The acklen west end", "320", "2016"],
    ["Hayes house", "95", "2015"],
]


def make_units_example(question: str = "what was the purchase price per apartment in millions ?"):
    return example_from_parts(
        "units-1",
        question,
        "divide(1760, add(279, 320))",
        pre_text=["The company acquired two communities for a total purchase price of $1,760 million .",
                  "Leasing activity was stable during the year ."],
        table=UNITS_TABLE,
        post_text=["Both communities are located in Nashville ."],
        gold_ids=["text_0", "table_1", "table_2"],
    )


@pytest.fixture
def units_example():
    return make_units_example()


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL/SKIP line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed", "skipped", "error"):
        for report in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance.py::" not in nodeid:
                continue
            if outcome == "passed" and report.when != "call":
                continue
            name = nodeid.split("::", 1)[1]
            label = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP", "error": "FAIL"}[outcome]
            lines.append((name, label))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for name, label in sorted(set(lines)):
        terminalreporter.write_line(f"ACCEPTANCE {label:4s} {name}")


def finqa_entries() -> list[dict]:
    """Small FinQA-format dataset covering text, table and rejected entries."""
    table = [["", "2017", "2016"], ["revenue", "$1,760", "$1,500"], ["operating costs", "(200)", "150"]]
    pre = ["revenue rose to $1,760 million in 2017 .", "revenue was $1,500 million in 2016 .",
           "management expects revenue growth to continue ."]
    post = ["operating costs fell in 2017 .", "the board approved a dividend ."]

    def entry(ex_id, question, program, gold, answer):
        return {
            "id": ex_id, "pre_text": pre, "post_text": post, "table": table,
            "qa": {"question": question, "program": program,
                   "gold_inds": {g: "" for g in gold}, "exe_ans": answer},
        }

    return [
        entry("b-2", "what was the change in revenue ?", "subtract(1760, 1500)", ["text_0", "text_1"], 260.0),
        entry("a-1", "what was the percent change in revenue ?", "divide(subtract(1760, 1500), 1500)",
              ["table_1"], 0.17333),
        entry("c-3", "what is the average revenue ?", "table_average(revenue, none)", ["table_1", "text_2"], 1630.0),
        entry("d-4", "did revenue exceed costs ?", "greater(1760, 200)", ["table_1", "table_2"], "yes"),
        entry("z-bad", "broken ?", "divide(1, 0)", ["text_0"], 0.0),
    ]


@pytest.fixture
def finqa_file(tmp_path):
    import json

    path = tmp_path / "train.json"
    path.write_text(json.dumps(finqa_entries()))
    return path
