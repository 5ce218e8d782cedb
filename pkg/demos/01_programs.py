"""
Programs: parse, flatten, execute, compare
==========================================

A solution program is a chain of operator calls.  Nested calls are
flattened into numbered steps, and ``#n`` refers to the result of step n.
"""

from finprog import canonicalize, eval_program, parse_program, prog_equal, render_program
from finprog.executor import TableContext

program = parse_program("divide(1760, add(279, 320))")
print(render_program(program, "flattened"))
print(render_program(program, "nested"))
print(eval_program(program))

# Table operations read a whole row.  Non-numeric cells are skipped.
table = TableContext.from_raw([
    ["", "2017", "2016", "2015"],
    ["net revenue", "$1,760", "$1,500", "n/a"],
])
print(eval_program("table_average(net revenue, none)", table))

# Equivalence ignores operand order of add/multiply, literal spelling,
# step numbering and steps that do not feed the answer.
a = parse_program("divide(1760, add(279, 320))")
b = parse_program("multiply(2, 2), add(320.0, 279), divide(1760, #1)")
print(prog_equal(a, b))
print(canonicalize(b))

# Same value, different computation: not equivalent.
print(prog_equal(parse_program("add(2, 2)"), parse_program("multiply(2, 2)")))
