"""Tour of the executable derivation language.

Answers are small programs: arithmetic over written decimals, a len() call
for counting, and bracketed string lists for span or clarification answers.
Everything numeric runs in exact rational arithmetic and is rendered to a
decimal string only at the very end.
"""

from fractions import Fraction

from pcqa import (
    EvalConfig,
    ExecutionFailure,
    execute_source,
    parse_source,
    render,
    tokenize,
)

# A percentage-change derivation, straight from a gold annotation.
source = "(36.6-20.5)/20.5"
print("source:   ", source)
print("tokens:   ", [t.text for t in tokenize(source)])
result = execute_source(source)
print("exact:    ", result.value.value)          # Fraction(161, 205)
print("rendered: ", result.value.rendered)       # 0.7854 (4 places, half away from zero)

# Counting is a len() call over a string list.
print()
count = execute_source('len(["Americas", "EMEA", "Asia Pacific"])')
print("count:    ", count.value.count)

# Digit-grouping commas merge into numerals outside lists.
print()
grouped = execute_source("3,711 + 4,801 + 1,882")
print("3,711 + 4,801 + 1,882 =", grouped.value.rendered)

# Two derivations with the same value collide exactly, not approximately.
print()
a = execute_source("(88-105)/105").value.value
b = execute_source("88/105-1").value.value
print("(88-105)/105 =", a, " 88/105-1 =", b, " equal:", a == b)
assert a == b == Fraction(-17, 105)

# Rendering precision is a knob; the exact value never changes.
print()
for places in (2, 4, 6):
    config = EvalConfig(render_precision=places)
    print(f"precision {places}:", execute_source(source, config).value.rendered)

# Parsing is strict: only this grammar runs, nothing else.
print()
for bad in ("import os", '["a"] + 1', "1/(2-2)"):
    try:
        execute_source(bad)
    except ExecutionFailure as err:
        print(f"rejected {bad!r}: {err.stage} stage, {type(err.detail).__name__}")

# Round trip: parse then render gives canonical source.
print()
print("canonical:", render(parse_source("3,711  +  1,882")))
