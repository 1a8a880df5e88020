"""The restricted answer-program language: parse, execute, fail loudly.

Run:  python3 demos/02_answer_programs.py
"""

from cfrag.corpus import SynthConfig, synthesize_corpus
from cfrag.progdsl import ParseError, UndefinedVariableError, run_source
from cfrag.qagen import generate_gold_program

# a share-of-a-share calculation: 505 kg total, 50% manufacturing, of which
# 24% is the display
program = """\
total_carbon=505.0
manufacturing_percent=0.5
display_percent=0.24
manufacturing_carbon=total_carbon*manufacturing_percent
display_carbon=total_carbon*manufacturing_percent*display_percent
answer=[manufacturing_carbon,display_carbon]
"""
print(program)
print("->", run_source(program), "\n")

# dict-valued helpers rank components; ties keep first-written order
ranked = run_source(
    'components={"Display":24.0,"Battery":19.0,"Chassis":19.0}\n'
    "answer=top_n(components,2)\n"
)
print("top 2:", ranked)
print("max:  ", run_source(
    'components={"Display":24.0,"Battery":19.0}\nanswer=[max_by_value(components)]\n'
))
print()

# anything outside the grammar is a parse error with a position
for bad in ("import os\nanswer=[1]\n", "answer=[1,2\n", "x=1;y=2\nanswer=[x]\n"):
    try:
        run_source(bad)
    except ParseError as exc:
        print(f"rejected line {exc.line} col {exc.col}: {exc}")

# execution errors are just as explicit
try:
    run_source("answer=[missing]\n")
except UndefinedVariableError as exc:
    print(f"undefined: {exc.name}")
print()

# gold programs come straight out of extracted records
_, records = synthesize_corpus(SynthConfig(n_docs=1), seed=7)
rec = records[0]
targets = tuple(list(rec.component_percents)[:2])
gold = generate_gold_program(rec, "calculation", targets)
print(f"gold program for {rec.product_name}, targets {targets}:")
print(gold)
print("->", run_source(gold))
