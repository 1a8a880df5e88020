"""Rank reports for a question, then let the critic pick the right one.

Run:  python3 demos/03_retrieval_and_critic.py
"""

from cfrag.corpus import SynthConfig, synthesize_corpus
from cfrag.critic import (
    build_critic_prompt,
    lexical_critic,
    parse_critic_response,
    resolve_verdict,
)
from cfrag.qagen import GenConfig, generate_questions
from cfrag.retrieval import build_index, hit_rate, retrieve

docs, records = synthesize_corpus(SynthConfig(n_docs=25), seed=9)
items = generate_questions(records, GenConfig(), seed=9)
text_of = {d.doc_id: d.raw_text for d in docs}

index = build_index(docs)
print(f"indexed {len(index.doc_ids)} documents, vocabulary {len(index.vocabulary)}\n")

item = items[0]
print("question:", item.question)
ranking = retrieve(index, item.question, 5)
for rank, (doc_id, score) in enumerate(ranking.entries, start=1):
    marker = "  <- gold" if doc_id == item.doc_id else ""
    print(f"  {rank}. {doc_id}  {score:.4f}{marker}")
print()

# corpus-level quality: how often the gold report lands in the top k
rankings = {i.qa_id: retrieve(index, i.question, 10).doc_ids() for i in items}
gold = {i.qa_id: i.doc_id for i in items}
for k in (1, 3, 5, 10):
    print(f"hit@{k} {hit_rate(rankings, gold, k):.4f}")
print()

# the critic sees the question plus the retrieved texts and answers with IDs
candidates = [text_of[d] for d in ranking.doc_ids()]
prompt = build_critic_prompt(item.question, candidates)
print("critic prompt starts:")
print("\n".join(prompt.splitlines()[:4]))
print("...\n")

verdict = lexical_critic(item.question, candidates)
chosen = resolve_verdict(verdict, ranking.doc_ids())
print(f"lexical critic picks reference {verdict.selected[0]} -> {chosen}")
print("gold document is", item.doc_id)

# the same wire format a served model would use
print("parsed '[2, 1]':", parse_critic_response("[2, 1]").selected)
print("parsed '[-1]':  none_applicable =", parse_critic_response("[-1]").none_applicable)
