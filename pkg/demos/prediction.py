"""How many elements are still unseen after the last observed departure?

The query is written in the JSON form accepted by ``unseen predict``.
"""
import json

from unseen.predict import answer_query, query_from_dict

query = {
    "lambda": 2.0,
    "mu": 1.0,
    "tau": {"family": "geometric", "p": 0.5, "N": 20},
    "record": {"times": [0.4, 1.1, 1.5, 2.7], "magnitudes": [1, 3, 1, 2]},
}
print(json.dumps(query["record"]))
print(" xi  P(unseen >= xi)")
for xi in range(6):
    ans = answer_query(query_from_dict({**query, "xi": xi}))
    print(f"{xi:3d}  {ans['probability']:.6f}")
print(f"expected unseen: {ans['expectation']:.6f}")
print(f"state before the last gap, posterior summary: {ans['weights_summary']}")
