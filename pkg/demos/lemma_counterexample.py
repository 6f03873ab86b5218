"""The spectral bound used for the Lipschitz term, with and without factor 2.

For ``T = P A + A^T P`` the bound ``sbar(T) <= sqrt(sbar(A^T A)) sbar(P)``
already fails at ``A = P = I`` (2 against 1). The triangle inequality gives
twice that constant, and random trials never cross the doubled bound.

Run: python demos/lemma_counterexample.py
"""

import numpy as np

from distobs.lemma_lab import lemma4_record, summarize, verify_lemma4, verify_lemma5

rec = lemma4_record(np.eye(4), np.eye(4))
print(f"A = P = I: sbar(T) = {rec.lhs:g}, stated bound {rec.printed_rhs:g}, "
      f"doubled bound {rec.rhs:g}")

for dim in (2, 5, 8):
    s = summarize(verify_lemma4(1000, dim, seed=dim))['lemma4']
    print(f"dim {dim}: stated bound violated in {s['printed_violations']}/1000, "
          f"doubled bound in {s['violations']}/1000")

s5 = summarize(verify_lemma5(1000, 6, 2.0, seed=0))
for kind, d in s5.items():
    print(f"{kind:22s} violations {d['violations']}/{d['count']}, "
          f"min margin {d['min_margin']:.2e}")
