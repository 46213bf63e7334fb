"""Kept edges and exhaustive cut error of the streaming sparsifier across C on K_n."""
import itertools

import numpy as np

from robust_stream.graph import SparsifierConfig, StreamingSparsifier, sparsifier_check
from _common import parser


def main():
    ap = parser(__doc__, trials=5)
    ap.add_argument("--n", type=int, default=16)
    ap.add_argument("--C", type=float, nargs="+", default=[4.0, 1.0, 0.4, 0.2])
    args = ap.parse_args()
    base = list(itertools.combinations(range(args.n), 2))
    print("C       rho     kept/m   ok   worst ratio")
    for C in args.C:
        for s in range(args.trials):
            order = np.random.default_rng(s).permutation(len(base))
            edges = [(*base[i], 1.0) for i in order]
            sp = StreamingSparsifier(SparsifierConfig(n=args.n, m_bound=len(edges), C=C, seed=s))
            for e in edges:
                sp.process_edge(e)
            chk = sparsifier_check(edges, sp.graph(), 0.5, args.n)
            print(f"{C:<7g} {sp.rho:<7.2f} {len(sp.kept):4d}/{len(edges):<4d} {chk.ok!s:5} {chk.worst_ratio:.3f}")


if __name__ == "__main__":
    main()
