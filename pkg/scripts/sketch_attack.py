"""Null-space attack on a dense sign sketch vs the online row sampler."""
from _common import parser, save

from robust_stream.harness import SketchAttackConfig, run_sketch_attack


def main():
    ap = parser(__doc__)
    ap.add_argument("--m", type=int, default=60)
    ap.add_argument("--benign", action="store_true", help="skip the null-space projection")
    args = ap.parse_args()
    hits = 0
    for s in range(args.trials):
        r = run_sketch_attack(SketchAttackConfig(m=args.m, attack=not args.benign,
                                                 seed_algorithm=s, seed_adversary=500 + s))
        m = r.summary
        hits += m["loss_ratio"] >= 10
        print(f"seed {s:2d}  |SA|max {m['sketch_residual']:.1e}  sampler loss {m['final_robust_loss']:.4f}  "
              f"sketch loss {m['final_baseline_loss']:.4f}  ratio {m['loss_ratio']:.1f}")
        save(args.out, f"seed{s:02d}", r)
    print(f"{hits}/{args.trials} seeds with loss ratio >= 10")


if __name__ == "__main__":
    main()
