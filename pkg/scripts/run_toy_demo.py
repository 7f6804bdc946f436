"""Walk the whole pipeline on the committed 7-row loan fixture.

Trains the pinned model, shows which synthetic pairs it treats unequally,
ranks the training rows by influence on those pairs, removes the harmful
chunk, retrains, and re-measures. With the pinned seed the removal is exactly
row 2 (the high-income applicant denied from the disadvantaged group) and
pool discrimination falls from roughly 59% to under 1%.
"""

import argparse
import sys
from pathlib import Path

from fairtrim.data import load_dataset, load_schema
from fairtrim.debias import DebiasConfig, debias_data
from fairtrim.fairness import SimilarityConfig, accuracy, estimate_discrim
from fairtrim.influence import SolverConfig
from fairtrim.model import Hyperparameters, train

FIXTURE = Path(__file__).resolve().parent.parent / "tests" / "data"


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=151,
                    help="weight init and pool seed (151 is the pinned demo seed)")
    ap.add_argument("--epochs", type=int, default=8000)
    ap.add_argument("--lr", type=float, default=1.0)
    args = ap.parse_args()

    d = load_dataset(FIXTURE / "loans.csv", load_schema(FIXTURE / "loans.schema.json"))
    hp = Hyperparameters(16, 8, batch_size=len(d), epochs=args.epochs,
                         learning_rate=args.lr, weight_init_seed=args.seed)
    sim = SimilarityConfig(lam=0.0, pool_multiplier=100, rng_seed=args.seed)

    print(f"dataset: {len(d)} rows, encoded width {d.width}")
    m = train(d, hp)
    print(f"full model: train accuracy {accuracy(m, d):.2f}, "
          f"final loss {m.final_train_loss:.4f}")
    full_discm = estimate_discrim(m, d, sim, call_index=1000)
    print(f"full model discrimination on a {100 * len(d)}-pair pool: {full_discm:.2%}")

    debiased, report = debias_data(
        d, DebiasConfig(similarity=sim, hp=hp, solver=SolverConfig(), chunk_percent=1.0)
    )
    print("influence ranking (most harmful first):",
          ", ".join(f"#{rid}" for rid in report.ranking.row_ids))
    print(f"removal loop: stop index {report.stop_index}, "
          f"removed rows {list(report.removed_row_ids)}")
    for mark in report.trace:
        print(f"  chunk {mark.chunk_index}: removed {mark.rows_removed} rows, "
              f"discrimination {mark.discrimination:.2%}")

    retrained = train(debiased, hp)
    post_discm = estimate_discrim(retrained, d, sim, call_index=1001)
    print(f"retrained without {list(report.removed_row_ids)}: "
          f"accuracy {accuracy(retrained, debiased):.2f} on the survivors, "
          f"discrimination {post_discm:.2%}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
