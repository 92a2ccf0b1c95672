"""Print the deterministic annealed oracles behind the SPDE-limit checks.

Shows how slowly the smoothed conditional variance approaches its limit and
the non-monotone shape of the g^3 Hermite remainder along the epsilon sweep.

    python3 scripts/oracle_tables.py
"""
from fkscenery.field_models import hermite_coefficients, product_power
from fkscenery.spde import annealed_remainder_oracle, annealed_smoothed_oracle, annealed_Y2_oracle

ALPHAS = (0.4, 0.4, 0.4)
SWEEP = (0.8, 0.4, 0.28, 0.2, 0.14, 0.1, 0.07, 0.05, 0.025, 0.01, 0.001)


def main() -> None:
    limit = annealed_Y2_oracle(1.0, ALPHAS)
    h, Rg = hermite_coefficients("cube"), product_power(ALPHAS)
    print(f"annealed E Q_jj at t=1: {limit:.10f}")
    print(f"{'eps':>8} {'E Q_eps / E Q':>14} {'g^3 remainder':>14}")
    for eps in SWEEP:
        ratio = annealed_smoothed_oracle(1.0, ALPHAS, eps) / limit
        print(f"{eps:>8g} {ratio:>14.4f} {annealed_remainder_oracle(h, Rg, eps, 1.0):>14.4f}")


if __name__ == "__main__":
    main()
