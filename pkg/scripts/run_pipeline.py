"""Script to run the whole pipeline end to end on synthetic data"""

import csv
import sys
import tempfile
from pathlib import Path

from dualmetric.main import run

TRAIN_FLAGS = ["--seed", "0", "--epochs", "5", "--dim", "8", "--autoencoder-epochs", "10"]


def step(title: str, argv: list[str], expect_code: int = 0) -> None:
    """Run one CLI command and stop the script on an unexpected exit code"""
    print(f"\n▶️  {title}")
    print(f"   dualmetric {' '.join(argv)}")
    code = run(argv)
    if code != expect_code:
        print(f"❌ {title} exited with {code}, expected {expect_code}")
        sys.exit(1)
    print(f"✅ {title} (exit {code})")


def read_rows(path: Path) -> list[dict[str, str]]:
    with path.open(newline="", encoding="utf-8") as handle:
        return list(csv.DictReader(handle))


def main() -> None:
    workdir = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="dualmetric-"))
    data = workdir / "data"
    checkpoint = workdir / "checkpoint"
    domain_flags = [
        "--domain-a", str(data / "domain_a"),
        "--domain-b", str(data / "domain_b"),
        "--registry", str(data / "registry.csv"),
    ]  # fmt: skip

    print("=" * 60)
    print(f"🧪 Dual metric learning pipeline in {workdir}")
    print("=" * 60)

    # Step 1: Data
    step(
        "Generating synthetic domains",
        ["synth", "--out", str(data), "--seed", "0", "--users", "200", "--items", "100", "--overlap", "60", "--dim", "8"],
    )

    # Step 2: Train and evaluate
    step("Training", ["train", *domain_flags, "--out", str(checkpoint), *TRAIN_FLAGS])
    step("Evaluating", ["eval", "--out", str(checkpoint)])

    # Step 3: Experiments
    step(
        "Overlap ablation",
        ["ablate-overlap", *domain_flags, "--out", str(workdir / "ablation"), "--counts", "0,8,all", *TRAIN_FLAGS],
    )
    step("Dual NMF demo", ["nmf-demo", "--out", str(workdir / "nmf"), "--seed", "0"])
    step("Dual NMF demo with alpha=0.6 (refused)", ["nmf-demo", "--out", str(workdir / "nmf-bad"), "--alpha", "0.6"], 2)

    # Summary
    print("\n" + "=" * 60)
    print("📈 Test metrics")
    print("=" * 60)
    for row in read_rows(checkpoint / "metrics.csv"):
        print(f"  - {row['domain']:<10} {row['metric']:<16} {float(row['value']):.4f}")

    history = read_rows(workdir / "nmf" / "nmf_history.csv")
    print(f"\nNMF iterations: {len(history)}, final objective {float(history[-1]['objective']):.6g}")

    print("\n" + "=" * 60)
    print("✅ Pipeline completed successfully!")
    print("=" * 60)


if __name__ == "__main__":
    main()
