#!/usr/bin/env python3
"""
Quick verification of the lab on a small deployment.
Runs one drop per uplink mode, a short training run and a privacy check,
without writing any result files.
"""

import sys
from pathlib import Path

# Add parent directory to path for imports
sys.path.append(str(Path(__file__).parent.parent))

from data_model import MODES, ExperimentConfig, SystemConfig
from nodes.rich_output import formatter
from pipeline import run_drop
from sim.fl_engine import prepare_training, run_training
from sim.privacy import DpBudget, check_dp


def small_config() -> ExperimentConfig:
    return ExperimentConfig(system=SystemConfig(num_aps=8, num_ues=3, rounds=10)).validate()


def verify_drops():
    """One drop in every mode, power control against full power."""
    print("📡 Testing one drop per uplink mode...")
    config = small_config()
    for mode in MODES:
        result = run_drop(config, drop=0, mode=mode, power_mode="sca")
        if not result.ok:
            print(f"❌ {mode}: {(result.error or {}).get('error')}")
            continue
        print(f"✅ {mode}: {result.total_time_s:.4g} s "
              f"(full power {result.full_power_time_s:.4g} s, {result.reduction_pct:.1f}% saved)")


def verify_training():
    """Short over-the-air run; the gap must stay under its bound."""
    print("\n🧠 Testing over-the-air training...")
    trace = run_training(prepare_training(small_config(), seed=7), rounds=20, seed=7)
    last = trace.rows[-1]
    status = "✅" if last.gap <= last.bound else "❌"
    print(f"{status} Round {last.round}: gap {last.gap:.3e}, bound {last.bound:.3e}, lambda {last.lam:.3e}")


def verify_privacy():
    """Closed-form bound at a known point."""
    print("\n🔒 Testing privacy bound...")
    verdict = check_dp(1.0, DpBudget(epsilon=3.0, delta=0.1))
    status = "✅" if verdict.passed and abs(verdict.bound - 0.053991) < 1e-6 else "❌"
    print(f"{status} Lambda 1, epsilon 3: bound {verdict.bound:.6f}")


def main():
    """Run all verification steps."""
    print("🔍 Quick Verification - Cell-Free FL Lab")
    print("=" * 50)

    formatter.set_quiet(True)
    verify_drops()
    verify_training()
    verify_privacy()

    print("\n" + "=" * 50)
    print("✅ All verification steps completed!")


if __name__ == "__main__":
    main()
