"""Two-level index on a planted instance where the table count is small enough to build.

At c = 3 the outer level needs only k = 2 concatenated functions, so the per-table
success probability Q is large and a few dozen tables suffice.
"""

from twolevel_lsh.harness.bench import BenchmarkConfig, run_recall

cfg = BenchmarkConfig(n=2000, d=32, c=3.0, tau=2.0, n_queries=300, seed=1)
report = run_recall(cfg)
print(report.to_text())
print()
print(f"two-level recall {report.get('two_level_recall'):.3f} with {report.get('two_level_tables')} tables; "
      f"classic recall {report.get('classic_recall'):.3f} with {report.get('classic_tables')} tables")
