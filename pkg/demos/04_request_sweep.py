"""
Sweeping the request load
=========================

Repeat the full simulation for several request counts and seeds and compare
the orchestrators' averages. The same numbers are what ``ascetic sweep``
writes to summary.csv.
"""

from ascetic.simctl import ExperimentConfig, sweep
from ascetic.workload import ScenarioParams

config = ExperimentConfig(
    nodes=20,
    scenario=ScenarioParams(horizon=6),
    orchestrators=("wise", "ccam", "random"),
    predictor="frequency",
    axis="requests",
    axis_values=(20, 40, 80),
    repetitions=3,
)
result = sweep(config)
print(result.summary_csv())

# plotdata.csv has one (panel, orchestrator, x, y) row per point, ready for any plotting tool.
for line in result.plotdata_csv().splitlines()[:5]:
    print(line)
