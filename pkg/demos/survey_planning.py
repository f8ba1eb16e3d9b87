"""
From feature size to a flight plan
==================================

The smallest visible attribute of a feature bounds the GSD at which
segmentation starts to fail; the plan then sizes the survey at that GSD.
"""

from geoseg.survey import (SvaMeasurements, cording_fixtures, cording_interval,
                           equivalent_area, min_train_tiles_for, plan_survey,
                           sufficiency_check)

for name, (m, iv) in cording_fixtures().items():
    lo, hi = iv.rounded(3)
    print(f"{name:24s} SVA {min(m.measurements)}-{max(m.measurements)} m -> ({lo}, {hi}) m/px")

leaves = SvaMeasurements("chayote leaves", (0.15, 0.22, 0.35), "circular-diameter")
iv = cording_interval(leaves)
print("is 0.08 m/px inside the critical interval?", 0.08 in iv)

# the same pixel budget covers a quadratically larger area at coarser GSD
for gsd in (0.022, 0.04, 0.08, 0.3, 1.0):
    print(f"{gsd:>5} m/px covers {equivalent_area(gsd):9.2f} km^2")

need = min_train_tiles_for(3001)
plan = plan_survey(area=0.5, gsd=0.05, tile=512, stride=0.5, min_train_tiles=need)
print(plan.report())

print(sufficiency_check(254, need))
