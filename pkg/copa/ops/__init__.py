# copa library operations: geometry, part modeling, constraints, solving,
# grasp selection, oracles, post-grasp planning, scenes and overlays.
