# SkillFlow: skill acquisition between peer agents, cost simulations and benchmarks.
