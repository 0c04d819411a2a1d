# Evaluation module
# Metrics, reports, embedding export and experiment sweeps
