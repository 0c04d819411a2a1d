# Data module
# Synthetic domain pairs, source corruption and dataset files
