# Training module
# Optimizer and the warm-up / adaptation loop
