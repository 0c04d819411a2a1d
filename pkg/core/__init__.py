# Core numerics: matrix substrate, model, losses, noise model and gradient oracle
