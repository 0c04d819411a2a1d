# Database module
# Optional run registry models and operations
