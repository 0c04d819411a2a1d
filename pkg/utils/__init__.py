# Utils module
# Logging setup, monitoring and CLI decorators
