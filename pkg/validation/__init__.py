# Validation module
