"""Dataset storage: indexed rating tables, file IO, synthetic data"""
