"""Domain types for datasets, training and reports"""
