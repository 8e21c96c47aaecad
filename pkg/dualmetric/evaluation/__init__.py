"""Metrics and experiment drivers"""
