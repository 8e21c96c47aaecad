"""Core components: configuration, errors, logging, dense linear algebra"""
