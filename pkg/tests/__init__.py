"""Tests for the application"""
