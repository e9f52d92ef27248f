"""Experiment orchestration, datasets, evaluation, export and the command line"""
