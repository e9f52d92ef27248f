"""Attacker-side reconnaissance: match field inference and idle timeout estimation"""
