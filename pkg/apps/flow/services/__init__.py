"""Objective, sampler, classifier, metrics and artifact services"""
