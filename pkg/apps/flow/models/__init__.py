"""Torch modules: denoiser, pair track, adapters and fold classifier"""
