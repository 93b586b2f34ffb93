"""Bayesian inference for latent binary Markov random fields with intractable normalisers."""
