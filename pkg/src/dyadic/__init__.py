"""Dyadic director: nonverbal behavior direction for two conversing characters."""
