"""A hardware-free laboratory for studying conditional-swap leakage in
elliptic-curve scalar multiplication.

The package simulates the EM emissions of constant-time swap code inside
ECDSA signing, then runs the full attack pipeline against its own traces:
band-pass filtering and envelope extraction, swap-window alignment, Welch
t-test leakage assessment, Gaussian template classification of swap
conditions, nonce-bit reconstruction, and finally lattice-based private-key
recovery from partial nonces.
"""

__version__ = "0.1.0"
