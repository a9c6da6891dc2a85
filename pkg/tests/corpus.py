"""Handcrafted grammars and witnesses shared by several test modules."""

ACK1_WITNESS = "(X1 (N -1) (R1 (X1 (N -1) (R1 (X1 (N -1) (R1 (X1 0) (T 2))) (T 2))) (T 2)))"

# two cycles on S with effects (-1, 2) and (1, 0), exiting into an Ackermann layer on W
TWO_CYCLES = """gvas 1
start S
S -> N R
R -> S T
S -> B S
S -> W Z
W -> N V
V -> W T
W -> 0
Z -> 0
N -> -1
T -> 2
B -> 1
"""
TWO_CYCLES_WITNESS = "(S (B 1) (S (N -1) (R (S (W (N -1) (V (W 0) (T 2))) (Z 0)) (T 2))))"

# a cycle with zero effect on both sides, so it pumps forward from any anchor
ZERO_EFFECT = "gvas 1\nstart S\nS -> A U\nU -> S B\nS -> 0\nA -> 1\nB -> -1\n"
ZERO_EFFECT_WITNESS = "(S (A 1) (U (S (A 1) (U (S 0) (B -1))) (B -1)))"

# every cycle leaves the left counter unchanged
LEFT_FLAT = "gvas 1\nstart S\nS -> A U\nU -> S B\nA -> 0\nB -> 1\nS -> 0\n"
