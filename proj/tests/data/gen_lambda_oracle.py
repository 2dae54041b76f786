"""Regenerates lambda_oracle.csv: lambda(e) for e in [0, 300) computed in
exact rational arithmetic, rounded once to the nearest double and written
as a hex float."""
from fractions import Fraction

lam0, early, late, switch = Fraction(2000), Fraction(99, 100), Fraction(98, 100), 200

with open("lambda_oracle.csv", "w") as f:
    f.write("epoch,lambda_hex,lambda\n")
    for e in range(300):
        d = float(lam0 * early ** min(e, switch) * late ** max(0, e - switch))
        f.write(f"{e},{d.hex()},{d!r}\n")
