"""Write the first N Joe-Kuo (new-joe-kuo-6.21201) Sobol dimensions as text.

scipy ships the same table in binary form; this script rewrites a prefix of
it in the original published layout (d s a m_1 ... m_s) so the package does
not depend on a private scipy file at runtime.
"""

import argparse
import os

import numpy as np
import scipy.stats


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--dims", type=int, default=2048)
    parser.add_argument("--out", default="src/qmcpricer/data/joe_kuo_6.txt")
    args = parser.parse_args()

    path = os.path.join(os.path.dirname(scipy.stats.__file__), "_sobol_direction_numbers.npz")
    table = np.load(path)
    poly, vinit = table["poly"], table["vinit"]

    with open(args.out, "w") as fh:
        fh.write("# Sobol direction numbers, Joe & Kuo new-joe-kuo-6.21201 (first %d dimensions)\n" % args.dims)
        fh.write("d s a m_i\n")
        for j in range(1, args.dims):
            p = int(poly[j])
            s = p.bit_length() - 1
            a = (p >> 1) & ((1 << (s - 1)) - 1)
            m = " ".join(str(int(v)) for v in vinit[j, :s])
            fh.write(f"{j + 1} {s} {a} {m}\n")


if __name__ == "__main__":
    main()
