#!/usr/bin/env python3
# Copyright 2026 The kgrec Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Writes the bundled two-block synthetic dataset.

200 users and 100 items in two blocks. Each block has five clusters of ten
items and twenty users; a user takes each item of their own cluster with
probability 0.85, other items of their block with 0.05 and items of the other
block with 0.005. The KG links every item to a genre (its cluster, with 10%
of links pointing at a random genre) and to a category (its block).
"""

import argparse
import pathlib
import random

USERS = 200
ITEMS = 100
CLUSTERS_PER_BLOCK = 5
ITEMS_PER_CLUSTER = 10
P_OWN, P_BLOCK, P_OTHER = 0.85, 0.05, 0.005
GENRE_NOISE = 0.1


def cluster_of_user(u):
    block = u // (USERS // 2)
    return block, (u % (USERS // 2)) // (USERS // 2 // CLUSTERS_PER_BLOCK)


def cluster_of_item(i):
    block = i // (ITEMS // 2)
    return block, (i % (ITEMS // 2)) // ITEMS_PER_CLUSTER


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=str(pathlib.Path(__file__).resolve().parent.parent
                                             / "data" / "synthetic"))
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()
    rng = random.Random(args.seed)
    out = pathlib.Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "interactions.tsv", "w") as f:
        for u in range(USERS):
            ub, uc = cluster_of_user(u)
            for i in range(ITEMS):
                ib, ic = cluster_of_item(i)
                p = P_OWN if (ub, uc) == (ib, ic) else P_BLOCK if ub == ib else P_OTHER
                if rng.random() < p:
                    f.write(f"{u}\t{i}\n")

    genres = 2 * CLUSTERS_PER_BLOCK
    with open(out / "kg.tsv", "w") as f, open(out / "alignment.tsv", "w") as a:
        for i in range(ITEMS):
            ib, ic = cluster_of_item(i)
            genre = ib * CLUSTERS_PER_BLOCK + ic
            if rng.random() < GENRE_NOISE:
                genre = rng.randrange(genres)
            f.write(f"item:{i}\thas_genre\tgenre:{genre}\n")
            f.write(f"item:{i}\tin_category\tcategory:{ib}\n")
            a.write(f"{i}\titem:{i}\n")


if __name__ == "__main__":
    main()
