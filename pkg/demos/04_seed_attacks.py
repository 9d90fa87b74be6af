"""
Attacks on the shuffle key
==========================

With the seed the shuffle is undone exactly. Without it the attacker has
to search the N! orderings; that only works for very few blocks.
"""
import numpy as np

from pemiu_toolkit import (brute_force_attack, cosine_similarity, known_seed_attack, normalize,
                           partition, protect, sample_uniform)
from pemiu_toolkit.attack import gaussian_channel

rng = np.random.default_rng(3)
v = normalize(rng.standard_normal(512))

part = partition(512, 32)
vp = protect(v, sample_uniform(part, seed=11))
print("known seed, clean:", cosine_similarity(known_seed_attack(vp, 11, part=part), v))
noisy = known_seed_attack(vp, 11, gaussian_channel(0.05, seed=0), part=part)
print("known seed, noisy channel:", round(cosine_similarity(noisy, v), 4))
print("wrong seed:", round(cosine_similarity(known_seed_attack(vp, 12, part=part), v), 4))

# N=4: at most 24 guesses
p4 = partition(512, 128)
report = brute_force_attack(protect(v, sample_uniform(p4, 5)), v, p4, 0.999, 24)
print(report.to_json())

# N=32: a hundred thousand random guesses do not dent 32!
p32 = partition(512, 16)
vp32 = protect(v, sample_uniform(p32, 5))
report = brute_force_attack(vp32, v, p32, 0.5, 10**5, order="random", seed=10_000)
print("success:", report.success, "tried:", report.candidates_tried,
      "space: 10^%.1f" % np.log10(float(report.search_space_size)))

# but random order draws seeds seed, seed+1, ... so a small integer key
# seed is found at once: the key space is the seed space, not N!
report = brute_force_attack(vp32, v, p32, 0.5, 10**5, order="random", seed=0)
print("small seed guessed after", report.candidates_tried, "draws")
