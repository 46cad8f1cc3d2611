"""Small run configurations shared by the CLI and acceptance tests."""
from pathlib import Path

BROWNIAN = """
[model]
kind = linear
rates = [0.0]
modes = 1

[diffusion]
kind = additive
sigma = [1.0]

[grid]
T = 1.0
steps = {steps}

[noise]
eps = [0.2, 0.1, 0.05]
paths = {paths}
seed = 3
threads = {threads}
"""

TARGET = """
[target]
kind = halfspace
direction = [1.0]
level = 1.0

[rate]
restarts = 1
"""

HEAT_JUMPS = """
[model]
kind = heat
nu = 0.5
modes = 8

[diffusion]
kind = additive
sigma = 0.5

[jump]
kind = saturated
low = -1.0
high = 1.0
rate = 1.0
cells = 4

[initial]
mode = 1
amplitude = 1.0

[grid]
T = 0.5
steps = {steps}

[noise]
eps = [0.1, 0.05, 0.025]
paths = {paths}
seed = 5
threads = {threads}

[control]
f_value = [0.5, 0.2]
g_value = 1.5

[hypotheses]
samples = 200
"""


def write(tmp: Path, name: str, text: str, **kw) -> Path:
    kw = {"steps": 64, "paths": 200, "threads": 1, **kw}
    path = tmp / name
    path.write_text(text.format(**kw))
    return path
