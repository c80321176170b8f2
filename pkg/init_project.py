"""
init_project.py
Creates the working directories and writes the synthetic CSV sources used by
configs/*.toml when [data] source points at a file.

Usage:
    python init_project.py
"""

from pathlib import Path

from src.data import synth_pair, write_csv

# Canonical project structure
structure = {
    "data/sources": [],
    "runs": [],
    "configs": [],
}

# name: (train class counts, test class counts)
SOURCES = {
    "alzheimer_like": ([724, 49, 2566, 1781], [172, 15, 634, 459]),
    "alzheimer_like_cia": ([824, 49, 2566, 1781], [172, 15, 634, 459]),
}
DIM = 16
SPREAD = 1.0
SEED = 7

for folder in structure:
    Path(folder).mkdir(parents=True, exist_ok=True)

for name, (train_counts, test_counts) in SOURCES.items():
    train_path = Path("data/sources") / f"{name}_train.csv"
    test_path = Path("data/sources") / f"{name}_test.csv"
    if train_path.exists() and test_path.exists():
        print(f"[init] {name}: already present")
        continue
    train, test = synth_pair(train_counts, test_counts, DIM, SPREAD, SEED)
    write_csv(train_path, train, header=True)
    write_csv(test_path, test, header=True)
    print(f"[init] {name}: {len(train)} train / {len(test)} test rows")

print("fedsim project structure created successfully.")
