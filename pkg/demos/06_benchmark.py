"""Criterion timing harness at reduced scale.

Times loss + gradients for both criteria over random batches (one
warmup run excluded, medians reported).  The full reference shapes are
150 frames / 40 labels and 700 frames / 200 labels; this demo uses the
small shape plus a shortened long shape to stay quick.
"""

from convasr.bench import BenchConfig, format_table, run_bench

small = run_bench(
    BenchConfig(frames=150, vocab=28, transcription=40, batch_sizes=(1, 4), repetitions=3, seed=0)
)
longer = run_bench(
    BenchConfig(frames=350, vocab=28, transcription=100, batch_sizes=(1, 4), repetitions=3, seed=0)
)

print(format_table(small + longer))

asg_small = next(r for r in small if r.criterion == "asg" and r.batch == 1)
asg_long = next(r for r in longer if r.criterion == "asg" and r.batch == 1)
print(f"\nasg per-item scaling {asg_long.frames}/{asg_small.frames} frames: "
      f"{asg_long.per_item_ms / asg_small.per_item_ms:.2f}x "
      "(roughly linear in frames: the lattice DP is O(frames x states))")
