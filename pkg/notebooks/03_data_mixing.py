# %% [markdown]
# # Data mixing on a synthetic reach task
#
# Two training recipes on the same 50 wild + 1 in-scene demos:
#
# * **full**: wild demos aligned to the in-scene demo, co-trained with it
# * **wild_only**: wild demos used in their own recording frame, no in-scene demo
#
# Each trained policy is rolled out in 20 randomized episodes. Training both
# recipes at 300 epochs takes a while on one core; pass a smaller epoch
# count on the command line for a quick look.

# %%
import sys
import time

from handxfer.experiments import data_mixing_experiment, report_json
from handxfer.vnpolicy import desk_config

epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 300

t0 = time.time()
results = data_mixing_experiment(config=desk_config(seed=0, epochs=epochs))
for name, res in results.items():
    print(f"{name:10s} success {res.evaluation.success_rate:.2f}   "
          f"final loss {res.log.epoch_loss[-1]:.2e}")
print(f"elapsed {time.time() - t0:.0f} s")

# %% [markdown]
# The full report is plain JSON with sorted keys, so two runs with the same
# seed can be compared byte for byte.

# %%
print(report_json(results)[:400], "...")
