import torch

# One CPU: extra intra-op threads only add contention to the small GRU batches.
torch.set_num_threads(1)
