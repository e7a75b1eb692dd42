"""What the sparse expert layer saves at the published model size.

Each token is routed to 2 of 64 small experts, so the feed-forward block does
about half the work of a dense d -> 4d -> d block while holding far more
parameters in total.
"""
import numpy as np

from hyperformer import reference
from hyperformer.autograd import Tensor
from hyperformer.encoder import EncoderConfig, MoE, MoEConfig, count_flops, count_params

d, n, k = 400, 64, 2
moe_cfg = MoEConfig(experts=n, top_k=k)

layer = MoE(d, moe_cfg, np.random.default_rng(0))
tokens = Tensor(np.random.default_rng(1).standard_normal((1000, d)).astype(np.float32))
gate = layer.gate(tokens)
print("experts switched on per token:", sorted(set(gate.sum(axis=1).astype(int).tolist())))
layer(tokens)
print("expert evaluations for 1000 tokens:", layer.evaluations)

sparse, dense = EncoderConfig(hidden=d, moe=moe_cfg), EncoderConfig(hidden=d, moe=None)
flops = count_flops(sparse, 15)
print(f"FFN FLOPs for a 15-token sequence over 8 layers, MoE vs dense: {flops['moe_ffn']:,} vs {flops['dense_ffn']:,}"
      f"  (ratio {flops['moe_to_dense_ffn_ratio']:.2f})")
print(f"encoder FLOPs, MoE vs dense: {flops['moe_total']:,} vs {flops['dense_total']:,}")
print(f"published totals: {reference.FLOPS_WITH_MOE / 1e9:.3f}G with MoE, {reference.FLOPS_WITHOUT_MOE / 1e9:.3f}G without")

p_sparse, p_dense = count_params(sparse), count_params(dense)
print(f"encoder parameters: MoE total {p_sparse['total']:,}, active per token {p_sparse['active_per_token']:,}; "
      f"dense {p_dense['total']:,}")
