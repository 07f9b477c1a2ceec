from .autodiff import (
    Var, backward, no_grad, add, sub, mul, div, exp, log, tanh, sigmoid, relu,
    softmax, log_softmax, clip, minimum, vsum, mean, reshape, getitem, concat,
    stack, matmul, dot, as_var,
)
from .ops import (
    conv2d, depthwise_conv2d, depthwise_separable_conv, pool, batchnorm,
    BatchNormStats, global_avg_pool, dense, cross_entropy, out_size,
)
from .sampling import (
    make_rng, spawn_rngs, soften, categorical_sample, categorical_stats,
    bernoulli_sample, bernoulli_stats,
)
