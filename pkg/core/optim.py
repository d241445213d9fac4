"""Adam optimizer over named parameter arrays."""

import logging
from typing import Dict, Tuple

import numpy as np

from models.params import AdamState
from utils.constants import ADAM_BETA1, ADAM_BETA2, ADAM_EPS, ERROR_MESSAGES
from utils.errors import ShapeMismatch

logger = logging.getLogger(__name__)


def adam_step(
    params: Dict[str, np.ndarray],
    grads: Dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = ADAM_BETA1,
    beta2: float = ADAM_BETA2,
    eps: float = ADAM_EPS,
) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """
    One bias-corrected Adam update.

    Inputs are left untouched; new parameter arrays and a new state are returned.

    Args:
        params: name -> parameter array
        grads: name -> gradient array (same shapes)
        state: moments from the previous step
        lr: learning rate

    Returns:
        Tuple of (updated params, updated state)
    """
    t = state.t + 1
    correction1 = 1.0 - beta1 ** t
    correction2 = 1.0 - beta2 ** t

    new_params: Dict[str, np.ndarray] = {}
    new_m: Dict[str, np.ndarray] = {}
    new_v: Dict[str, np.ndarray] = {}
    for name, param in params.items():
        grad = grads[name]
        if grad.shape != param.shape:
            raise ShapeMismatch(ERROR_MESSAGES["SHAPE_MISMATCH"].format(
                op=f"adam_step[{name}]", left=param.shape, right=grad.shape))
        m = state.m.get(name, np.zeros_like(param))
        v = state.v.get(name, np.zeros_like(param))
        if m.shape != param.shape:
            raise ShapeMismatch(ERROR_MESSAGES["SHAPE_MISMATCH"].format(
                op=f"adam_state[{name}]", left=param.shape, right=m.shape))

        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * (grad * grad)
        m_hat = m / correction1
        v_hat = v / correction2
        new_params[name] = param - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[name] = m
        new_v[name] = v

    logger.debug("adam step %d over %d tensors", t, len(params))
    return new_params, AdamState(m=new_m, v=new_v, t=t)
