"""
Update rules for the POI latent matrix.

Adam keeps exponentially decaying averages of past gradients and squared
gradients and corrects their bias toward zero; GradientDescent is the plain
V <- V - gamma * G step used for the ablation and the PB baseline.
"""

from typing import Protocol

import numpy as np

from .model import AdamState


class Optimizer(Protocol):
    def step(self, params: np.ndarray, grad: np.ndarray, state: AdamState) -> np.ndarray: ...


class Adam:
    """Adam with bias-corrected moments."""

    def __init__(self, lr: float = 1.0, beta1: float = 0.9, beta2: float = 0.999, epsilon: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon

    def step(self, params: np.ndarray, grad: np.ndarray, state: AdamState) -> np.ndarray:
        """
        Apply one update.

        Args:
            params: Current parameters
            grad: Gradient of the objective at params
            state: Moments, updated in place

        Returns:
            np.ndarray: New parameters
        """
        state.step += 1

        state.m *= self.beta1
        state.m += (1.0 - self.beta1) * grad

        state.v *= self.beta2
        state.v += (1.0 - self.beta2) * (grad * grad)

        m_hat = state.m / (1.0 - self.beta1**state.step)
        v_hat = state.v / (1.0 - self.beta2**state.step)

        with np.errstate(divide="ignore", invalid="ignore"):
            update = np.where(m_hat == 0.0, 0.0, m_hat / (np.sqrt(v_hat) + self.epsilon))
        return params - self.lr * update


class GradientDescent:
    """Plain gradient steps; the moment state is only used as a step counter."""

    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: np.ndarray, grad: np.ndarray, state: AdamState) -> np.ndarray:
        state.step += 1
        return params - self.lr * grad
