"""
Learning-rate schedules.

cosine_with_warmup (t counts optimizer steps):
    t < w:  base_lr * (t + 1) / w
    t >= w: 0.5 * base_lr * (1 + cos(pi * (t - w) / (T - w))), clamped at t = T
step (t counts epochs):
    base_lr * gamma ** floor(t / step_size)
"""

import dataclasses
import math

from config import ScheduleSpec


def lr_at(spec: ScheduleSpec, t: int) -> float:
    """t is the 0-based step index; warmup counts steps from 1, so step t runs at base_lr * (t + 1) / warmup."""
    if spec.kind == "step":
        return spec.base_lr * spec.gamma ** (t // spec.step_size)
    if spec.kind != "cosine_with_warmup":
        raise ValueError(f"unknown schedule kind '{spec.kind}'")
    warmup, total = spec.warmup_steps, spec.total_steps
    if t < warmup:
        return spec.base_lr * (t + 1) / warmup
    if total <= warmup:
        return spec.base_lr
    progress = min(t - warmup, total - warmup) / (total - warmup)
    return 0.5 * spec.base_lr * (1.0 + math.cos(math.pi * progress))


def resolve(spec: ScheduleSpec, steps_per_epoch: int, epochs: int, warmup_epochs: int = 0) -> ScheduleSpec:
    """Fill warmup_steps / total_steps left at 0 from the run length."""
    total = spec.total_steps or steps_per_epoch * epochs
    warmup = spec.warmup_steps or steps_per_epoch * warmup_epochs
    return dataclasses.replace(spec, total_steps=total, warmup_steps=min(warmup, total))


def lr_for(spec: ScheduleSpec, step: int, epoch: int) -> float:
    """Dispatch on what the schedule counts."""
    return lr_at(spec, epoch if spec.kind == "step" else step)
