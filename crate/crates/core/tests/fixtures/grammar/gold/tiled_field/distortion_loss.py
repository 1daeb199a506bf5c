# role: Loss
from .loss import rgb_loss


def distortion_loss(weights, intervals):
    return (weights * intervals).sum()


def total_loss(pred, target, weights, intervals):
    return rgb_loss(pred, target) + 0.01 * distortion_loss(weights, intervals)
