from src.losses.dual_label import (
    LossBreakdown,
    bce_loss,
    coarse_masked_loss_L2,
    dice_loss,
    supervised_loss_L1,
    total_loss,
)
