use super::TrainConfig;

/// Cosine annealing with warm restarts every `restart_period` iterations.
pub fn cosine_lr(t: usize, cfg: &TrainConfig) -> f64 {
    let period = cfg.restart_period.max(1);
    let phase = (t % period) as f64 / period as f64;
    // Written around base_lr so every restart returns it exactly.
    let lr = cfg.base_lr - 0.5 * (cfg.base_lr - cfg.min_lr) * (1.0 - (std::f64::consts::PI * phase).cos());
    lr.clamp(cfg.min_lr, cfg.base_lr)
}
