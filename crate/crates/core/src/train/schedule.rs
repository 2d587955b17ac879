use core::f64::consts::PI;

use super::TrainConfig;
use crate::error::Result;
use crate::invalid;

/// Learning rate at fractional epoch `t`: linear warmup from 0 to `base_lr`
/// over `warmup_epochs`, then half-cosine decay to 0 at `epochs`.
pub fn lr_at(cfg: &TrainConfig, t: f64) -> Result<f64> {
    let epochs = cfg.epochs as f64;
    if !(0.0..=epochs).contains(&t) {
        return invalid!("schedule time {t} outside [0, {epochs}]");
    }
    let warmup = cfg.warmup_epochs as f64;
    if warmup > 0.0 && t <= warmup {
        return Ok(cfg.base_lr * (t / warmup));
    }
    Ok(cfg.base_lr * 0.5 * (1.0 + libm::cos(PI * (t - warmup) / (epochs - warmup))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn anchors() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_at(&cfg, 0.0).unwrap(), 0.0);
        assert_eq!(lr_at(&cfg, 3.0).unwrap(), 0.1);
        assert!(lr_at(&cfg, 30.0).unwrap().abs() < 1e-18);
        assert!((lr_at(&cfg, 16.5).unwrap() - 0.05).abs() < 1e-15);
        assert!(lr_at(&cfg, 30.5).is_err());
        assert!(lr_at(&cfg, -0.1).is_err());
    }

    #[test]
    fn no_warmup_starts_at_base() {
        let cfg = TrainConfig { warmup_epochs: 0, epochs: 4, ..Default::default() };
        assert_eq!(lr_at(&cfg, 0.0).unwrap(), 0.1);
    }
}
