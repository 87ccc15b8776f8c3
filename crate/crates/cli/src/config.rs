//! Plain `key = value` run configuration. `#` starts a comment.
//!
//! ```text
//! clock_hz = 200e6
//! power_watts = 0.351
//! cores = 5
//! instr_mem_depth = 32768
//! feature_mem_depth = 4096
//! header_width = 32
//! ```

use std::path::Path;

use tmaccel::{CoreConfig, HeaderWidth};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub core: CoreConfig,
    pub cores: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            core: CoreConfig::default(),
            cores: 1,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let at = |msg: String| format!("line {}: {msg}", n + 1);
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| at(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let num = |v: &str| v.parse::<f64>().map_err(|e| at(format!("{key}: {e}")));
            let int = |v: &str| v.parse::<usize>().map_err(|e| at(format!("{key}: {e}")));
            match key {
                "clock_hz" => cfg.core.clock_hz = num(value)?,
                "power_watts" => cfg.core.power_watts = num(value)?,
                "cores" => cfg.cores = int(value)?,
                "instr_mem_depth" => cfg.core.instr_mem_depth = int(value)?,
                "feature_mem_depth" => cfg.core.feature_mem_depth = int(value)?,
                "header_width" => {
                    let bits = value.parse::<u32>().map_err(|e| at(format!("{key}: {e}")))?;
                    cfg.core.header_width = HeaderWidth::from_bits(bits).map_err(|e| at(e.to_string()))?;
                }
                other => return Err(at(format!("unknown key {other:?}"))),
            }
        }
        if cfg.cores == 0 {
            return Err("cores must be >= 1".into());
        }
        cfg.core.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::parse(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}
