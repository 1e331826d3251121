use std::f64::consts::TAU;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A disc on a rigid arm swinging as `φ_k = φ_max sin(ψ_k)` on a pixel grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PendulumConfig {
    pub height: usize,
    pub width: usize,
    /// Disc radius in pixels.
    pub radius: f64,
    /// Swing amplitude in radians.
    pub amplitude: f64,
    /// Frames per oscillation before the speed-up.
    pub period: f64,
    /// Frames stacked into one state, newest first.
    pub stacked: usize,
    /// Number of states to emit.
    pub states: usize,
    /// State index from which the oscillation runs twice as fast.
    pub doubling_at: Option<usize>,
}

impl Default for PendulumConfig {
    fn default() -> Self {
        Self {
            height: 48,
            width: 60,
            radius: 4.0,
            amplitude: 0.5,
            period: 48.0,
            stacked: 3,
            states: 480,
            doubling_at: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PendulumRun {
    /// `(stacked * height * width) x states`.
    pub states: DMatrix<f64>,
    /// True argument `2π/period` (doubled after the splice) per state.
    pub theta: Vec<f64>,
    /// Individual frames, oldest first; frame `k + stacked - 1` is the newest
    /// frame of state `k`.
    pub frames: Vec<DVector<f64>>,
}

struct Geometry {
    pivot: (f64, f64),
    arm: f64,
}

impl PendulumConfig {
    pub fn state_dim(&self) -> usize {
        self.stacked * self.height * self.width
    }

    fn geometry(&self) -> Result<Geometry> {
        if self.height == 0 || self.width == 0 || self.stacked == 0 {
            return Err(Error::Config(
                "grid and stack sizes must be positive".into(),
            ));
        }
        if !(self.period > 0.0) || !(self.radius > 0.0) {
            return Err(Error::Config("period and radius must be positive".into()));
        }
        if let Some(d) = self.doubling_at {
            if d >= self.states {
                return Err(Error::Config(format!(
                    "doubling index {d} is past the last state"
                )));
            }
        }
        let pivot = ((self.width as f64 - 1.0) / 2.0, 1.0);
        let arm = self.height as f64 - 2.0 - pivot.1 - self.radius;
        // Extreme positions must keep the whole disc on the grid.
        let dx = arm * self.amplitude.abs().sin();
        let fits = arm > 0.0
            && self.amplitude.abs() < std::f64::consts::FRAC_PI_2
            && pivot.0 - dx - self.radius >= 0.0
            && pivot.0 + dx + self.radius <= self.width as f64 - 1.0
            && pivot.1 + arm + self.radius <= self.height as f64 - 1.0;
        if !fits {
            return Err(Error::Config(format!(
                "disc of radius {} swinging {} rad leaves the {}x{} grid",
                self.radius, self.amplitude, self.height, self.width
            )));
        }
        Ok(Geometry { pivot, arm })
    }

    /// Phase of frame `t` (frame 0 is the oldest frame of state 0).
    fn phase(&self, t: usize) -> f64 {
        let w = TAU / self.period;
        match self.doubling_at {
            Some(d) if t >= d + self.stacked - 1 => {
                let s = d + self.stacked - 1;
                w * s as f64 + 2.0 * w * (t - s) as f64
            }
            _ => w * t as f64,
        }
    }
}

/// Disc with a one-pixel linear edge ramp.
fn render(cfg: &PendulumConfig, geo: &Geometry, angle: f64) -> DVector<f64> {
    let cx = geo.pivot.0 + geo.arm * angle.sin();
    let cy = geo.pivot.1 + geo.arm * angle.cos();
    let mut frame = DVector::zeros(cfg.height * cfg.width);
    for r in 0..cfg.height {
        for c in 0..cfg.width {
            let d = (c as f64 - cx).hypot(r as f64 - cy);
            frame[r * cfg.width + c] = (cfg.radius + 0.5 - d).clamp(0.0, 1.0);
        }
    }
    frame
}

pub fn gen_pendulum_frames(cfg: &PendulumConfig) -> Result<PendulumRun> {
    let geo = cfg.geometry()?;
    let total = cfg.states + cfg.stacked - 1;
    let frames: Vec<DVector<f64>> = (0..total)
        .map(|t| render(cfg, &geo, cfg.amplitude * cfg.phase(t).sin()))
        .collect();
    let px = cfg.height * cfg.width;
    let mut states = DMatrix::zeros(cfg.state_dim(), cfg.states);
    for k in 0..cfg.states {
        let newest = k + cfg.stacked - 1;
        for lag in 0..cfg.stacked {
            states
                .view_mut((lag * px, k), (px, 1))
                .copy_from(&frames[newest - lag]);
        }
    }
    let base = TAU / cfg.period;
    let theta = (0..cfg.states)
        .map(|k| match cfg.doubling_at {
            Some(d) if k >= d => 2.0 * base,
            _ => base,
        })
        .collect();
    Ok(PendulumRun {
        states,
        theta,
        frames,
    })
}

/// Binary greyscale image, values in `[0, 1]` scaled to `0..=255`.
pub fn write_pgm(frame: &DVector<f64>, height: usize, width: usize, path: &Path) -> Result<()> {
    if frame.len() != height * width {
        return Err(Error::dim("pgm frame", height * width, frame.len()));
    }
    let mut f =
        std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    write!(f, "P5\n{width} {height}\n255\n").map_err(|e| Error::io(path, e))?;
    let bytes: Vec<u8> = frame
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    f.flush().map_err(|e| Error::io(path, e))
}
