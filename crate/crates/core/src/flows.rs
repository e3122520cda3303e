//! Explicit particle discretization of Wasserstein gradient flows, with an
//! optional geodesic retraction onto a Wasserstein ball.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::Functional;
use crate::measure::DiscreteMeasure;
use crate::ot;

const DIVERGENCE_BOUND: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Descent,
    Ascent,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Descent => -1.0,
            Direction::Ascent => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ball {
    pub center: DiscreteMeasure,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub step: f64,
    pub max_iters: usize,
    pub stationarity_tol: f64,
    #[serde(default)]
    pub ball: Option<Ball>,
    pub direction: Direction,
    /// Recorded with the trace; the explicit scheme itself draws no randomness.
    #[serde(default)]
    pub seed: u64,
}

impl FlowConfig {
    pub fn new(step: f64, max_iters: usize, direction: Direction) -> Self {
        Self { step, max_iters, stationarity_tol: 1e-8, ball: None, direction, seed: 0 }
    }

    pub fn with_ball(mut self, center: DiscreteMeasure, eps: f64) -> Self {
        self.ball = Some(Ball { center, eps });
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.stationarity_tol = tol;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::InvalidConfig(format!("step must be positive, got {}", self.step)));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.stationarity_tol >= 0.0) {
            return Err(Error::InvalidConfig("tolerance must be nonnegative".into()));
        }
        if let Some(b) = &self.ball {
            if !(b.eps > 0.0 && b.eps.is_finite()) {
                return Err(Error::InvalidConfig(format!("ball radius must be positive, got {}", b.eps)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub iter: usize,
    pub value: f64,
    /// Stationarity residual, or the Lagrange alignment residual on the
    /// boundary of the ball.
    pub residual: f64,
    /// `W2` to the ball center when constrained.
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowTrace {
    pub records: Vec<FlowRecord>,
    pub final_measure: DiscreteMeasure,
    pub converged: bool,
}

impl FlowTrace {
    pub fn final_value(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.value)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("iter,value,residual,distance\n");
        for r in &self.records {
            let dist = r.distance.map_or(String::new(), |d| format!("{d:.16e}"));
            out.push_str(&format!("{},{:.16e},{:.16e},{}\n", r.iter, r.value, r.residual, dist));
        }
        out
    }
}

/// Residual and distance of `mu` for the current problem.
fn residual(j: &Functional, mu: &DiscreteMeasure, cfg: &FlowConfig) -> Result<(f64, Option<f64>)> {
    let g = j.gradient(mu)?;
    let Some(ball) = &cfg.ball else {
        return Ok((g.norm(), None));
    };
    let plan = ot::solve_ot(mu, &ball.center)?;
    let dist = plan.cost.max(0.0).sqrt();
    if dist < ball.eps - 1e-9 * ball.eps.max(1.0) {
        return Ok((g.norm(), Some(dist)));
    }
    // grad of K = W2^2(., center) / 2 is Id - T toward the center.
    let gk = ot::extract_map(&plan).displacement().scaled(-1.0);
    let nk2 = gk.inner(&gk);
    if nk2 <= 0.0 {
        return Ok((g.norm(), Some(dist)));
    }
    let lambda = g.inner(&gk) / nk2;
    // Maximizers push outward (lambda >= 0), minimizers inward (lambda <= 0).
    if lambda * cfg.direction.sign() < 0.0 {
        return Ok((g.norm(), Some(dist)));
    }
    Ok((g.add_scaled(-lambda, &gk).norm(), Some(dist)))
}

/// Runs `mu_{k+1} = (Id -/+ step grad J(mu_k))#mu_k`, retracted onto the
/// ball after every step when one is configured.
pub fn run_flow(j: &Functional, mu0: &DiscreteMeasure, cfg: &FlowConfig) -> Result<FlowTrace> {
    cfg.validate()?;
    let mut mu = match &cfg.ball {
        Some(b) => ot::project_to_ball(mu0, &b.center, b.eps)?,
        None => mu0.clone(),
    };
    let mut records = Vec::new();
    let mut converged = false;
    for iter in 0..=cfg.max_iters {
        let value = j.evaluate_discrete(&mu)?;
        let (res, distance) = residual(j, &mu, cfg)?;
        records.push(FlowRecord { iter, value, residual: res, distance });
        if res <= cfg.stationarity_tol {
            converged = true;
            break;
        }
        if iter == cfg.max_iters {
            break;
        }
        let g = j.gradient(&mu)?;
        let shift = cfg.direction.sign() * cfg.step;
        let atoms: Vec<_> = mu.atoms().iter().zip(g.vectors()).map(|(x, v)| x + v * shift).collect();
        if atoms.iter().any(|a| a.iter().any(|c| !c.is_finite() || c.abs() > DIVERGENCE_BOUND)) {
            return Err(Error::NonFiniteIterate { iter: iter + 1 });
        }
        mu = DiscreteMeasure::from_parts_unchecked(atoms, mu.weights().to_vec());
        if let Some(b) = &cfg.ball {
            mu = ot::project_to_ball(&mu, &b.center, b.eps)?;
        }
    }
    Ok(FlowTrace { records, final_measure: mu, converged })
}
