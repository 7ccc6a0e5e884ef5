//! Fixed-point iteration of the stationary scheme.

mod trace;
mod updates;

pub use trace::{InferenceTrace, SweepRecord};
pub use updates::{
    backward_message, damp_into, forward_message, incoming_future, incoming_past, observation_message,
    update_classical, update_lambda_trip, update_lambda_xtheta, update_q_dyn, update_q_dyn_into, update_q_y,
    update_q_y_into, update_r, TripletUpdate,
};

use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array3, Array4};
use serde::{Deserialize, Serialize};

use crate::coords::{consistency_residuals, init_coordinates, project_regions, Coordinates, InitStrategy, MultiplierSet};
use crate::error::{Error, Result};
use crate::exec::ExecPolicy;
use crate::model::{build_factor_graph, DiscreteModel};
use crate::objective::{local_adjusted_objective, InferenceMode};
use crate::oracle::stationarity_residuals;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// Messages forward over `t = 1..T`, then every slice block over
    /// `t = T..1`.
    #[default]
    ForwardBackward,
    /// All observation blocks, then all dynamics blocks, in time order.
    SequentialByBlock,
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "forward-backward" => Ok(Schedule::ForwardBackward),
            "sequential-by-block" => Ok(Schedule::SequentialByBlock),
            _ => Err(Error::Config(format!("unknown schedule `{s}`"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub max_sweeps: usize,
    pub tol_belief: f64,
    pub tol_residual: f64,
    /// Log-space damping weight on the previous belief, in `[0, 1)`.
    pub damping: f64,
    pub schedule: Schedule,
    pub mode: InferenceMode,
    /// Entries are clamped to at least this value before taking logs.
    pub epsilon_floor: f64,
    /// Gauge cap for unbounded triplet multiplier entries, in nats.
    pub trip_cap: f64,
    pub init: InitStrategy,
    pub policy: ExecPolicy,
    /// Evaluate stationarity residuals after every sweep rather than only
    /// after the last one.
    pub track_stationarity: bool,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            max_sweeps: 5000,
            tol_belief: 1e-9,
            tol_residual: 1e-8,
            damping: 0.5,
            schedule: Schedule::ForwardBackward,
            mode: InferenceMode::ActiveInference,
            epsilon_floor: 1e-300,
            trip_cap: 50.0,
            init: InitStrategy::PriorSeeded,
            policy: ExecPolicy::default(),
            track_stationarity: true,
        }
    }
}

impl EngineConfig {
    pub fn with_mode(mode: InferenceMode) -> Self {
        EngineConfig { mode, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::Config(format!("damping {} outside [0, 1)", self.damping)));
        }
        if !(self.tol_belief > 0.0) || !(self.tol_residual > 0.0) {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.max_sweeps == 0 {
            return Err(Error::Config("max_sweeps must be at least 1".into()));
        }
        if !(self.epsilon_floor > 0.0) || !(self.trip_cap > 0.0) {
            return Err(Error::Config("epsilon_floor and trip_cap must be positive".into()));
        }
        Ok(())
    }
}

struct Engine<'a> {
    model: &'a DiscreteModel,
    cfg: &'a EngineConfig,
    coords: Coordinates,
    mults: MultiplierSet,
    trace: InferenceTrace,
    q_y_buf: Array3<f64>,
    q_dyn_buf: Array4<f64>,
}

impl Engine<'_> {
    fn timed<T>(&mut self, class: &str, f: impl FnOnce(&mut Self) -> T) -> T {
        let start = Instant::now();
        let out = f(self);
        self.trace.add_time(class, start.elapsed().as_secs_f64());
        out
    }

    fn refresh_observation_messages(&mut self) {
        for t in 1..=self.model.cards.horizon {
            self.mults.obs[t - 1] = observation_message(self.model, &self.coords, t, self.cfg.mode);
        }
    }

    fn forward_pass(&mut self) {
        for t in 1..=self.model.cards.horizon {
            self.mults.fwd[t] = forward_message(self.model, &self.mults, t);
        }
    }

    fn backward_pass(&mut self) {
        for t in (1..=self.model.cards.horizon).rev() {
            self.mults.bwd[t - 1] = backward_message(self.model, &self.mults, t);
        }
    }

    /// project → r → Λ_{xθ} → q_y; returns the belief change.
    fn observation_block(&mut self, t: usize) -> Result<f64> {
        let (model, cfg) = (self.model, self.cfg);
        project_regions(&mut self.coords, t);
        let r = self.timed("update_r", |e| update_r(&e.coords, t));
        self.coords.slice_mut(t).r_chan = r;
        self.mults.obs[t - 1] = observation_message(model, &self.coords, t, cfg.mode);
        let lam = self.timed("update_lambda_xtheta", |e| update_lambda_xtheta(model, &e.mults, t, cfg.epsilon_floor))?;
        self.mults.lambda_xtheta[t - 1] = lam;
        self.timed("update_q_y", |e| {
            update_q_y_into(model, &e.coords, &e.mults, t, cfg.mode, cfg.policy, &mut e.q_y_buf)
        })?;
        let delta = damp_into(&mut self.coords.slice_mut(t).q_y, &self.q_y_buf, cfg.damping, cfg.epsilon_floor);
        project_regions(&mut self.coords, t);
        Ok(delta)
    }

    /// Λ_trip → q_dyn; returns the belief change.
    fn dynamics_block(&mut self, t: usize) -> Result<f64> {
        let (model, cfg) = (self.model, self.cfg);
        let trip = self.timed("update_lambda_trip", |e| update_lambda_trip(&e.coords, t, cfg.mode, cfg.trip_cap));
        self.trace.clamped_trip += trip.clamped;
        self.mults.lambda_trip[t - 1] = trip.lambda;
        self.timed("update_q_dyn", |e| update_q_dyn_into(model, &e.mults, t, cfg.policy, &mut e.q_dyn_buf))?;
        let delta = damp_into(&mut self.coords.slice_mut(t).q_dyn, &self.q_dyn_buf, cfg.damping, cfg.epsilon_floor);
        project_regions(&mut self.coords, t);
        Ok(delta)
    }

    fn classical(&mut self) {
        self.timed("update_classical", |e| update_classical(&mut e.coords, &e.mults));
    }

    fn sweep(&mut self) -> Result<f64> {
        let horizon = self.model.cards.horizon;
        let mut delta: f64 = 0.0;
        self.refresh_observation_messages();
        self.forward_pass();
        match self.cfg.schedule {
            Schedule::ForwardBackward => {
                let last = self.mults.bwd.len() - 1;
                let n = self.mults.bwd[last].len() as f64;
                self.mults.bwd[last].fill(1.0 / n);
                for t in (1..=horizon).rev() {
                    delta = delta.max(self.observation_block(t)?);
                    delta = delta.max(self.dynamics_block(t)?);
                    self.mults.bwd[t - 1] = backward_message(self.model, &self.mults, t);
                    self.classical();
                }
            }
            Schedule::SequentialByBlock => {
                self.backward_pass();
                for t in 1..=horizon {
                    delta = delta.max(self.observation_block(t)?);
                }
                for t in 1..=horizon {
                    delta = delta.max(self.dynamics_block(t)?);
                }
                self.classical();
            }
        }
        Ok(delta)
    }
}

fn singleton_delta(a: &Coordinates, b: &Coordinates) -> f64 {
    let mut d: f64 = 0.0;
    let mut upd = |x: &ndarray::Array1<f64>, y: &ndarray::Array1<f64>| {
        for (p, q) in x.iter().zip(y) {
            d = d.max((p - q).abs());
        }
    };
    upd(&a.q_theta, &b.q_theta);
    upd(&a.q_x0, &b.q_x0);
    for (s, r) in a.slices.iter().zip(&b.slices) {
        upd(&s.q_x, &r.q_x);
        upd(&s.q_u, &r.q_u);
        upd(&s.q_y_single, &r.q_y_single);
    }
    d
}

/// Runs the scheme until the belief change and all consistency residuals
/// fall below their tolerances, or `max_sweeps` is reached. Non-convergence
/// is reported through `trace.converged`.
pub fn run_inference(
    model: &DiscreteModel,
    config: &EngineConfig,
) -> Result<(Coordinates, MultiplierSet, InferenceTrace)> {
    config.validate()?;
    model.validate()?;
    let c = model.cards;
    let graph = build_factor_graph(model);
    let coords = init_coordinates(model, config.init.clone())?;
    let mut engine = Engine {
        model,
        cfg: config,
        coords,
        mults: MultiplierSet::new(model),
        trace: InferenceTrace::default(),
        q_y_buf: Array3::zeros((c.n_y, c.n_x, c.n_theta)),
        q_dyn_buf: Array4::zeros((c.n_x, c.n_x, c.n_theta, c.n_u)),
    };

    for sweep in 1..=config.max_sweeps {
        let before = engine.coords.clone();
        let mut delta = engine.sweep()?;
        delta = delta.max(singleton_delta(&before, &engine.coords));
        let residual = consistency_residuals(&engine.coords, &graph).max();
        let converged = delta < config.tol_belief && residual < config.tol_residual;
        let stationarity = if config.track_stationarity || converged || sweep == config.max_sweeps {
            stationarity_residuals(model, &engine.coords, &engine.mults, config.mode, config.epsilon_floor).max()
        } else {
            f64::NAN
        };
        let objective = local_adjusted_objective(model, &engine.coords, &graph, config.mode).total;
        engine.trace.records.push(SweepRecord {
            sweep,
            objective,
            max_delta: delta,
            max_residual: residual,
            max_stationarity_residual: stationarity,
        });
        engine.trace.sweeps = sweep;
        if converged {
            engine.trace.converged = true;
            break;
        }
    }
    Ok((engine.coords, engine.mults, engine.trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Cardinalities;
    use crate::sampling;

    #[test]
    fn config_rejects_bad_damping() {
        let cfg = EngineConfig { damping: 1.0, ..Default::default() };
        assert!(cfg.validate().is_err());
        let cfg = EngineConfig { tol_belief: 0.0, ..Default::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn schedule_names_parse() {
        assert_eq!("forward-backward".parse::<Schedule>().unwrap(), Schedule::ForwardBackward);
        assert!("random".parse::<Schedule>().is_err());
    }

    #[test]
    fn uniform_model_converges_immediately_in_every_mode() {
        let c = Cardinalities::new(2, 3, 2, 2, 2).unwrap();
        let m = DiscreteModel::uniform(c).unwrap();
        for mode in InferenceMode::ALL {
            let (coords, _, trace) = run_inference(&m, &EngineConfig::with_mode(mode)).unwrap();
            assert!(trace.converged, "{mode}");
            assert!(trace.sweeps <= 2, "{mode}: {}", trace.sweeps);
            assert!(coords.slice(1).q_y.iter().all(|&v| (v - 1.0 / 12.0).abs() < 1e-12));
        }
    }

    #[test]
    fn beliefs_stay_normalized_each_sweep() {
        let c = Cardinalities::new(3, 2, 2, 2, 3).unwrap();
        let m = sampling::random_model(c, 7, 1e-12);
        for max_sweeps in 1..=5 {
            let cfg = EngineConfig { max_sweeps, ..Default::default() };
            let (coords, _, _) = run_inference(&m, &cfg).unwrap();
            coords.check_normalized(1e-12).unwrap();
        }
    }

    #[test]
    fn schedules_reach_the_same_marginal_fixed_point() {
        let c = Cardinalities::new(3, 2, 2, 2, 2).unwrap();
        let m = sampling::random_model(c, 17, 1e-12);
        let a = run_inference(&m, &EngineConfig::with_mode(InferenceMode::Marginal)).unwrap();
        let cfg = EngineConfig {
            schedule: Schedule::SequentialByBlock,
            ..EngineConfig::with_mode(InferenceMode::Marginal)
        };
        let b = run_inference(&m, &cfg).unwrap();
        assert!(a.2.converged && b.2.converged);
        for (x, y) in a.0.slice(2).q_dyn.iter().zip(b.0.slice(2).q_dyn.iter()) {
            assert!((x - y).abs() < 1e-7);
        }
    }

    #[test]
    fn policies_give_identical_runs() {
        let c = Cardinalities::new(3, 2, 2, 2, 2).unwrap();
        let m = sampling::random_model(c, 3, 1e-12);
        let mut cfg = EngineConfig::with_mode(InferenceMode::MaxAmb);
        cfg.max_sweeps = 20;
        cfg.policy = ExecPolicy::Sequential;
        let a = run_inference(&m, &cfg).unwrap();
        cfg.policy = ExecPolicy::Parallel;
        let b = run_inference(&m, &cfg).unwrap();
        assert_eq!(a.0, b.0);
    }
}
