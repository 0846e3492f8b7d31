use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{derivatives_at, gamma_unchecked, CompartmentState, DelphiParams, ModelError, COMPARTMENTS};

const N: usize = CompartmentState::LEN;

/// States on a uniform time grid (`t` in days since the start date).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub states: Vec<CompartmentState>,
    pub params: DelphiParams,
}

/// The three series used downstream: fitting, backtesting and ventilator demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observables {
    pub t: Vec<f64>,
    pub detected_cases: Vec<f64>,
    pub detected_deaths: Vec<f64>,
    /// `DH_R + DH_D`.
    pub hospitalized: Vec<f64>,
}

/// Integrates with the fitted arctan response.
pub fn integrate(p: &DelphiParams, x0: &CompartmentState, horizon: f64, step: f64) -> Result<Trajectory, ModelError> {
    let (t0, k) = (p.fitted.t0, p.fitted.k);
    integrate_with(p, x0, horizon, step, |t| gamma_unchecked(t, t0, k))
}

/// Fixed-step RK4 with an arbitrary response curve `gamma(t)`.
///
/// `horizon` must be an integer multiple of `step`. After every step,
/// components in `[-1e-9 N, 0)` are clamped to zero; anything lower is an
/// error.
pub fn integrate_with<G>(
    p: &DelphiParams,
    x0: &CompartmentState,
    horizon: f64,
    step: f64,
    gamma: G,
) -> Result<Trajectory, ModelError>
where
    G: Fn(f64) -> f64,
{
    p.validate()?;
    if !(step > 0.0) || !step.is_finite() {
        return Err(ModelError::InvalidGrid(format!("step must be positive, got {step}")));
    }
    if !(horizon >= step) || !horizon.is_finite() {
        return Err(ModelError::InvalidGrid(format!(
            "horizon {horizon} must be at least one step ({step})"
        )));
    }
    let steps = (horizon / step).round();
    if (steps * step - horizon).abs() > 1e-9 * horizon {
        return Err(ModelError::InvalidGrid(format!(
            "horizon {horizon} is not a multiple of step {step}"
        )));
    }
    let steps = steps as usize;
    let floor = -1e-9 * p.population;
    check_state(&x0.to_array(), 0.0, floor)?;

    let rhs = |x: &[f64; N], t: f64| -> [f64; N] {
        derivatives_at(&CompartmentState::from_array(*x), gamma(t), p).to_array()
    };

    let mut t = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut x = x0.to_array();
    for v in x.iter_mut() {
        *v = v.max(0.0);
    }
    t.push(0.0);
    states.push(CompartmentState::from_array(x));

    for j in 0..steps {
        let tj = j as f64 * step;
        let k1 = rhs(&x, tj);
        let k2 = rhs(&axpy(&x, 0.5 * step, &k1), tj + 0.5 * step);
        let k3 = rhs(&axpy(&x, 0.5 * step, &k2), tj + 0.5 * step);
        let k4 = rhs(&axpy(&x, step, &k3), tj + step);
        for c in 0..N {
            x[c] += step / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
        }
        let t_next = (j + 1) as f64 * step;
        check_state(&x, t_next, floor)?;
        for v in x.iter_mut() {
            *v = v.max(0.0);
        }
        t.push(t_next);
        states.push(CompartmentState::from_array(x));
    }

    Ok(Trajectory {
        t,
        states,
        params: p.clone(),
    })
}

#[inline]
fn axpy(x: &[f64; N], a: f64, y: &[f64; N]) -> [f64; N] {
    let mut out = *x;
    for c in 0..N {
        out[c] += a * y[c];
    }
    out
}

fn check_state(x: &[f64; N], t: f64, floor: f64) -> Result<(), ModelError> {
    for (c, &v) in x.iter().enumerate() {
        if v.is_nan() || v < floor {
            return Err(ModelError::NegativeState {
                compartment: state_name(c),
                value: v,
                t,
            });
        }
    }
    Ok(())
}

fn state_name(c: usize) -> &'static str {
    match c {
        0..=10 => COMPARTMENTS[c],
        11 => "cases_detected",
        _ => "deaths_detected",
    }
}

impl Trajectory {
    pub fn step(&self) -> f64 {
        if self.t.len() > 1 {
            self.t[1] - self.t[0]
        } else {
            0.0
        }
    }

    pub fn horizon(&self) -> f64 {
        self.t.last().copied().unwrap_or(0.0)
    }

    /// Linear interpolation between grid nodes; `None` outside the grid.
    pub fn state_at(&self, t: f64) -> Option<CompartmentState> {
        let h = self.step();
        if self.t.is_empty() || t < 0.0 || t > self.horizon() + 1e-9 {
            return None;
        }
        if h == 0.0 {
            return Some(self.states[0]);
        }
        let pos = t / h;
        let j = (pos.floor() as usize).min(self.t.len() - 1);
        let frac = pos - j as f64;
        if frac.abs() < 1e-9 || j + 1 >= self.t.len() {
            return Some(self.states[j]);
        }
        let (a, b) = (self.states[j].to_array(), self.states[j + 1].to_array());
        let mut out = [0.0; N];
        for c in 0..N {
            out[c] = a[c] + frac * (b[c] - a[c]);
        }
        Some(CompartmentState::from_array(out))
    }

    pub fn observables(&self) -> Observables {
        Observables {
            t: self.t.clone(),
            detected_cases: self.states.iter().map(|s| s.cases_detected).collect(),
            detected_deaths: self.states.iter().map(|s| s.deaths_detected).collect(),
            hospitalized: self.states.iter().map(|s| s.hospitalized()).collect(),
        }
    }

    /// One row per grid node: `t`, the eleven compartments, both counters and
    /// `hospitalized`.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["t"];
        header.extend(COMPARTMENTS);
        header.extend(["cases_detected", "deaths_detected", "hospitalized"]);
        w.write_record(&header)?;
        for (t, s) in self.t.iter().zip(&self.states) {
            let mut row = vec![t.to_string()];
            row.extend(s.to_array().iter().map(|v| v.to_string()));
            row.push(s.hospitalized().to_string());
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl Observables {
    /// Keeps only the nodes that fall on whole days.
    pub fn daily(&self) -> Observables {
        let keep: Vec<usize> = (0..self.t.len())
            .filter(|&i| (self.t[i] - self.t[i].round()).abs() < 1e-9)
            .collect();
        Observables {
            t: keep.iter().map(|&i| self.t[i]).collect(),
            detected_cases: keep.iter().map(|&i| self.detected_cases[i]).collect(),
            detected_deaths: keep.iter().map(|&i| self.detected_deaths[i]).collect(),
            hospitalized: keep.iter().map(|&i| self.hospitalized[i]).collect(),
        }
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "detected_cases", "detected_deaths", "hospitalized"])?;
        for i in 0..self.t.len() {
            w.write_record([
                self.t[i].to_string(),
                self.detected_cases[i].to_string(),
                self.detected_deaths[i].to_string(),
                self.hospitalized[i].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{initial_state, ClinicalRates, FittedParams};
    use chrono::NaiveDate;

    fn params(alpha: f64) -> DelphiParams {
        DelphiParams {
            fitted: FittedParams {
                alpha,
                t0: 20.0,
                k: 8.0,
                p_d: 0.2,
                p_h: 0.2,
                m: 0.05,
                k_i: 4.0,
            },
            rates: ClinicalRates::default(),
            population: 1e6,
            start_date: NaiveDate::from_ymd_opt(2020, 3, 20).unwrap(),
        }
    }

    #[test]
    fn zero_alpha_all_susceptible_is_constant() {
        let p = params(0.0);
        let x0 = CompartmentState::all_susceptible(1e6);
        let traj = integrate(&p, &x0, 30.0, 0.5).unwrap();
        assert_eq!(traj.t.len(), 61);
        assert!(traj.states.iter().all(|s| *s == x0));
        let obs = traj.observables();
        assert!(obs.detected_cases.iter().all(|v| *v == 0.0));
        assert!(obs.detected_deaths.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn grid_validation() {
        let p = params(0.5);
        let x0 = initial_state(&p, 200.0, 3.0);
        assert!(matches!(integrate(&p, &x0, 10.0, 0.0), Err(ModelError::InvalidGrid(_))));
        assert!(matches!(integrate(&p, &x0, 0.1, 0.5), Err(ModelError::InvalidGrid(_))));
        assert!(matches!(integrate(&p, &x0, 10.3, 0.5), Err(ModelError::InvalidGrid(_))));
    }

    #[test]
    fn overshooting_step_is_an_error() {
        let mut p = params(0.5);
        p.rates.r_i = 50.0;
        let x0 = initial_state(&p, 200.0, 3.0);
        let err = integrate(&p, &x0, 10.0, 1.0).unwrap_err();
        assert!(matches!(err, ModelError::NegativeState { .. }), "{err:?}");
    }

    #[test]
    fn monotone_compartments() {
        let p = params(0.8);
        let x0 = initial_state(&p, 300.0, 5.0);
        let traj = integrate(&p, &x0, 120.0, 0.5).unwrap();
        for w in traj.states.windows(2) {
            assert!(w[1].s <= w[0].s);
            assert!(w[1].r >= w[0].r);
            assert!(w[1].d >= w[0].d);
            assert!(w[1].cases_detected >= w[0].cases_detected);
            assert!(w[1].deaths_detected >= w[0].deaths_detected);
        }
    }

    #[test]
    fn interpolation_hits_nodes_and_midpoints() {
        let p = params(0.8);
        let x0 = initial_state(&p, 300.0, 5.0);
        let traj = integrate(&p, &x0, 10.0, 0.5).unwrap();
        assert_eq!(traj.state_at(3.0).unwrap(), traj.states[6]);
        let mid = traj.state_at(3.25).unwrap();
        let expect = 0.5 * (traj.states[6].i + traj.states[7].i);
        assert!((mid.i - expect).abs() < 1e-9 * expect);
        assert!(traj.state_at(10.5).is_none());
    }

    #[test]
    fn hospitalized_is_sum_of_hospital_compartments() {
        let p = params(0.8);
        let x0 = initial_state(&p, 300.0, 5.0);
        let traj = integrate(&p, &x0, 40.0, 0.5).unwrap();
        let obs = traj.observables();
        for (h, s) in obs.hospitalized.iter().zip(&traj.states) {
            assert_eq!(*h, s.dh_r + s.dh_d);
        }
        let daily = obs.daily();
        assert_eq!(daily.t.len(), 41);
        assert_eq!(daily.t[7], 7.0);
    }

    #[test]
    fn csv_has_one_row_per_node() {
        let p = params(0.8);
        let x0 = initial_state(&p, 300.0, 5.0);
        let traj = integrate(&p, &x0, 5.0, 0.5).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "t,S,E,I,U_R,U_D,DH_R,DH_D,DQ_R,DQ_D,R,D,cases_detected,deaths_detected,hospitalized"
        );
        assert_eq!(lines.count(), 11);
    }
}
