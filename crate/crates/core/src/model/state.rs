use serde::{Deserialize, Serialize};

use super::{gamma_unchecked, DelphiParams, FittedParams};

/// Names of the eleven population compartments, in storage order.
pub const COMPARTMENTS: [&str; 11] = ["S", "E", "I", "U_R", "U_D", "DH_R", "DH_D", "DQ_R", "DQ_D", "R", "D"];

/// Persons in each compartment, plus the two cumulative detection counters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CompartmentState {
    pub s: f64,
    pub e: f64,
    pub i: f64,
    pub u_r: f64,
    pub u_d: f64,
    pub dh_r: f64,
    pub dh_d: f64,
    pub dq_r: f64,
    pub dq_d: f64,
    pub r: f64,
    pub d: f64,
    /// Cumulative detected cases.
    pub cases_detected: f64,
    /// Cumulative detected deaths.
    pub deaths_detected: f64,
}

impl CompartmentState {
    pub const LEN: usize = 13;

    pub fn to_array(&self) -> [f64; Self::LEN] {
        [
            self.s,
            self.e,
            self.i,
            self.u_r,
            self.u_d,
            self.dh_r,
            self.dh_d,
            self.dq_r,
            self.dq_d,
            self.r,
            self.d,
            self.cases_detected,
            self.deaths_detected,
        ]
    }

    pub fn from_array(v: [f64; Self::LEN]) -> Self {
        Self {
            s: v[0],
            e: v[1],
            i: v[2],
            u_r: v[3],
            u_d: v[4],
            dh_r: v[5],
            dh_d: v[6],
            dq_r: v[7],
            dq_d: v[8],
            r: v[9],
            d: v[10],
            cases_detected: v[11],
            deaths_detected: v[12],
        }
    }

    /// Sum of the eleven population compartments (the counters excluded).
    pub fn population(&self) -> f64 {
        self.to_array()[..11].iter().sum()
    }

    pub fn hospitalized(&self) -> f64 {
        self.dh_r + self.dh_d
    }

    /// A population of `n` with nobody infected.
    pub fn all_susceptible(n: f64) -> Self {
        Self {
            s: n,
            ..Self::default()
        }
    }
}

/// Right-hand side of the model at time `t` using the fitted arctan response.
pub fn derivatives(x: &CompartmentState, t: f64, p: &DelphiParams) -> CompartmentState {
    let g = gamma_unchecked(t, p.fitted.t0, p.fitted.k);
    derivatives_at(x, g, p)
}

/// Right-hand side for an explicit value of the response multiplier.
pub fn derivatives_at(x: &CompartmentState, gamma: f64, p: &DelphiParams) -> CompartmentState {
    let r = &p.rates;
    let new_infections = p.fitted.alpha * gamma * x.s * x.i / p.population;
    let leaving_i = r.r_i * x.i;
    let [b_ur, b_ud, b_dhr, b_dhd, b_dqr, b_dqd] = p.branch_probabilities();

    let out_ur = r.r_r * x.u_r;
    let out_ud = r.r_d * x.u_d;
    let out_dhr = r.r_rh * x.dh_r;
    let out_dhd = r.r_dh * x.dh_d;
    let out_dqr = r.r_r * x.dq_r;
    let out_dqd = r.r_d * x.dq_d;

    CompartmentState {
        s: -new_infections,
        e: new_infections - r.sigma * x.e,
        i: r.sigma * x.e - leaving_i,
        u_r: b_ur * leaving_i - out_ur,
        u_d: b_ud * leaving_i - out_ud,
        dh_r: b_dhr * leaving_i - out_dhr,
        dh_d: b_dhd * leaving_i - out_dhd,
        dq_r: b_dqr * leaving_i - out_dqr,
        dq_d: b_dqd * leaving_i - out_dqd,
        r: out_ur + out_dhr + out_dqr,
        d: out_ud + out_dhd + out_dqd,
        cases_detected: (b_dhr + b_dhd + b_dqr + b_dqd) * leaving_i,
        deaths_detected: out_dhd + out_dqd,
    }
}

/// State on the region's start date.
///
/// Observed cases seed the detection counter and observed deaths both `D` and
/// the detected-death counter. `I` is `k_i` times the observed cases and `E`
/// twice `I`. Active detected cases (cases minus deaths) are spread across the
/// four detected compartments in proportion to their branch probabilities.
/// Everyone else is susceptible.
pub fn initial_state(p: &DelphiParams, cases: f64, deaths: f64) -> CompartmentState {
    let FittedParams { p_h, m, k_i, .. } = p.fitted;
    let i = k_i * cases;
    let e = 2.0 * i;
    let active = (cases - deaths).max(0.0);
    let dh_r = active * p_h * (1.0 - m);
    let dh_d = active * p_h * m;
    let dq_r = active * (1.0 - p_h) * (1.0 - m);
    let dq_d = active * (1.0 - p_h) * m;
    let occupied = e + i + dh_r + dh_d + dq_r + dq_d + deaths;
    CompartmentState {
        s: p.population - occupied,
        e,
        i,
        dh_r,
        dh_d,
        dq_r,
        dq_d,
        d: deaths,
        cases_detected: cases,
        deaths_detected: deaths,
        ..CompartmentState::default()
    }
}
