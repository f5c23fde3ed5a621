//! Learning-rate schedules for the optimism weight `lambda_t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confidence term `C_t = 5 + 2 s log(e d t / s)`.
pub fn c_t(t: usize, d: usize, s: usize) -> f64 {
    let (t, d, s) = (t as f64, d as f64, s as f64);
    5.0 + 2.0 * s * (std::f64::consts::E * d * t / s).ln()
}

/// The 2-IR and 3-IR branches of the time-dependent schedule.
pub fn lambda_theorem2_branches(t: usize, d: usize, s: usize, c_min: f64) -> (f64, Option<f64>) {
    let c = c_t(t + 1, d, s);
    let tp = (t + 1) as f64;
    let l2 = (3.0 * c / (128.0 * d as f64 * tp)).sqrt();
    let l3 = (c_min > 0.0).then(|| {
        let inner = c * c_min.sqrt() / (tp * (s as f64).sqrt());
        inner.powf(2.0 / 3.0) / (4.0 * 6f64.cbrt())
    });
    (l2, l3)
}

/// `min(1/2, max(lambda2, lambda3))`; with `c_min = 0` only `lambda2` is used.
pub fn lambda_theorem2(t: usize, d: usize, s: usize, c_min: f64) -> f64 {
    let (l2, l3) = lambda_theorem2_branches(t, d, s, c_min);
    l2.max(l3.unwrap_or(0.0)).min(0.5)
}

/// Running sums for the history-dependent schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleState {
    pub d: usize,
    pub s: usize,
    pub c_min: f64,
    pub sum_ir2: f64,
    pub sum_sqrt_ir3: f64,
    pub t: usize,
}

impl ScheduleState {
    pub fn new(d: usize, s: usize, c_min: f64) -> Self {
        Self { d, s, c_min, sum_ir2: 0.0, sum_sqrt_ir3: 0.0, t: 0 }
    }

    /// Adds one round's information ratios. Negative or non-finite inputs are
    /// clamped to zero so the sums never decrease.
    pub fn record(&mut self, ir2: f64, ir3: f64) {
        let clean = |x: f64| if x.is_finite() && x > 0.0 { x } else { 0.0 };
        self.sum_ir2 += clean(ir2);
        self.sum_sqrt_ir3 += clean(ir3).sqrt();
        self.t += 1;
    }
}

pub fn lambda_theorem3(state: &ScheduleState) -> Result<f64> {
    let (d, s) = (state.d as f64, state.s as f64);
    if 2 * state.s > state.d {
        return Err(Error::Precondition(format!(
            "history-dependent schedule needs s <= d/2, got s={} d={}",
            state.s, state.d
        )));
    }
    let l2 = (s / (2.0 * d + state.sum_ir2)).sqrt();
    let l3 = if state.c_min > 0.0 {
        (s / (3.0 * 6f64.sqrt() * s / state.c_min.sqrt() + state.sum_sqrt_ir3)).powf(2.0 / 3.0)
    } else {
        0.0
    };
    Ok(l2.max(l3))
}

pub fn lambda_experimental(t: usize, d: usize, s: usize) -> f64 {
    let (tf, df, sf) = (t as f64, d as f64, s as f64);
    let lg = (std::f64::consts::E * df * tf / sf).ln();
    let a = (sf * lg / (df * tf)).sqrt();
    let b = (lg / tf).powf(2.0 / 3.0);
    (0.1 * a.max(b)).min(0.5)
}

/// Learning rate used with the experimental schedule.
pub const EXPERIMENTAL_ETA: f64 = 0.5;

/// Horizon beyond which both theoretical learning rates stay below one half.
pub fn t_min_threshold(d: usize, s: usize) -> f64 {
    let (d, s) = (d as f64, s as f64);
    40.0 * (3.0 / s).sqrt()
        + 16.0 * (3.0 * s).sqrt() * (8.0 * std::f64::consts::E * 3f64.sqrt() * d / s.sqrt()).ln()
}

/// Coefficients `(a, b)` of the implicit inequality `t >= a log(e t) + b`.
pub fn w_log_coefficients(d: usize, s: usize) -> (f64, f64) {
    let (d, s) = (d as f64, s as f64);
    let r = (3.0 * s).sqrt();
    (8.0 * r, r * (20.0 / s + 8.0 * (d / s).ln()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Schedule {
    Theorem2,
    Theorem3,
    #[default]
    Experimental,
}

impl Schedule {
    /// Learning rate `eta` paired with the schedule.
    pub fn default_eta(self) -> f64 {
        match self {
            Schedule::Experimental => EXPERIMENTAL_ETA,
            _ => 0.25,
        }
    }

    /// `lambda_t` for round index `t >= 1`, used when sampling for round `t + 1`.
    /// At `t = 0` the history is empty and the value has no effect; the
    /// experimental schedule returns `1/2` there.
    pub fn lambda(self, t: usize, state: &ScheduleState) -> Result<f64> {
        match self {
            Schedule::Theorem2 => Ok(lambda_theorem2(t, state.d, state.s, state.c_min)),
            Schedule::Theorem3 => lambda_theorem3(state),
            Schedule::Experimental if t == 0 => Ok(0.5),
            Schedule::Experimental => Ok(lambda_experimental(t, state.d, state.s)),
        }
    }
}

impl std::str::FromStr for Schedule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "theorem2" => Ok(Schedule::Theorem2),
            "theorem3" => Ok(Schedule::Theorem3),
            "experimental" => Ok(Schedule::Experimental),
            other => Err(Error::Config(format!("unknown schedule '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn c_t_values() {
        assert!((c_t(1, 1, 1) - 7.0).abs() < 1e-14);
        // 5 + 4 (1 + ln 10000)
        let want = 5.0 + 4.0 * (1.0 + 10000f64.ln());
        assert!((c_t(1000, 20, 2) - want).abs() < 1e-12);
        for t in 1..200 {
            assert!(c_t(t + 1, 20, 2) > c_t(t, 20, 2));
        }
    }

    #[test]
    fn theorem2_known_value() {
        // t = 10: C_11 = 5 + 4 (1 + ln 110)
        let c = 5.0 + 4.0 * (1.0 + 110f64.ln());
        let l2 = (3.0 * c / (128.0 * 20.0 * 11.0)).sqrt();
        let l3 = (c * 0.05f64.sqrt() / (11.0 * 2f64.sqrt())).powf(2.0 / 3.0) / (4.0 * 6f64.powf(1.0 / 3.0));
        let (b2, b3) = lambda_theorem2_branches(10, 20, 2, 0.05);
        assert!((b2 - l2).abs() < 1e-15);
        assert!((b3.unwrap() - l3).abs() < 1e-15);
        assert!((lambda_theorem2(10, 20, 2, 0.05) - l2.max(l3).min(0.5)).abs() < 1e-15);
        assert_eq!(lambda_theorem2_branches(10, 20, 2, 0.0).1, None);
    }

    #[test]
    fn theorem2_nonincreasing() {
        for (d, s, c) in [(20, 2, 0.05), (100, 10, 0.01), (5, 1, 0.2), (40, 4, 0.0)] {
            let mut prev = lambda_theorem2(1, d, s, c);
            assert!(prev <= 0.5 && prev > 0.0);
            for t in 2..=10_000 {
                let l = lambda_theorem2(t, d, s, c);
                assert!(l <= prev + 1e-15, "t={t}");
                prev = l;
            }
        }
    }

    #[test]
    fn theorem3_cases() {
        let st = ScheduleState::new(20, 2, 0.05);
        let l = lambda_theorem3(&st).unwrap();
        assert!(l >= (2.0f64 / 40.0).sqrt());
        assert!((2.0f64 / 40.0).sqrt() <= 0.5);
        let mut big = st.clone();
        big.sum_ir2 = 1e9;
        big.sum_sqrt_ir3 = 1e9;
        assert!(lambda_theorem3(&big).unwrap() < 1e-4);
        assert!(matches!(lambda_theorem3(&ScheduleState::new(3, 2, 0.1)), Err(Error::Precondition(_))));

        let mut run = ScheduleState::new(40, 4, 0.02);
        let mut prev = lambda_theorem3(&run).unwrap();
        for i in 0..500 {
            run.record((i % 7) as f64, (i % 3) as f64 * 10.0);
            let l = lambda_theorem3(&run).unwrap();
            assert!(l <= prev);
            prev = l;
        }
    }

    #[test]
    fn experimental_values() {
        let lg = (std::f64::consts::E * 10.0).ln();
        let want = (0.1 * (2.0 * lg / 20.0).sqrt().max(lg.powf(2.0 / 3.0))).min(0.5);
        assert!((lambda_experimental(1, 20, 2) - want).abs() < 1e-15);
        assert!(lambda_experimental(100_000_000, 20, 2) < 1e-4);
        for t in 1..2000 {
            assert!(lambda_experimental(t, 100, 10) <= 0.5);
        }
    }

    #[test]
    fn t_min_values() {
        let want = 40.0 * 0.3f64.sqrt()
            + 16.0 * 30f64.sqrt() * (8.0 * std::f64::consts::E * 3f64.sqrt() * 100.0 / 10f64.sqrt()).ln();
        assert!((t_min_threshold(100, 10) - want).abs() < 1e-12);
        for d in 2..200 {
            assert!(t_min_threshold(d + 1, 2) > t_min_threshold(d, 2));
        }
    }

    #[test]
    fn w_log_inequality_holds_on_grid() {
        for d in [2usize, 5, 20, 40, 100, 1000] {
            for s in 1..=d / 2 {
                let (a, b) = w_log_coefficients(d, s);
                let t0 = 2.0 * a * (std::f64::consts::E * a).ln() + 2.0 * b;
                for k in 0..200 {
                    let t = t0 * (1.0 + k as f64 * 0.05);
                    assert!(t >= a * (std::f64::consts::E * t).ln() + b, "d={d} s={s} t={t}");
                }
            }
        }
    }

    #[test]
    fn schedule_parsing_and_dispatch() {
        assert_eq!("theorem3".parse::<Schedule>().unwrap(), Schedule::Theorem3);
        assert!("fast".parse::<Schedule>().is_err());
        let st = ScheduleState::new(20, 2, 0.05);
        assert_eq!(Schedule::Experimental.lambda(0, &st).unwrap(), 0.5);
        assert_eq!(Schedule::Theorem2.lambda(5, &st).unwrap(), lambda_theorem2(5, 20, 2, 0.05));
        assert_eq!(Schedule::Experimental.default_eta(), 0.5);
    }

    proptest! {
        #[test]
        fn schedules_positive_and_bounded(t in 1usize..100_000, d in 2usize..200, s_frac in 0.0f64..1.0, c in 0.0f64..1.0) {
            let s = 1 + ((d / 2 - 1) as f64 * s_frac) as usize;
            let l2 = lambda_theorem2(t, d, s, c);
            prop_assert!(l2 > 0.0 && l2 <= 0.5);
            let le = lambda_experimental(t, d, s);
            prop_assert!(le > 0.0 && le <= 0.5);
            let l3 = lambda_theorem3(&ScheduleState::new(d, s, c)).unwrap();
            prop_assert!(l3 > 0.0);
        }
    }
}
