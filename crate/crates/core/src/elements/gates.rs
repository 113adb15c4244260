//! Time-driven gate functions for switch control.
//!
//! Gates are pure functions of time: no electrical feedback is possible,
//! which keeps every switching instant computable in advance. The solver
//! snaps integration steps to those instants so a step never straddles a
//! switching edge.

use std::f64::consts::PI;

/// A boolean-valued function of time driving one control net.
#[derive(Debug, Clone, PartialEq)]
pub enum GateFunction {
    /// Constant level (1 = on).
    Constant { on: bool },
    /// Periodic pulse: on while the fractional position of
    /// `(t - delay) / period` lies in `[0, duty)`.
    PulseClock { period: f64, duty: f64, delay: f64 },
    /// Sine-triangle comparator: on while
    /// `m * sin(2*pi*t/period + phase) >= carrier(t)`, where the carrier
    /// is a triangle at `carrier_freq` spanning `[level_lo, level_hi]`
    /// (level-shifted bands support multilevel modulators). `invert`
    /// complements the output.
    PwmSineTriangle {
        period: f64,
        carrier_freq: f64,
        modulation_index: f64,
        phase: f64,
        level_lo: f64,
        level_hi: f64,
        invert: bool,
    },
}

fn frac(x: f64) -> f64 {
    let f = x - x.floor();
    if f >= 1.0 {
        0.0
    } else {
        f
    }
}

/// Symmetric triangle over one carrier period: starts at `lo`, peaks at
/// `hi` half way through, returns to `lo`.
fn triangle(t: f64, carrier_freq: f64, lo: f64, hi: f64) -> f64 {
    let u = frac(t * carrier_freq);
    let unit = 1.0 - 4.0 * (u - 0.5).abs(); // -1 at u=0, +1 at u=0.5
    lo + (hi - lo) * (unit + 1.0) * 0.5
}

impl GateFunction {
    /// Gate level at time `t`.
    pub fn value(&self, t: f64) -> bool {
        match *self {
            GateFunction::Constant { on } => on,
            GateFunction::PulseClock { period, duty, delay } => {
                if duty <= 0.0 {
                    false
                } else if duty >= 1.0 {
                    true
                } else {
                    frac((t - delay) / period) < duty
                }
            }
            GateFunction::PwmSineTriangle {
                period,
                carrier_freq,
                modulation_index,
                phase,
                level_lo,
                level_hi,
                invert,
            } => {
                let reference = modulation_index * (2.0 * PI * t / period + phase).sin();
                let raw = reference >= triangle(t, carrier_freq, level_lo, level_hi);
                raw != invert
            }
        }
    }

    /// Common period of the gate, if periodic.
    pub fn period(&self) -> Option<f64> {
        match *self {
            GateFunction::Constant { .. } => None,
            GateFunction::PulseClock { period, .. } => Some(period),
            GateFunction::PwmSineTriangle { period, .. } => Some(period),
        }
    }

    /// First switching instant strictly after `t` (with a small guard so a
    /// step landing exactly on an edge does not see that edge again).
    pub fn next_edge_after(&self, t: f64) -> Option<f64> {
        match *self {
            GateFunction::Constant { .. } => None,
            GateFunction::PulseClock { period, duty, delay } => {
                if duty <= 0.0 || duty >= 1.0 {
                    return None;
                }
                let guard = edge_guard(t, period);
                let base = ((t - delay) / period).floor();
                // candidate edges in this and the next cycle
                for k in 0..3 {
                    let cycle = delay + (base + k as f64) * period;
                    for &e in &[cycle, cycle + duty * period] {
                        if e > t + guard {
                            return Some(e);
                        }
                    }
                }
                None
            }
            GateFunction::PwmSineTriangle { carrier_freq, .. } => {
                self.pwm_next_edge(t, 1.0 / carrier_freq)
            }
        }
    }

    /// Edge search for the sine-triangle comparator. The comparator input
    /// has no closed-form roots, so each half-segment of the carrier is
    /// scanned for sign changes and bracketed edges are bisected down to
    /// floating-point resolution. Deterministic for a given gate.
    fn pwm_next_edge(&self, t: f64, carrier_period: f64) -> Option<f64> {
        let diff = |x: f64| -> f64 {
            if let GateFunction::PwmSineTriangle {
                period,
                carrier_freq,
                modulation_index,
                phase,
                level_lo,
                level_hi,
                ..
            } = *self
            {
                modulation_index * (2.0 * PI * x / period + phase).sin()
                    - triangle(x, carrier_freq, level_lo, level_hi)
            } else {
                unreachable!()
            }
        };
        let guard = edge_guard(t, carrier_period);
        let t0 = t + guard;
        let half = carrier_period / 2.0;
        // Start at the half-segment containing t0; scan a bounded number of
        // half-segments forward (the comparator must cross within one
        // modulation period for any non-degenerate setup).
        let seg0 = (t0 / half).floor();
        let max_segments = 16 * 1024;
        let subdivisions = 8;
        for s in 0..max_segments {
            let a = (seg0 + s as f64) * half;
            let b = a + half;
            let lo = a.max(t0);
            if lo >= b {
                continue;
            }
            let mut prev_x = lo;
            let mut prev_sign = diff(prev_x) >= 0.0;
            for i in 1..=subdivisions {
                let x = lo + (b - lo) * (i as f64) / (subdivisions as f64);
                let sign = diff(x) >= 0.0;
                if sign != prev_sign {
                    let root = bisect(&diff, prev_x, x);
                    if root > t + guard {
                        return Some(root);
                    }
                }
                prev_x = x;
                prev_sign = sign;
            }
        }
        None
    }
}

fn edge_guard(t: f64, period: f64) -> f64 {
    (t.abs().max(period)) * 1e-12
}

fn bisect(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a) >= 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if mid <= a || mid >= b {
            break;
        }
        if (f(mid) >= 0.0) == fa {
            a = mid;
            fa = f(a) >= 0.0;
        } else {
            b = mid;
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pulse_clock_duty_window() {
        let g = GateFunction::PulseClock { period: 40e-6, duty: 0.4, delay: 0.0 };
        assert!(g.value(10e-6)); // 10/40 < 0.4
        assert!(!g.value(20e-6)); // 0.4 <= 20/40
    }

    #[test]
    fn pulse_clock_delay_shift_identity() {
        let period = 40e-6;
        let delayed = GateFunction::PulseClock { period, duty: 0.3, delay: period / 2.0 };
        let plain = GateFunction::PulseClock { period, duty: 0.3, delay: 0.0 };
        assert_eq!(delayed.value(0.0), plain.value(period / 2.0));
        for k in 0..50 {
            let t = k as f64 * period / 7.0;
            assert_eq!(delayed.value(t), plain.value(t - period / 2.0 + 10.0 * period));
        }
    }

    #[test]
    fn pwm_zero_modulation_is_half_duty_square() {
        let g = GateFunction::PwmSineTriangle {
            period: 1.0,
            carrier_freq: 20.0,
            modulation_index: 0.0,
            phase: 0.0,
            level_lo: -1.0,
            level_hi: 1.0,
            invert: false,
        };
        // with m = 0 the gate is exactly the sign pattern of -carrier
        let tc = 1.0 / 20.0;
        for i in 0..400 {
            let t = (i as f64 + 0.13) * tc / 16.0;
            let carrier = triangle(t, 20.0, -1.0, 1.0);
            assert_eq!(g.value(t), 0.0 >= carrier, "t={t}");
        }
        // true for half of each carrier period
        let on = (0..10_000)
            .filter(|&i| g.value((i as f64 + 0.5) * tc / 10_000.0 * 10.0))
            .count();
        assert!((on as f64 / 10_000.0 - 0.5).abs() < 0.01);
    }

    #[test]
    fn gates_are_periodic_on_dense_grid() {
        let gates = [
            GateFunction::PulseClock { period: 1.0, duty: 0.37, delay: 0.21 },
            GateFunction::PwmSineTriangle {
                period: 1.0,
                carrier_freq: 21.0,
                modulation_index: 0.8,
                phase: 0.4,
                level_lo: -1.0,
                level_hi: 1.0,
                invert: false,
            },
        ];
        for g in &gates {
            let p = g.period().unwrap();
            for i in 0..10_000 {
                let t = (i as f64 + 0.31) * p / 10_000.0;
                assert_eq!(g.value(t), g.value(t + p), "gate {g:?} at t={t}");
            }
        }
    }

    #[test]
    fn pulse_edges_match_value_changes() {
        let g = GateFunction::PulseClock { period: 1e-3, duty: 0.25, delay: 0.1e-3 };
        let mut t = 0.0;
        let mut edges = Vec::new();
        while t < 5e-3 {
            let e = g.next_edge_after(t).unwrap();
            edges.push(e);
            t = e;
        }
        // edges alternate rising/falling, spaced duty*p and (1-duty)*p apart
        for w in edges.windows(2) {
            let gap = w[1] - w[0];
            assert!(
                (gap - 0.25e-3).abs() < 1e-12 || (gap - 0.75e-3).abs() < 1e-12,
                "gap {gap}"
            );
        }
        for &e in &edges {
            assert_ne!(g.value(e - 1e-9), g.value(e + 1e-9), "edge {e}");
        }
    }

    #[test]
    fn pwm_edges_match_dense_sampling() {
        let g = GateFunction::PwmSineTriangle {
            period: 1.0,
            carrier_freq: 15.0,
            modulation_index: 0.8,
            phase: 0.0,
            level_lo: -1.0,
            level_hi: 1.0,
            invert: false,
        };
        // collect edges over one modulation period via next_edge_after
        let mut t = 0.0;
        let mut edges = Vec::new();
        while let Some(e) = g.next_edge_after(t) {
            if e >= 1.0 {
                break;
            }
            edges.push(e);
            t = e;
        }
        // dense sampling must agree: each change of value between adjacent
        // samples brackets exactly one reported edge.
        let n = 200_000;
        let mut found = 0;
        for i in 1..n {
            let a = (i - 1) as f64 / n as f64;
            let b = i as f64 / n as f64;
            if g.value(a) != g.value(b) {
                let hit = edges.iter().any(|&e| e > a && e <= b + 1e-12);
                assert!(hit, "value change in ({a},{b}) with no reported edge");
                found += 1;
            }
        }
        assert_eq!(found, edges.len(), "edge count mismatch");
    }
}
