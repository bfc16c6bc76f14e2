#![allow(dead_code)]

use elimtas::model::HypSet;
use elimtas::oracle::lipschitz_constant;
use elimtas::{DiagnosticsTrace, Environment};

/// First round violating `min_a N_a(t) >= sqrt(t + |A|^2) - 2|A|`.
pub fn forced_exploration_violation(trace: &DiagnosticsTrace) -> Option<u64> {
    trace.t.iter().zip(&trace.counts).find_map(|(&t, n)| {
        let a = n.len() as f64;
        let bound = (t as f64 + a * a).sqrt() - 2.0 * a;
        (*n.iter().min().unwrap() as f64 + 1e-9 < bound).then_some(t)
    })
}

/// First round violating `max_a |N_a - W^tar_a| <= |A| (1 + sqrt t)`.
pub fn tracking_violation(trace: &DiagnosticsTrace) -> Option<u64> {
    trace.t.iter().zip(trace.counts.iter().zip(&trace.target)).find_map(|(&t, (n, w))| {
        let a = n.len() as f64;
        let dev = n.iter().zip(w).map(|(&n, &w)| (n as f64 - w).abs()).fold(0.0, f64::max);
        (dev > a * (1.0 + (t as f64).sqrt()) + 1e-9).then_some(t)
    })
}

/// Checks the oracle-rate staircase: constant or rising while the champion is
/// unchanged, and changing only at rounds with a logged elimination.
pub fn staircase_violation(trace: &DiagnosticsTrace) -> Option<String> {
    let event_rounds: Vec<u64> = trace.events.iter().map(|e| e.t).collect();
    for i in 1..trace.len() {
        if trace.champion[i] != trace.champion[i - 1] {
            continue;
        }
        let (Some(prev), Some(cur)) = (trace.oracle_rate[i - 1], trace.oracle_rate[i]) else {
            continue;
        };
        let t = trace.t[i];
        if cur < prev - 1e-9 {
            return Some(format!("rate fell at t={t}: {prev} -> {cur}"));
        }
        if (cur - prev).abs() > 1e-9 && !event_rounds.contains(&t) {
            return Some(format!("rate moved without elimination at t={t}"));
        }
    }
    None
}

/// Checks `|f(N/t) - f(avg target)| <= L_S * c_tr(t)` with
/// `c_tr(t) = (|A|^2 (1 + sqrt t) + 2|A| sqrt(t + |A|^2)) / t`: the tracking
/// deviation summed over actions plus the mass moved by the exploration floor.
pub fn envelope_violation(env: &Environment, trace: &DiagnosticsTrace) -> Option<String> {
    let a = env.num_actions() as f64;
    for i in 0..trace.len() {
        let (Some(emp), Some(tar)) = (trace.empirical_rate[i], trace.target_rate[i]) else {
            continue;
        };
        let t = trace.t[i] as f64;
        let set = HypSet::from_indices(trace.active_set[i].iter().copied());
        let l = lipschitz_constant(env.kl_table(), trace.champion[i], set);
        let c_tr = (a * a * (1.0 + t.sqrt()) + 2.0 * a * (t + a * a).sqrt()) / t;
        if (emp - tar).abs() > l * c_tr + 1e-9 {
            return Some(format!("t={}: |{emp} - {tar}| > {}", trace.t[i], l * c_tr));
        }
    }
    None
}
