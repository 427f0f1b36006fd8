//! Online mismatch detection between P2's actual behavior and P1's opponent
//! model: a transition-matrix likelihood-ratio test over the augmented-state
//! Markov chain, and an action-level likelihood-ratio test against the
//! predicted opponent policy. Both compare against χ² quantiles computed from
//! first principles.

use std::collections::HashMap;

use thiserror::Error;

use crate::hypergame::HyperMdp;

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("trace too short for the test")]
    DegenerateTrace,
    #[error("invalid argument: {0}")]
    Domain(&'static str),
}

/// Degrees-of-freedom convention for the χ² threshold.
///
/// `SpecLiteral` follows the narrative count (distinct observed transition
/// pairs for the matrix test; nonzero estimated cells for the policy test).
/// `FreeParams` is the classical likelihood-ratio count (one less than the
/// branching at each visited state), which is what actually calibrates to the
/// nominal false-positive rate; it is the default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DofConvention {
    SpecLiteral,
    #[default]
    FreeParams,
}

#[derive(Debug, Clone)]
pub struct TestReport {
    pub statistic: f64,
    pub dof: usize,
    pub alpha: f64,
    pub threshold: f64,
    pub reject: bool,
    /// Number of steps the statistic was accumulated over.
    pub steps: usize,
}

// ---------------------------------------------------------------------------
// χ² quantiles
// ---------------------------------------------------------------------------

/// ln Γ(x) (Lanczos approximation, |ε| < 2e-10 for x > 0).
fn ln_gamma(x: f64) -> f64 {
    const COF: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let mut y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000000000190015;
    for c in COF {
        y += 1.0;
        ser += c / y;
    }
    -tmp + (2.5066282746310005 * ser / x).ln()
}

/// Regularized lower incomplete gamma P(a, x).
fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        // Series representation.
        let mut ap = a;
        let mut sum = 1.0 / a;
        let mut del = sum;
        for _ in 0..500 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * 1e-15 {
                break;
            }
        }
        sum * (-x + a * x.ln() - ln_gamma(a)).exp()
    } else {
        // Continued fraction for Q(a, x) = 1 − P(a, x).
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / 1e-300;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < 1e-300 {
                d = 1e-300;
            }
            c = b + an / c;
            if c.abs() < 1e-300 {
                c = 1e-300;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-15 {
                break;
            }
        }
        1.0 - (-x + a * x.ln() - ln_gamma(a)).exp() * h
    }
}

/// CDF of the χ² distribution with `dof` degrees of freedom.
pub fn chi2_cdf(x: f64, dof: usize) -> f64 {
    gamma_p(dof as f64 / 2.0, x / 2.0)
}

/// Inverse CDF by bisection; absolute error < 1e-8.
pub fn chi2_quantile(p: f64, dof: usize) -> Result<f64, DetectError> {
    if !(0.0..1.0).contains(&p) || p <= 0.0 {
        return Err(DetectError::Domain("p must be in (0,1)"));
    }
    if dof == 0 {
        return Err(DetectError::Domain("dof must be ≥ 1"));
    }
    let mut hi = dof as f64 + 10.0;
    while chi2_cdf(hi, dof) < p {
        hi *= 2.0;
    }
    let mut lo = 0.0f64;
    while hi - lo > 1e-9 {
        let mid = 0.5 * (lo + hi);
        if chi2_cdf(mid, dof) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

// ---------------------------------------------------------------------------
// Transition-matrix test
// ---------------------------------------------------------------------------

/// Visit and pair counts of an observed augmented-state trace, with the MLE
/// transition matrix P̄².
pub struct ChainEstimate {
    pub visits: HashMap<u32, u32>,
    pub pairs: HashMap<(u32, u32), u32>,
}

impl ChainEstimate {
    /// Counts over consecutive pairs; the final state contributes no visit
    /// (it has no outgoing observation).
    pub fn from_trace(trace: &[u32]) -> Self {
        let mut visits = HashMap::new();
        let mut pairs = HashMap::new();
        for w in trace.windows(2) {
            *visits.entry(w[0]).or_insert(0) += 1;
            *pairs.entry((w[0], w[1])).or_insert(0) += 1;
        }
        ChainEstimate { visits, pairs }
    }

    /// MLE P̄²(v′|v); identity row for unvisited states.
    pub fn mle(&self, v: u32, v_next: u32) -> f64 {
        match self.visits.get(&v) {
            Some(&n) => *self.pairs.get(&(v, v_next)).unwrap_or(&0) as f64 / n as f64,
            None => f64::from(v == v_next),
        }
    }
}

/// The Markov chain P¹ that P1's model predicts: the hypergame MDP under the
/// synthesized (deterministic) policy.
pub fn induce_model_chain(h: &HyperMdp, action: &[u32]) -> Vec<Vec<(u32, f64)>> {
    (0..h.num_states())
        .map(|v| {
            let a = if h.mdp.target[v] || h.mdp.sink[v] { 0 } else { action[v] as usize };
            h.mdp.row(v, a).to_vec()
        })
        .collect()
}

fn chain_prob(p1: &[Vec<(u32, f64)>], v: u32, v_next: u32) -> f64 {
    p1[v as usize]
        .iter()
        .filter(|&&(t, _)| t == v_next)
        .map(|&(_, p)| p)
        .sum()
}

/// Λ = 2·Σ_steps (ln P̄²(ṽ′|ṽ) − ln P¹(ṽ′|ṽ)), each observed step counted
/// with multiplicity. An observed pair with P¹ = 0 forces Λ = +∞ (reject).
pub fn matrix_test(
    trace: &[u32],
    p1: &[Vec<(u32, f64)>],
    alpha: f64,
    dof_conv: DofConvention,
) -> Result<TestReport, DetectError> {
    if trace.len() < 2 {
        return Err(DetectError::DegenerateTrace);
    }
    let est = ChainEstimate::from_trace(trace);
    let mut lambda = 0.0f64;
    for w in trace.windows(2) {
        let model = chain_prob(p1, w[0], w[1]);
        if model <= 0.0 {
            lambda = f64::INFINITY;
            break;
        }
        lambda += 2.0 * (est.mle(w[0], w[1]).ln() - model.ln());
    }
    let dof = match dof_conv {
        DofConvention::SpecLiteral => est.pairs.len(),
        DofConvention::FreeParams => {
            let mut branching: HashMap<u32, usize> = HashMap::new();
            for &(v, _) in est.pairs.keys() {
                *branching.entry(v).or_insert(0) += 1;
            }
            branching.values().map(|&k| k - 1).sum::<usize>()
        }
    }
    .max(1);
    let threshold = chi2_quantile(1.0 - alpha, dof)?;
    Ok(TestReport {
        statistic: lambda,
        dof,
        alpha,
        threshold,
        reject: lambda > threshold,
        steps: trace.len() - 1,
    })
}

// ---------------------------------------------------------------------------
// Policy-level test
// ---------------------------------------------------------------------------

/// Per-factor floor on the null likelihood (ratios are undefined when the
/// predicted policy is deterministic and P2 deviates).
pub const L0_FLOOR: f64 = 1e-12;

/// Action-level likelihood-ratio test: H₀ is "P2 draws a₂ from the predicted
/// policy". Per step i: `groups[i]` identifies the (augmented) state for the
/// empirical alternative π̂₂, `actions[i]` the observed action, and
/// `predicted[i]` the model probability of that action. χ²ₙ = −2 ln(L₀/L₁).
pub fn policy_lr_test(
    groups: &[u32],
    actions: &[usize],
    predicted: &[f64],
    alpha: f64,
    dof_conv: DofConvention,
) -> Result<TestReport, DetectError> {
    let n_steps = groups.len();
    if n_steps == 0 || actions.len() != n_steps || predicted.len() != n_steps {
        return Err(DetectError::DegenerateTrace);
    }
    let mut cell: HashMap<(u32, usize), u32> = HashMap::new();
    let mut group_n: HashMap<u32, u32> = HashMap::new();
    for (&g, &a) in groups.iter().zip(actions) {
        *cell.entry((g, a)).or_insert(0) += 1;
        *group_n.entry(g).or_insert(0) += 1;
    }
    let mut log_l0 = 0.0f64;
    let mut log_l1 = 0.0f64;
    for i in 0..n_steps {
        log_l0 += predicted[i].max(L0_FLOOR).ln();
        let freq =
            cell[&(groups[i], actions[i])] as f64 / group_n[&groups[i]] as f64;
        log_l1 += freq.ln();
    }
    let statistic = (2.0 * (log_l1 - log_l0)).max(0.0);
    let dof = match dof_conv {
        DofConvention::SpecLiteral => cell.len(),
        DofConvention::FreeParams => {
            let mut branching: HashMap<u32, usize> = HashMap::new();
            for &(g, _) in cell.keys() {
                *branching.entry(g).or_insert(0) += 1;
            }
            branching.values().map(|&k| k - 1).sum::<usize>()
        }
    }
    .max(1);
    let threshold = chi2_quantile(1.0 - alpha, dof)?;
    Ok(TestReport {
        statistic,
        dof,
        alpha,
        threshold,
        reject: statistic > threshold,
        steps: n_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi2_quantile_frozen_values() {
        // Classical table values.
        assert!((chi2_quantile(0.95, 1).unwrap() - 3.8415).abs() < 1e-3);
        // dof 2 has the closed form −2 ln(α).
        let q2 = chi2_quantile(0.95, 2).unwrap();
        assert!((q2 - (-2.0 * 0.05f64.ln())).abs() < 1e-6);
        assert!((q2 - 5.9915).abs() < 1e-3);
        // Median ≈ dof·(1 − 2/(9·dof))³ ≈ dof − 2/3 for large dof.
        let q = chi2_quantile(0.5, 200).unwrap();
        assert!((q - (200.0 - 2.0 / 3.0)).abs() / 200.0 < 0.01);
    }

    #[test]
    fn chi2_quantile_monotone() {
        let mut prev = 0.0;
        for &p in &[0.1, 0.5, 0.9, 0.95, 0.99] {
            let q = chi2_quantile(p, 3).unwrap();
            assert!(q > prev);
            prev = q;
        }
        let mut prev = 0.0;
        for dof in 1..10 {
            let q = chi2_quantile(0.95, dof).unwrap();
            assert!(q > prev);
            prev = q;
        }
    }

    #[test]
    fn chi2_cdf_roundtrip() {
        for &dof in &[1usize, 2, 5, 17] {
            for &p in &[0.05, 0.5, 0.95, 0.999] {
                let q = chi2_quantile(p, dof).unwrap();
                assert!((chi2_cdf(q, dof) - p).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn quantile_rejects_bad_domain() {
        assert!(chi2_quantile(0.0, 1).is_err());
        assert!(chi2_quantile(1.0, 1).is_err());
        assert!(chi2_quantile(0.5, 0).is_err());
    }

    #[test]
    fn matrix_test_zero_on_exact_deterministic_match() {
        // Deterministic chain 0→1→2→2.
        let p1 = vec![vec![(1u32, 1.0)], vec![(2, 1.0)], vec![(2, 1.0)]];
        let rep = matrix_test(&[0, 1, 2, 2, 2], &p1, 0.05, DofConvention::FreeParams).unwrap();
        assert_eq!(rep.statistic, 0.0);
        assert!(!rep.reject);
    }

    #[test]
    fn matrix_test_rejects_unmodeled_pair() {
        let p1 = vec![vec![(1u32, 1.0)], vec![(1, 1.0)]];
        let rep = matrix_test(&[0, 0], &p1, 0.05, DofConvention::FreeParams).unwrap();
        assert!(rep.statistic.is_infinite());
        assert!(rep.reject);
    }

    #[test]
    fn matrix_test_nonnegative_on_modeled_support() {
        // Stochastic row; biased observed trace.
        let p1 = vec![vec![(0u32, 0.5), (1, 0.5)], vec![(0, 1.0)]];
        let trace = [0u32, 0, 0, 0, 1, 0, 0, 0];
        let rep = matrix_test(&trace, &p1, 0.05, DofConvention::FreeParams).unwrap();
        assert!(rep.statistic >= 0.0);
    }

    #[test]
    fn dof_conventions_differ_as_documented() {
        let p1 = vec![vec![(0u32, 0.5), (1, 0.5)], vec![(0, 1.0)]];
        let trace = [0u32, 0, 1, 0, 1, 0];
        let lit = matrix_test(&trace, &p1, 0.05, DofConvention::SpecLiteral).unwrap();
        let free = matrix_test(&trace, &p1, 0.05, DofConvention::FreeParams).unwrap();
        // Pairs observed: (0,0),(0,1),(1,0) → 3 literal; branching 2,1 → 1 free.
        assert_eq!(lit.dof, 3);
        assert_eq!(free.dof, 1);
    }

    #[test]
    fn policy_test_zero_when_following_deterministic_prediction() {
        let rep = policy_lr_test(
            &[0, 0, 0],
            &[1, 1, 1],
            &[1.0, 1.0, 1.0],
            0.05,
            DofConvention::FreeParams,
        )
        .unwrap();
        assert_eq!(rep.statistic, 0.0);
        assert!(!rep.reject);
    }

    #[test]
    fn policy_test_floor_forces_rejection() {
        // Predicted deterministic, observed always the other action.
        let rep = policy_lr_test(
            &[0; 5],
            &[1; 5],
            &[0.0; 5],
            0.05,
            DofConvention::FreeParams,
        )
        .unwrap();
        assert!(rep.statistic > 100.0);
        assert!(rep.reject);
    }

    #[test]
    fn policy_test_matches_hand_arithmetic() {
        // Uniform prediction over 2 actions, observed 8/2 split over 10 steps:
        // χ² = −2 ln(0.5¹⁰ / (0.8⁸·0.2²)) ≈ 3.85.
        let mut actions = vec![0usize; 8];
        actions.extend([1usize; 2]);
        let rep = policy_lr_test(
            &[0; 10],
            &actions,
            &[0.5; 10],
            0.05,
            DofConvention::FreeParams,
        )
        .unwrap();
        let expect = 2.0 * (8.0 * (0.8f64 / 0.5).ln() + 2.0 * (0.2f64 / 0.5).ln());
        assert!((rep.statistic - expect).abs() < 1e-9);
        assert!((rep.statistic - 3.85).abs() < 0.01);
        assert_eq!(rep.dof, 1);
        assert!(rep.reject); // 3.85 > 3.84 at dof 1
    }
}
