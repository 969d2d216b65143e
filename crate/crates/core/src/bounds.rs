//! Closed-form generalization bounds and their comparison with measured
//! quantities.
//!
//! Symbols: `sigma` and `delta` describe class concentration under the
//! augmentations, `epsilon` and `r_eps` the fraction of samples whose views
//! spread more than `epsilon`, `l` the encoder's Lipschitz constant, `r` its
//! output norm, `m`, `n` and `big_m` the augmentation family.
//!
//! InfoNCE bounds assume `r = 1`; cross-correlation bounds assume `r = sqrt(d)`.
//! [`full_report`] refuses inputs that mix the two.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::losses::LossKind;

/// Per-class term `2(1 - sigma) + r_eps / p + sigma (L delta / r + 2 epsilon / r)`.
pub fn rho(sigma: f64, delta: f64, epsilon: f64, r_eps: f64, p: f64, l: f64, r: f64) -> f64 {
    2.0 * (1.0 - sigma) + r_eps / p + sigma * (l * delta / r + 2.0 * epsilon / r)
}

/// `rho` at the smallest prior.
pub fn rho_max(sigma: f64, delta: f64, epsilon: f64, r_eps: f64, priors: &[f64], l: f64, r: f64) -> f64 {
    let p_min = priors.iter().cloned().fold(f64::INFINITY, f64::min);
    rho(sigma, delta, epsilon, r_eps, p_min, l, r)
}

/// `r^2 (1 - rho_max - sqrt(2 rho_max) - delta_mu / 2)`; center products must
/// lie strictly below it.
pub fn divergence_threshold(rho_max: f64, delta_mu: f64, r: f64) -> f64 {
    r * r * (1.0 - rho_max - (2.0 * rho_max).sqrt() - delta_mu / 2.0)
}

pub fn divergence_condition(products: &[(usize, usize, f64)], threshold: f64) -> bool {
    products.iter().all(|&(_, _, v)| v < threshold)
}

/// Error bound `(1 - sigma) + r_eps` clamped to `[0, 1]`; valid when the
/// divergence condition holds.
pub fn concentration_err_bound(sigma: f64, r_eps: f64, condition_holds: bool) -> (f64, bool) {
    (((1.0 - sigma) + r_eps).clamp(0.0, 1.0), condition_holds)
}

const ETA_GRID: usize = 1024;
const GOLDEN_TOL: f64 = 1e-6;

/// `ln` of `4 max(1, m^2 h^(2n)) / (h^(2n) (epsilon - 2 sqrt(n) L M h))`.
fn log_eta_objective(h: f64, epsilon: f64, n: usize, m: usize, lm: f64) -> f64 {
    let two_n_log_h = 2.0 * n as f64 * h.ln();
    let lead = (2.0 * (m as f64).ln() + two_n_log_h).max(0.0);
    let gap = epsilon - 2.0 * (n as f64).sqrt() * lm * h;
    if gap <= 0.0 {
        return f64::INFINITY;
    }
    4f64.ln() + lead - two_n_log_h - gap.ln()
}

/// Minimizer of the constant converting alignment into a bound on `r_eps`.
///
/// Searches a 1024-point log grid on `(h_max 1e-6, h_max)` with
/// `h_max = epsilon / (2 sqrt(n) L M)`, then refines by golden-section search
/// between the grid neighbours of the best point. The returned value is the
/// objective at a feasible `h`, so it never undercuts the infimum. Without
/// continuous members, or when `L M = 0`, the infimum is `4 m^2 / epsilon`.
pub fn eta(epsilon: f64, n: usize, m: usize, l: f64, big_m: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::NonPositiveEpsilon(epsilon));
    }
    let mf = m as f64;
    let lm = l * big_m;
    if n == 0 || lm == 0.0 {
        return Ok(4.0 * mf * mf / epsilon);
    }
    let h_max = epsilon / (2.0 * (n as f64).sqrt() * lm);
    let f = |h: f64| log_eta_objective(h, epsilon, n, m, lm);
    let lo = (h_max * 1e-6).ln();
    let hi = h_max.ln();
    // Grid strictly inside the interval.
    let grid: Vec<f64> = (1..=ETA_GRID)
        .map(|i| (lo + (hi - lo) * i as f64 / (ETA_GRID + 1) as f64).exp())
        .collect();
    let (best, _) = grid
        .iter()
        .enumerate()
        .map(|(i, &h)| (i, f(h)))
        .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    let mut a = if best == 0 { h_max * 1e-6 } else { grid[best - 1] };
    let mut b = if best + 1 == ETA_GRID {
        h_max * (1.0 - 1e-12)
    } else {
        grid[best + 1]
    };
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a) > GOLDEN_TOL * a {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let refined = if fc < fd { fc } else { fd };
    Ok(refined.min(f(grid[best])).exp())
}

/// Bound on `r_eps`: `eta sqrt(l_pos)` clamped to `[0, 1]`.
pub fn spread_fraction_bound(eta_val: f64, l_pos: f64) -> f64 {
    (eta_val * l_pos.max(0.0).sqrt()).clamp(0.0, 1.0)
}

/// InfoNCE slack with `a = 1 - sigma (1 - epsilon / 2 - L delta / 4) + K r_eps`:
/// `16 a^2 + 8 a + (epsilon - 1) / K + 2 r_eps`.
pub fn tau(epsilon: f64, sigma: f64, delta: f64, k: usize, r_eps: f64, l: f64) -> f64 {
    let a = 1.0 - sigma * (1.0 - 0.5 * epsilon - 0.25 * l * delta) + k as f64 * r_eps;
    16.0 * a * a + 8.0 * a + (epsilon - 1.0) / k as f64 + 2.0 * r_eps
}

/// Bound on `mu_k . mu_l` for InfoNCE encoders:
/// `log(exp(A) - exp(B))` with `A = (l2 + tau) / (p_k p_l)` and `B = 1 - epsilon`,
/// evaluated as `A + ln(1 - exp(B - A))`. Defined only when `A > B`.
pub fn infonce_center_bound(l2: f64, tau_val: f64, p_k: f64, p_l: f64, epsilon: f64) -> (f64, bool) {
    let a = (l2 + tau_val) / (p_k * p_l);
    let b = 1.0 - epsilon;
    if a > b {
        (a + (-(b - a).exp()).ln_1p(), true)
    } else {
        (f64::NEG_INFINITY, false)
    }
}

/// Bounds on the first and second moments of `|f(x1) - mu_k|` within class
/// `k`, for encoders with `|f| = r`.
pub fn deviation_moment_bounds(epsilon: f64, sigma: f64, delta: f64, r: f64, l: f64, r_eps: f64, p_k: f64) -> (f64, f64) {
    let first = 4.0 * r * (1.0 - sigma * (1.0 - epsilon / (2.0 * r) - l * delta / (4.0 * r)) + r_eps / p_k);
    let q = 1.0 - sigma + r_eps / p_k;
    let spread = 2.0 * epsilon + l * delta;
    let second = spread * spread + 4.0 * r * q * (r + spread) + 4.0 * r * r * q * q;
    (first, second)
}

/// Cross-correlation slack, with `s = (2 epsilon + L delta) / (2 sqrt(d))`:
/// `4d(1 - sigma + s)^2 + 4(1 - sigma)d + 8dK r_eps (3/2 - sigma + s)
///  + 4d r_eps^2 sum_k 1/p_k + sqrt(2) d^(3/4) l1^(1/4)`.
#[allow(clippy::too_many_arguments)]
pub fn tau_crosscorr(
    epsilon: f64,
    sigma: f64,
    delta: f64,
    d: usize,
    k: usize,
    r_eps: f64,
    l: f64,
    l1: f64,
    priors: &[f64],
) -> f64 {
    let df = d as f64;
    let s = (2.0 * epsilon + l * delta) / (2.0 * df.sqrt());
    let inv_p: f64 = priors.iter().map(|p| 1.0 / p).sum();
    4.0 * df * (1.0 - sigma + s).powi(2)
        + 4.0 * (1.0 - sigma) * df
        + 8.0 * df * k as f64 * r_eps * (1.5 - sigma + s)
        + 4.0 * df * r_eps * r_eps * inv_p
        + 2f64.sqrt() * df.powf(0.75) * l1.max(0.0).powf(0.25)
}

/// Bound on `mu_k . mu_l` for cross-correlation encoders:
/// `sqrt((2 / (p_k p_l)) (l2 + tau' - (d - K) / 2))`, defined when the radicand is non-negative.
pub fn crosscorr_center_bound(l2: f64, tau_prime_val: f64, p_k: f64, p_l: f64, d: usize, k: usize) -> (f64, bool) {
    let radicand = 2.0 / (p_k * p_l) * (l2 + tau_prime_val - (d as f64 - k as f64) / 2.0);
    if radicand >= 0.0 {
        (radicand.sqrt(), true)
    } else {
        (f64::NAN, false)
    }
}

/// `L_pos <= 2 sqrt(d l1)` for standardized encoders.
pub fn alignment_bound(d: usize, l1: f64) -> f64 {
    2.0 * (d as f64 * l1.max(0.0)).sqrt()
}

/// `(1 - sigma) + eta sqrt(2 + 2 l1)`.
pub fn infonce_error_bound(sigma: f64, eta_val: f64, l1: f64) -> f64 {
    (1.0 - sigma) + eta_val * (2.0 + 2.0 * l1).max(0.0).sqrt()
}

/// `(1 - sigma) + sqrt(2) eta d^(1/4) l1^(1/4)`.
pub fn crosscorr_error_bound(sigma: f64, eta_val: f64, d: usize, l1: f64) -> f64 {
    (1.0 - sigma) + 2f64.sqrt() * eta_val * (d as f64).powf(0.25) * l1.max(0.0).powf(0.25)
}

/// Every symbol consumed by the bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub sigma: f64,
    pub delta: f64,
    pub epsilon: f64,
    pub r_eps: f64,
    pub l_pos: f64,
    pub lipschitz: f64,
    pub r: f64,
    pub d: usize,
    pub m: usize,
    pub n: usize,
    pub big_m: f64,
    pub priors: Vec<f64>,
    pub loss_kind: LossKind,
    pub l1: f64,
    pub l2: f64,
    pub lambda: Option<f64>,
    pub centers: Vec<Vec<f64>>,
    pub delta_mu: f64,
    /// Whether every embedding has norm exactly `r`.
    pub fixed_norm: bool,
    /// Whether the Lipschitz constant is certified only on the probe set.
    pub lipschitz_probe_only: bool,
}

/// [`BoundInputs`] under assembly; `finish` names every missing field.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundInputsDraft {
    pub sigma: Option<f64>,
    pub delta: Option<f64>,
    pub epsilon: Option<f64>,
    pub r_eps: Option<f64>,
    pub l_pos: Option<f64>,
    pub lipschitz: Option<f64>,
    pub r: Option<f64>,
    pub d: Option<usize>,
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub big_m: Option<f64>,
    pub priors: Option<Vec<f64>>,
    pub loss_kind: Option<LossKind>,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    pub lambda: Option<f64>,
    pub centers: Option<Vec<Vec<f64>>>,
    pub delta_mu: Option<f64>,
    pub fixed_norm: Option<bool>,
    pub lipschitz_probe_only: Option<bool>,
}

impl BoundInputsDraft {
    pub fn finish(self) -> Result<BoundInputs> {
        let mut missing = Vec::new();
        macro_rules! need {
            ($f:ident) => {
                if self.$f.is_none() {
                    missing.push(stringify!($f));
                }
            };
        }
        need!(sigma);
        need!(delta);
        need!(epsilon);
        need!(r_eps);
        need!(l_pos);
        need!(lipschitz);
        need!(r);
        need!(d);
        need!(m);
        need!(n);
        need!(big_m);
        need!(priors);
        need!(loss_kind);
        need!(l1);
        need!(l2);
        need!(centers);
        need!(delta_mu);
        if !missing.is_empty() {
            return Err(Error::MissingInputs(missing.join(", ")));
        }
        Ok(BoundInputs {
            sigma: self.sigma.unwrap(),
            delta: self.delta.unwrap(),
            epsilon: self.epsilon.unwrap(),
            r_eps: self.r_eps.unwrap(),
            l_pos: self.l_pos.unwrap(),
            lipschitz: self.lipschitz.unwrap(),
            r: self.r.unwrap(),
            d: self.d.unwrap(),
            m: self.m.unwrap(),
            n: self.n.unwrap(),
            big_m: self.big_m.unwrap(),
            priors: self.priors.unwrap(),
            loss_kind: self.loss_kind.unwrap(),
            l1: self.l1.unwrap(),
            l2: self.l2.unwrap(),
            lambda: self.lambda,
            centers: self.centers.unwrap(),
            delta_mu: self.delta_mu.unwrap(),
            fixed_norm: self.fixed_norm.unwrap_or(false),
            lipschitz_probe_only: self.lipschitz_probe_only.unwrap_or(false),
        })
    }
}

/// Measurements the bounds are compared against.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Empirical {
    pub err: Option<f64>,
    /// Per class `E |f(x1) - mu_k|` and `E |f(x1) - mu_k|^2`.
    pub deviation_first: Option<Vec<f64>>,
    pub deviation_second: Option<Vec<f64>>,
    /// Accuracy on samples in both a main part and the aligned set.
    pub main_part_accuracy: Option<f64>,
}

/// A bound, whether its premises hold, and the measured value it covers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub value: f64,
    pub valid: bool,
    pub empirical: Option<f64>,
}

impl BoundRow {
    /// `Some(empirical <= value)` for valid rows with a measurement.
    pub fn holds(&self, tol: f64) -> Option<bool> {
        match (self.valid, self.empirical) {
            (true, Some(e)) => Some(e <= self.value + tol),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairBound {
    pub k: usize,
    pub l: usize,
    pub bound: f64,
    pub in_domain: bool,
    pub mu_product: f64,
}

/// Center-product bounds for every class pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceBound {
    /// `tau` or `tau'`.
    pub slack: f64,
    pub pairs: Vec<PairBound>,
}

impl DivergenceBound {
    pub fn all_in_domain(&self) -> bool {
        self.pairs.iter().all(|p| p.in_domain)
    }

    /// Largest in-domain pair bound.
    pub fn max_bound(&self) -> Option<f64> {
        self.pairs
            .iter()
            .filter(|p| p.in_domain)
            .map(|p| p.bound)
            .reduce(f64::max)
    }

    /// Every in-domain pair bound covers its center product.
    pub fn holds(&self, tol: f64) -> bool {
        self.pairs
            .iter()
            .filter(|p| p.in_domain)
            .all(|p| p.mu_product <= p.bound + tol)
    }

    /// The bound is usable for the combined error bound: every pair is in
    /// domain and below the divergence threshold.
    pub fn below(&self, threshold: f64) -> bool {
        !self.pairs.is_empty() && self.all_in_domain() && self.pairs.iter().all(|p| p.bound < threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub rho_per_class: Vec<f64>,
    pub rho_max: f64,
    pub divergence_threshold: f64,
    pub pairwise_mu_products: Vec<(usize, usize, f64)>,
    pub divergence_condition_holds: bool,
    pub err_bound: BoundRow,
    pub eta: f64,
    pub spread_bound: BoundRow,
    pub infonce_centers: Option<DivergenceBound>,
    pub crosscorr_centers: Option<DivergenceBound>,
    /// Per class first and second moment bounds.
    pub deviation: Vec<(BoundRow, BoundRow)>,
    pub alignment: Option<BoundRow>,
    pub infonce_combined: Option<BoundRow>,
    pub crosscorr_combined: Option<BoundRow>,
    pub main_part_accuracy: Option<f64>,
    pub lipschitz_probe_only: bool,
}

fn check_convention(inputs: &BoundInputs) -> Result<()> {
    let tol = 1e-9;
    match inputs.loss_kind {
        LossKind::InfoNce if (inputs.r - 1.0).abs() > tol => Err(Error::Convention(format!(
            "InfoNCE bounds assume r = 1, got r = {}",
            inputs.r
        ))),
        LossKind::CrossCorr if (inputs.r - (inputs.d as f64).sqrt()).abs() > tol => Err(Error::Convention(format!(
            "cross-correlation bounds assume r = sqrt(d) = {}, got r = {}",
            (inputs.d as f64).sqrt(),
            inputs.r
        ))),
        _ => Ok(()),
    }
}

fn check_finite(inputs: &BoundInputs) -> Result<()> {
    let scalars = [
        ("sigma", inputs.sigma),
        ("delta", inputs.delta),
        ("epsilon", inputs.epsilon),
        ("r_eps", inputs.r_eps),
        ("l_pos", inputs.l_pos),
        ("lipschitz", inputs.lipschitz),
        ("r", inputs.r),
        ("big_m", inputs.big_m),
        ("l1", inputs.l1),
        ("l2", inputs.l2),
        ("delta_mu", inputs.delta_mu),
    ];
    for (name, v) in scalars {
        if !v.is_finite() {
            return Err(Error::InvalidConfig(format!("{name} is not finite")));
        }
    }
    if !(inputs.sigma > 0.0 && inputs.sigma <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "sigma must lie in (0, 1], got {}",
            inputs.sigma
        )));
    }
    if inputs.priors.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::InvalidConfig("every prior must be positive".into()));
    }
    if inputs.centers.len() != inputs.priors.len() {
        return Err(Error::DimensionMismatch {
            expected: inputs.priors.len(),
            got: inputs.centers.len(),
        });
    }
    Ok(())
}

fn pairwise(centers: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
    let k = centers.len();
    let mut out = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            out.push((i, j, dot(&centers[i], &centers[j])));
        }
    }
    out
}

/// Evaluates every bound for the loss family of `inputs` and pairs each
/// with its measurement.
pub fn full_report(inputs: &BoundInputs, empirical: &Empirical) -> Result<BoundReport> {
    check_finite(inputs)?;
    check_convention(inputs)?;
    let BoundInputs {
        sigma,
        delta,
        epsilon,
        r_eps,
        l_pos,
        lipschitz: l,
        r,
        d,
        ..
    } = *inputs;
    let k = inputs.priors.len();
    let priors = &inputs.priors;

    let rho_per_class: Vec<f64> = priors
        .iter()
        .map(|&p| rho(sigma, delta, epsilon, r_eps, p, l, r))
        .collect();
    let rho_max = rho_max(sigma, delta, epsilon, r_eps, priors, l, r);
    let threshold = divergence_threshold(rho_max, inputs.delta_mu, r);
    let products = pairwise(&inputs.centers);
    let condition = divergence_condition(&products, threshold);
    let (err_bound_value, err_bound_valid) = concentration_err_bound(sigma, r_eps, condition);
    let eta_val = eta(epsilon, inputs.n, inputs.m, l, inputs.big_m)?;

    let deviation = priors
        .iter()
        .enumerate()
        .map(|(c, &p)| {
            let (first, second) = deviation_moment_bounds(epsilon, sigma, delta, r, l, r_eps, p);
            (
                BoundRow {
                    value: first,
                    valid: inputs.fixed_norm,
                    empirical: empirical.deviation_first.as_ref().map(|v| v[c]),
                },
                BoundRow {
                    value: second,
                    valid: inputs.fixed_norm,
                    empirical: empirical.deviation_second.as_ref().map(|v| v[c]),
                },
            )
        })
        .collect();

    let pair_bounds = |f: &dyn Fn(f64, f64) -> (f64, bool)| -> Vec<PairBound> {
        products
            .iter()
            .map(|&(a, b, v)| {
                let (bound, in_domain) = f(priors[a], priors[b]);
                PairBound {
                    k: a,
                    l: b,
                    bound,
                    in_domain,
                    mu_product: v,
                }
            })
            .collect()
    };

    let (mut infonce_centers, mut crosscorr_centers, mut alignment, mut infonce_combined, mut crosscorr_combined) = (None, None, None, None, None);
    match inputs.loss_kind {
        LossKind::InfoNce => {
            let t = tau(epsilon, sigma, delta, k, r_eps, l);
            let div = DivergenceBound {
                slack: t,
                pairs: pair_bounds(&|pk, pl| infonce_center_bound(inputs.l2, t, pk, pl, epsilon)),
            };
            infonce_combined = Some(BoundRow {
                value: infonce_error_bound(sigma, eta_val, inputs.l1),
                valid: div.below(threshold),
                empirical: empirical.err,
            });
            infonce_centers = Some(div);
        }
        LossKind::CrossCorr => {
            let t = tau_crosscorr(epsilon, sigma, delta, d, k, r_eps, l, inputs.l1, priors);
            let div = DivergenceBound {
                slack: t,
                pairs: pair_bounds(&|pk, pl| crosscorr_center_bound(inputs.l2, t, pk, pl, d, k)),
            };
            crosscorr_combined = Some(BoundRow {
                value: crosscorr_error_bound(sigma, eta_val, d, inputs.l1),
                valid: div.below(threshold),
                empirical: empirical.err,
            });
            alignment = Some(BoundRow {
                value: alignment_bound(d, inputs.l1),
                valid: true,
                empirical: Some(l_pos),
            });
            crosscorr_centers = Some(div);
        }
        LossKind::Simple => {}
    }

    Ok(BoundReport {
        rho_per_class,
        rho_max,
        divergence_threshold: threshold,
        pairwise_mu_products: products,
        divergence_condition_holds: condition,
        err_bound: BoundRow {
            value: err_bound_value,
            valid: err_bound_valid,
            empirical: empirical.err,
        },
        eta: eta_val,
        spread_bound: BoundRow {
            value: spread_fraction_bound(eta_val, l_pos),
            valid: true,
            empirical: Some(r_eps),
        },
        infonce_centers,
        crosscorr_centers,
        deviation,
        alignment,
        infonce_combined,
        crosscorr_combined,
        main_part_accuracy: empirical.main_part_accuracy,
        lipschitz_probe_only: inputs.lipschitz_probe_only,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn push_row(out: &mut Vec<(String, String)>, key: &str, row: &BoundRow) {
    out.push((format!("{key}.bound"), row.value.to_string()));
    out.push((format!("{key}.valid"), row.valid.to_string()));
    out.push((format!("{key}.empirical"), fmt_opt(row.empirical)));
    out.push((
        format!("{key}.holds"),
        row.holds(1e-9).map(|h| h.to_string()).unwrap_or_default(),
    ));
}

fn push_divergence(out: &mut Vec<(String, String)>, key: &str, slack_key: &str, div: &DivergenceBound) {
    out.push((slack_key.to_string(), div.slack.to_string()));
    out.push((format!("{key}.bound"), fmt_opt(div.max_bound())));
    out.push((format!("{key}.in_domain"), div.all_in_domain().to_string()));
    let max_mu = div.pairs.iter().map(|p| p.mu_product).reduce(f64::max);
    out.push((format!("{key}.empirical"), fmt_opt(max_mu)));
    out.push((format!("{key}.holds"), div.holds(1e-9).to_string()));
    for p in &div.pairs {
        let pk = format!("{key}.pair.{}_{}", p.k, p.l);
        out.push((
            format!("{pk}.bound"),
            if p.in_domain {
                p.bound.to_string()
            } else {
                String::new()
            },
        ));
        out.push((format!("{pk}.in_domain"), p.in_domain.to_string()));
        out.push((format!("{pk}.mu_product"), p.mu_product.to_string()));
    }
}

impl BoundReport {
    /// Stable `key,value` pairs in a fixed order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (c, v) in self.rho_per_class.iter().enumerate() {
            out.push((format!("rho.{c}"), v.to_string()));
        }
        out.push(("rho_max".into(), self.rho_max.to_string()));
        out.push(("divergence.threshold".into(), self.divergence_threshold.to_string()));
        out.push((
            "divergence.condition_holds".into(),
            self.divergence_condition_holds.to_string(),
        ));
        for (a, b, v) in &self.pairwise_mu_products {
            out.push((format!("mu_product.{a}_{b}"), v.to_string()));
        }
        push_row(&mut out, "err_bound", &self.err_bound);
        out.push(("eta".into(), self.eta.to_string()));
        push_row(&mut out, "spread_bound", &self.spread_bound);
        if let Some(div) = &self.infonce_centers {
            push_divergence(&mut out, "infonce_centers", "tau", div);
        }
        if let Some(div) = &self.crosscorr_centers {
            push_divergence(&mut out, "crosscorr_centers", "tau_crosscorr", div);
        }
        for (c, (first, second)) in self.deviation.iter().enumerate() {
            push_row(&mut out, &format!("deviation.first.{c}"), first);
            push_row(&mut out, &format!("deviation.second.{c}"), second);
        }
        if let Some(row) = &self.alignment {
            push_row(&mut out, "alignment", row);
        }
        if let Some(row) = &self.infonce_combined {
            push_row(&mut out, "combined.infonce", row);
        }
        if let Some(row) = &self.crosscorr_combined {
            push_row(&mut out, "combined.crosscorr", row);
        }
        out.push(("main_part_accuracy".into(), fmt_opt(self.main_part_accuracy)));
        out.push(("lipschitz.probe_only".into(), self.lipschitz_probe_only.to_string()));
        out
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("key,value\n");
        for (k, v) in self.entries() {
            s.push_str(&format!("{k},{v}\n"));
        }
        s
    }

    pub fn save(&self, csv_path: &Path, json_path: &Path) -> Result<()> {
        std::fs::write(csv_path, self.to_csv())?;
        let json = serde_json::to_string_pretty(self).map_err(|e| Error::Schema(e.to_string()))?;
        std::fs::write(json_path, json)?;
        Ok(())
    }

    /// Every comparable inequality whose premises hold is satisfied.
    pub fn violations(&self, tol: f64) -> Vec<String> {
        let mut v = Vec::new();
        let mut check = |name: String, row: &BoundRow| {
            if row.holds(tol) == Some(false) {
                v.push(format!("{name}: {} > {}", row.empirical.unwrap(), row.value));
            }
        };
        check("err_bound".into(), &self.err_bound);
        check("spread_bound".into(), &self.spread_bound);
        for (c, (a, b)) in self.deviation.iter().enumerate() {
            check(format!("deviation.first.{c}"), a);
            check(format!("deviation.second.{c}"), b);
        }
        if let Some(row) = &self.alignment {
            check("alignment".into(), row);
        }
        if let Some(row) = &self.infonce_combined {
            check("combined.infonce".into(), row);
        }
        if let Some(row) = &self.crosscorr_combined {
            check("combined.crosscorr".into(), row);
        }
        for (name, div) in [("infonce_centers", &self.infonce_centers), ("crosscorr_centers", &self.crosscorr_centers)] {
            if let Some(div) = div {
                for p in div.pairs.iter().filter(|p| p.in_domain && p.mu_product > p.bound + tol) {
                    v.push(format!("{name}.pair.{}_{}: {} > {}", p.k, p.l, p.mu_product, p.bound));
                }
            }
        }
        v
    }
}
