//! Diagnostics for event-independent instances under the ℓ₁ ECE.
//!
//! An instance is event independent when every event induces the same
//! indirect utility `U(p)`. Any predictor then factors into a perfectly
//! calibrated predictor `g̃` and a post-processing plan `χ(q,p)` that moves
//! the calibrated mass at `q` to the prediction `p`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ece, Instance, Norm, Predictor, MERGE_TOL};

/// Predictions whose `κ` values differ by less than this share a `q`-atom.
pub const KAPPA_TOL: f64 = 1e-9;
/// Tolerance used when classifying predictions by `sign(κ(p) − p)`.
pub const CLASS_TOL: f64 = 1e-7;
const FIT_TOL: f64 = 1e-6;
const CHECK_TOL: f64 = 1e-7;
const SCAN_STEP: f64 = 1e-4;

/// True iff all events share one indirect utility function.
pub fn is_event_independent(inst: &Instance) -> bool {
    let mut cuts = vec![0.0, 1.0];
    cuts.extend(inst.discontinuities());
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() <= MERGE_TOL);
    let mut probes = cuts.clone();
    probes.extend(cuts.windows(2).map(|w| 0.5 * (w[0] + w[1])));
    probes.extend_from_slice(inst.theta());
    probes.iter().all(|&p| {
        let u0 = inst.indirect_utility(0, p);
        (1..inst.n()).all(|i| (inst.indirect_utility(i, p) - u0).abs() <= 1e-12)
    })
}

/// Integrated CDF `∫₀^s F` of a discrete distribution.
fn integrated_cdf(dist: &[(f64, f64)], s: f64) -> f64 {
    dist.iter().map(|&(x, w)| w * (s - x).max(0.0)).sum()
}

/// Whether `g` is a mean-preserving contraction of `lam`. Both are lists of
/// `(point, mass)` on `[0,1]`.
pub fn check_mpc(g: &[(f64, f64)], lam: &[(f64, f64)]) -> bool {
    let mean = |d: &[(f64, f64)]| d.iter().map(|(x, w)| x * w).sum::<f64>();
    if (mean(g) - mean(lam)).abs() > KAPPA_TOL {
        return false;
    }
    g.iter()
        .chain(lam)
        .map(|&(x, _)| x)
        .chain([0.0, 1.0])
        .all(|s| integrated_cdf(g, s) <= integrated_cdf(lam, s) + KAPPA_TOL)
}

/// Joint distribution `χ(q,p)` over calibrated outcomes and predictions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EventIndependentPlan {
    /// `(q, p, mass)` triples.
    pub mass: Vec<(f64, f64, f64)>,
}

impl EventIndependentPlan {
    /// `g(q) = Σ_p χ(q,p)`, sorted by `q`.
    pub fn marginal(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        let mut rows: Vec<(f64, f64)> = self.mass.iter().map(|&(q, _, w)| (q, w)).collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (q, w) in rows {
            match out.last_mut() {
                Some(last) if (last.0 - q).abs() <= KAPPA_TOL => last.1 += w,
                _ => out.push((q, w)),
            }
        }
        out
    }

    /// `Σ χ |q − p|^t`
    pub fn ece_power(&self, t: f64) -> f64 {
        self.mass.iter().map(|&(q, p, w)| w * (q - p).abs().powf(t)).sum()
    }
}

/// Splits a predictor into a perfectly calibrated predictor over the `κ`
/// values and the plan that moves each `κ` back to its predictions.
pub fn recalibrate(pred: &Predictor, inst: &Instance) -> Result<(Predictor, EventIndependentPlan)> {
    pred.check_compatible(inst)?;
    // (κ, prediction index, marginal) for every prediction with mass
    let mut atoms: Vec<(f64, usize, f64)> = (0..pred.len())
        .filter_map(|k| {
            let f = pred.marginal_at(inst, k);
            pred.kappa_at(inst, k).filter(|_| f > 0.0).map(|q| (q, k, f))
        })
        .collect();
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut groups: Vec<Vec<(f64, usize, f64)>> = Vec::new();
    for atom in atoms {
        match groups.last_mut() {
            Some(g) if atom.0 - g[0].0 < KAPPA_TOL => g.push(atom),
            _ => groups.push(vec![atom]),
        }
    }
    let mut plan = Vec::new();
    let mut rows: Vec<Vec<(f64, f64)>> = vec![Vec::new(); inst.n()];
    for g in &groups {
        let total: f64 = g.iter().map(|a| a.2).sum();
        let q = g.iter().map(|a| a.0 * a.2).sum::<f64>() / total;
        for (i, row) in rows.iter_mut().enumerate() {
            let w: f64 = g.iter().map(|&(_, k, _)| pred.mass()[i][k]).sum();
            if w > 0.0 {
                row.push((q, w));
            }
        }
        plan.extend(g.iter().map(|&(_, k, f)| (q, pred.support()[k], f)));
    }
    for (i, row) in rows.iter_mut().enumerate() {
        let s: f64 = row.iter().map(|x| x.1).sum();
        if s > 0.0 {
            row.iter_mut().for_each(|x| x.1 /= s);
        } else {
            // only events without prior mass end up here
            *row = vec![(inst.theta()[i], 1.0)];
        }
    }
    Ok((Predictor::from_events(&rows)?, EventIndependentPlan { mass: plan }))
}

/// Generates `f_i(p) = Σ_q g̃_i(q)/g(q) · χ(q,p)`.
///
/// Each `q` in the plan must be a prediction of `gtilde` and the plan's row
/// sums must match the marginal of `gtilde`. A mismatch is reported as a
/// supply violation whose `event` field is the index of the offending `q`
/// in `gtilde`'s support.
pub fn apply_plan(
    gtilde: &Predictor,
    plan: &EventIndependentPlan,
    inst: &Instance,
) -> Result<Predictor> {
    gtilde.check_compatible(inst)?;
    let nq = gtilde.len();
    let g: Vec<f64> = (0..nq).map(|k| gtilde.marginal_at(inst, k)).collect();
    let mut supplied = vec![0.0; nq];
    let mut located = Vec::with_capacity(plan.mass.len());
    for &(q, p, w) in &plan.mass {
        let k = gtilde
            .support()
            .iter()
            .position(|&x| (x - q).abs() <= KAPPA_TOL)
            .ok_or(Error::SupplyViolation { event: nq, expected: 0.0, found: w })?;
        supplied[k] += w;
        located.push((k, p, w));
    }
    for k in 0..nq {
        if (supplied[k] - g[k]).abs() > CHECK_TOL {
            return Err(Error::SupplyViolation { event: k, expected: g[k], found: supplied[k] });
        }
    }
    let rows: Vec<Vec<(f64, f64)>> = (0..inst.n())
        .map(|i| {
            let mut row: Vec<(f64, f64)> = located
                .iter()
                .filter(|(k, _, w)| g[*k] > 0.0 && *w > 0.0)
                .map(|&(k, p, w)| (p, gtilde.mass()[i][k] / g[k] * w))
                .filter(|(_, w)| *w > 0.0)
                .collect();
            let s: f64 = row.iter().map(|x| x.1).sum();
            if s > 0.0 {
                row.iter_mut().for_each(|x| x.1 /= s);
                row
            } else {
                vec![(inst.theta()[i], 1.0)]
            }
        })
        .collect();
    Predictor::from_events(&rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Confidence {
    Under,
    Calibrated,
    Over,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointReport {
    pub p: f64,
    pub kappa: f64,
    pub mass: f64,
    pub utility: f64,
    pub class: Confidence,
}

/// Interval structure of a predictor's support.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StructureReport {
    pub p_l: f64,
    pub p_h: f64,
    pub points: Vec<PointReport>,
    pub collinear_under: bool,
    pub under_residual: f64,
    pub collinear_over: bool,
    pub over_residual: f64,
    pub slope_under: Option<f64>,
    pub slope_over: Option<f64>,
    pub convex_points: bool,
    pub violations: Vec<String>,
}

/// Least-squares line through `pts`; returns (slope, max residual).
fn fit_line(pts: &[(f64, f64)]) -> (Option<f64>, f64) {
    if pts.len() < 2 {
        return (None, 0.0);
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 1e-300 {
        let spread = pts.iter().map(|p| (p.1 - my).abs()).fold(0.0, f64::max);
        return (None, spread);
    }
    let slope = sxy / sxx;
    let resid = pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).abs()).fold(0.0, f64::max);
    (Some(slope), resid)
}

/// Classifies the support into under-confident, calibrated and over-confident
/// predictions and tests the payoff structure of the two tails.
pub fn analyze_structure(pred: &Predictor, inst: &Instance) -> Result<StructureReport> {
    if !is_event_independent(inst) {
        return Err(Error::NotEventIndependent);
    }
    pred.check_compatible(inst)?;
    let mut points = Vec::new();
    for k in 0..pred.len() {
        let mass = pred.marginal_at(inst, k);
        let Some(kappa) = pred.kappa_at(inst, k).filter(|_| mass > 0.0) else { continue };
        let p = pred.support()[k];
        let class = if kappa > p + CLASS_TOL {
            Confidence::Under
        } else if kappa < p - CLASS_TOL {
            Confidence::Over
        } else {
            Confidence::Calibrated
        };
        points.push(PointReport { p, kappa, mass, utility: inst.indirect_utility(0, p), class });
    }
    let p_l = points
        .iter()
        .filter(|r| r.class == Confidence::Under)
        .map(|r| r.p)
        .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |a| a.max(p))));
    let p_h = points
        .iter()
        .filter(|r| r.class == Confidence::Over)
        .map(|r| r.p)
        .fold(None, |acc: Option<f64>, p| Some(acc.map_or(p, |a| a.min(p))));
    let mut violations = Vec::new();
    let (pl, ph) = (p_l.unwrap_or(0.0), p_h.unwrap_or(1.0));
    if pl > ph {
        violations.push(format!("under-confident prediction {pl} above over-confident {ph}"));
    }

    let tail = |keep: &dyn Fn(f64) -> bool| -> Vec<(f64, f64)> {
        points.iter().filter(|r| keep(r.p)).map(|r| (r.p, r.utility)).collect()
    };
    let under = if p_l.is_some() { tail(&|p| p <= pl + CLASS_TOL) } else { Vec::new() };
    let over = if p_h.is_some() { tail(&|p| p >= ph - CLASS_TOL) } else { Vec::new() };
    let (slope_under, under_residual) = fit_line(&under);
    let (slope_over, over_residual) = fit_line(&over);
    let collinear_under = under_residual <= FIT_TOL;
    let collinear_over = over_residual <= FIT_TOL;
    if !collinear_under {
        violations.push(format!("under-confident tail not collinear (residual {under_residual})"));
    }
    if !collinear_over {
        violations.push(format!("over-confident tail not collinear (residual {over_residual})"));
    }
    if let Some(s) = slope_over.filter(|s| *s < -FIT_TOL) {
        violations.push(format!("over-confident tail has negative slope {s}"));
    }
    if let Some(s) = slope_under.filter(|s| *s > FIT_TOL) {
        violations.push(format!("under-confident tail has positive slope {s}"));
    }
    if let (Some(a), Some(b)) = (slope_under, slope_over) {
        if (a + b).abs() > FIT_TOL {
            violations.push(format!("tail slopes {a} and {b} differ in magnitude"));
        }
    }

    let mut sorted: Vec<(f64, f64)> = points.iter().map(|r| (r.p, r.utility)).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let slopes: Vec<f64> = sorted
        .windows(2)
        .filter(|w| w[1].0 - w[0].0 > MERGE_TOL)
        .map(|w| (w[1].1 - w[0].1) / (w[1].0 - w[0].0))
        .collect();
    let convex_points = slopes.windows(2).all(|s| s[1] >= s[0] - FIT_TOL * (1.0 + s[0].abs()));
    if !convex_points {
        violations.push("support points of U are not convex".into());
    }
    Ok(StructureReport {
        p_l: pl,
        p_h: ph,
        points,
        collinear_under,
        under_residual,
        collinear_over,
        over_residual,
        slope_under,
        slope_over,
        convex_points,
        violations,
    })
}

/// Piecewise-linear convex function with linear tails of slopes `∓α` on
/// `[0, x_L]` and `[x_H, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaCertificate {
    /// Sorted knots from `x = 0` to `x = 1`.
    pub knots: Vec<(f64, f64)>,
    pub alpha: f64,
    pub x_l: f64,
    pub x_h: f64,
}

impl GammaCertificate {
    /// Builds a certificate; `alpha` is the largest slope magnitude.
    pub fn new(knots: Vec<(f64, f64)>, x_l: f64, x_h: f64) -> GammaCertificate {
        let alpha = knots
            .windows(2)
            .filter(|w| w[1].0 > w[0].0)
            .map(|w| ((w[1].1 - w[0].1) / (w[1].0 - w[0].0)).abs())
            .fold(0.0, f64::max);
        GammaCertificate { knots, alpha, x_l, x_h }
    }

    /// The constant function `c`.
    pub fn constant(c: f64) -> GammaCertificate {
        GammaCertificate::new(vec![(0.0, c), (1.0, c)], 0.5, 0.5)
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.knots.partition_point(|&(kx, _)| kx < x);
        if k == 0 {
            return self.knots[0].1;
        }
        if k == self.knots.len() {
            return self.knots[k - 1].1;
        }
        let (x0, y0) = self.knots[k - 1];
        let (x1, y1) = self.knots[k];
        if x1 - x0 <= 0.0 {
            y1
        } else {
            y0 + (y1 - y0) * (x - x0) / (x1 - x0)
        }
    }

    fn segments(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.knots
            .windows(2)
            .filter(|w| w[1].0 - w[0].0 > MERGE_TOL)
            .map(|w| (w[0].0, w[1].0, (w[1].1 - w[0].1) / (w[1].0 - w[0].0)))
    }

    /// Problems with the certificate's shape, empty if it is well formed.
    pub fn defects(&self) -> Vec<String> {
        let mut out = Vec::new();
        let first = self.knots.first().map(|k| k.0);
        let last = self.knots.last().map(|k| k.0);
        if self.knots.len() < 2 || first != Some(0.0) || last != Some(1.0) {
            out.push("knots must start at 0 and end at 1".into());
            return out;
        }
        if self.knots.windows(2).any(|w| w[1].0 < w[0].0) {
            out.push("knots are not sorted".into());
        }
        if !(0.0 <= self.x_l && self.x_l <= self.x_h && self.x_h <= 1.0) {
            out.push(format!("tail bounds {} and {} out of order", self.x_l, self.x_h));
        }
        let slopes: Vec<(f64, f64, f64)> = self.segments().collect();
        if slopes.windows(2).any(|w| w[1].2 < w[0].2 - 1e-9) {
            out.push("slopes are not non-decreasing".into());
        }
        for &(a, b, s) in &slopes {
            if a < self.x_l - MERGE_TOL && (s + self.alpha).abs() > 1e-9 {
                out.push(format!("slope {s} on [{a}, {b}] inside the left tail is not -{}", self.alpha));
            }
            if b > self.x_h + MERGE_TOL && (s - self.alpha).abs() > 1e-9 {
                out.push(format!("slope {s} on [{a}, {b}] inside the right tail is not {}", self.alpha));
            }
        }
        out
    }

    pub fn in_tails(&self, x: f64) -> bool {
        x <= self.x_l + 1e-9 || x >= self.x_h - 1e-9
    }
}

/// Outcome of the optimality check; every flag must hold for a certificate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OptimalityVerdict {
    pub certificate: bool,
    /// `α (ECE − ε) = 0`
    pub complementary_slackness: bool,
    /// `Γ = U` on the support and `Γ ≥ U` everywhere.
    pub touches_support: bool,
    /// Miscalibrated predictions and their `κ` lie in the tails.
    pub miscalibration_in_tails: bool,
    /// `E_g Γ = E_λ Γ`
    pub gamma_mean: bool,
    /// `g ∈ MPC(λ)`
    pub mpc: bool,
    pub failures: Vec<String>,
}

impl OptimalityVerdict {
    pub fn all_pass(&self) -> bool {
        self.certificate
            && self.complementary_slackness
            && self.touches_support
            && self.miscalibration_in_tails
            && self.gamma_mean
            && self.mpc
    }
}

/// Checks whether `cert` proves `pred` optimal among `(ε, ℓ₁)`-calibrated
/// predictors.
pub fn verify_optimality(
    pred: &Predictor,
    inst: &Instance,
    cert: &GammaCertificate,
) -> Result<OptimalityVerdict> {
    if !is_event_independent(inst) {
        return Err(Error::NotEventIndependent);
    }
    if !inst.norm().is_l1() {
        return Err(Error::UnsupportedNorm(format!("{} (verification needs t = 1)", inst.norm())));
    }
    let mut failures = cert.defects();
    let certificate = failures.is_empty();
    let (gtilde, plan) = recalibrate(pred, inst)?;
    let f = apply_plan(&gtilde, &plan, inst)?;
    let u = |p: f64| inst.indirect_utility(0, p);

    let gap = ece(&f, inst, Norm::L1) - inst.epsilon();
    let complementary_slackness = (cert.alpha * gap).abs() <= CHECK_TOL;
    if !complementary_slackness {
        failures.push(format!("alpha {} with budget slack {}", cert.alpha, -gap));
    }

    let mut touches_support = true;
    for &p in f.support() {
        if (cert.eval(p) - u(p)).abs() > CHECK_TOL {
            touches_support = false;
            failures.push(format!("Gamma({p}) = {} differs from U = {}", cert.eval(p), u(p)));
        }
    }
    if let Some(x) = gamma_below_utility(inst, cert) {
        touches_support = false;
        failures.push(format!("Gamma below U at {x}"));
    }

    let mut miscalibration_in_tails = true;
    for k in 0..f.len() {
        let p = f.support()[k];
        let Some(q) = f.kappa_at(inst, k) else { continue };
        if (q - p).abs() > CLASS_TOL && !(cert.in_tails(p) && cert.in_tails(q)) {
            miscalibration_in_tails = false;
            failures.push(format!("miscalibrated prediction {p} (kappa {q}) outside the tails"));
        }
    }

    let g: Vec<(f64, f64)> =
        (0..gtilde.len()).map(|k| (gtilde.support()[k], gtilde.marginal_at(inst, k))).collect();
    let lam = inst.prior_over_means();
    let expect = |d: &[(f64, f64)]| d.iter().map(|&(x, w)| w * cert.eval(x)).sum::<f64>();
    let gamma_mean = (expect(&g) - expect(&lam)).abs() <= CHECK_TOL;
    if !gamma_mean {
        failures.push(format!("E_g Gamma = {} but E_lambda Gamma = {}", expect(&g), expect(&lam)));
    }
    let mpc = check_mpc(&g, &lam);
    if !mpc {
        failures.push("recalibrated marginal is not a mean-preserving contraction".into());
    }
    Ok(OptimalityVerdict {
        certificate,
        complementary_slackness,
        touches_support,
        miscalibration_in_tails,
        gamma_mean,
        mpc,
        failures,
    })
}

/// First point found where `Γ < U`, by a dense scan and by an exact check on
/// every piece where `U` is constant.
fn gamma_below_utility(inst: &Instance, cert: &GammaCertificate) -> Option<f64> {
    let u = |p: f64| inst.indirect_utility(0, p);
    let below = |x: f64| cert.eval(x) < u(x) - CHECK_TOL;
    let z = inst.discontinuities();
    let steps = (1.0 / SCAN_STEP).round() as usize;
    let scan = (0..=steps).map(|k| k as f64 * SCAN_STEP).chain(
        z.iter().flat_map(|&x| [x - 1e-9, x, x + 1e-9]).filter(|x| (0.0..=1.0).contains(x)),
    );
    for x in scan {
        if below(x) {
            return Some(x);
        }
    }
    let mut cuts = vec![0.0, 1.0];
    cuts.extend(z);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() <= MERGE_TOL);
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let level = u(0.5 * (a + b));
        // a convex piecewise-linear Γ attains its minimum over [a,b] at an
        // end or a knot
        let inner = cert.knots.iter().map(|k| k.0).filter(|&x| x > a && x < b);
        for x in [a, b].into_iter().chain(inner) {
            if cert.eval(x) < level - CHECK_TOL {
                return Some(x);
            }
        }
    }
    None
}

/// Threshold data of a binary-action instance.
struct BinaryShape {
    value: f64,
    threshold: f64,
}

fn binary_shape(inst: &Instance) -> Result<BinaryShape> {
    if inst.m() != 2 {
        return Err(Error::NotBinaryShape(format!("{} actions", inst.m())));
    }
    if !inst.norm().is_l1() {
        return Err(Error::NotBinaryShape(format!("norm {} (needs t = 1)", inst.norm())));
    }
    let is_const = |a: usize, c: f64| {
        (0..inst.n())
            .all(|i| (0..2).all(|y| (inst.principal_utility(i, a, y) - c).abs() <= 1e-12))
    };
    let c = inst.principal_utility(0, 1, 0).max(inst.principal_utility(0, 0, 0));
    let high = if c > 0.0 && is_const(1, c) && is_const(0, 0.0) {
        1
    } else if c > 0.0 && is_const(0, c) && is_const(1, 0.0) {
        0
    } else {
        return Err(Error::NotBinaryShape(
            "principal utility must be c > 0 for one action and 0 for the other".into(),
        ));
    };
    let (lo, hi) = inst
        .best_response_interval(high)
        .ok_or_else(|| Error::NotBinaryShape("the preferred action is never a best response".into()))?;
    if hi < 1.0 - 1e-12 {
        return Err(Error::NotBinaryShape(format!(
            "the preferred action stops being a best response at {hi}"
        )));
    }
    Ok(BinaryShape { value: c, threshold: lo })
}

/// Index of the threshold event and the probability it moves to `p†`.
fn binary_split(inst: &Instance, p_dag: f64) -> Option<(usize, f64)> {
    let (theta, lam) = (inst.theta(), inst.lambda());
    let eps = inst.epsilon();
    let n = inst.n();
    // tail[k] = Σ_{i ≥ k} λ_i (p† − θ_i)
    let mut tail = vec![0.0; n + 1];
    for i in (0..n).rev() {
        tail[i] = tail[i + 1] + lam[i] * (p_dag - theta[i]);
    }
    if eps >= tail[0] {
        return None;
    }
    let k = (0..n).rev().find(|&k| tail[k] > eps)?;
    let share = ((eps - tail[k + 1]) / (lam[k] * (p_dag - theta[k]))).clamp(0.0, 1.0);
    Some((k, share))
}

/// Optimal predictor for a binary-action instance where the principal wants
/// one action, worth `c` in every event, and the agent takes it exactly at
/// predictions `p ≥ p†`.
///
/// With budget below `p† − θ̄` the highest events are pooled at `p†`, the
/// threshold event is split so the budget is used up, and the rest are
/// revealed. Otherwise every event predicts `max(θ̄, p†)`.
pub fn binary_action_optimal(inst: &Instance) -> Result<Predictor> {
    let shape = binary_shape(inst)?;
    let p_dag = shape.threshold;
    match binary_split(inst, p_dag) {
        None => Predictor::constant(inst.n(), inst.prior_mean().max(p_dag)),
        Some((k, share)) => {
            let rows: Vec<Vec<(f64, f64)>> = (0..inst.n())
                .map(|i| {
                    let theta = inst.theta()[i];
                    match i.cmp(&k) {
                        std::cmp::Ordering::Less => vec![(theta, 1.0)],
                        std::cmp::Ordering::Greater => vec![(p_dag, 1.0)],
                        std::cmp::Ordering::Equal => {
                            vec![(p_dag, share), (theta, 1.0 - share)]
                        }
                    }
                })
                .collect();
            Predictor::from_events(&rows)
        }
    }
}

/// Certificate for [`binary_action_optimal`]: zero up to the threshold
/// event's mean, then the line through `(p†, c)`. Constant `c` when the
/// budget covers full pooling.
pub fn binary_action_certificate(inst: &Instance) -> Result<GammaCertificate> {
    let shape = binary_shape(inst)?;
    let c = shape.value;
    match binary_split(inst, shape.threshold) {
        None => Ok(GammaCertificate::constant(c)),
        Some((k, _)) => {
            let t = inst.theta()[k];
            let alpha = c / (shape.threshold - t);
            let mut knots = vec![(0.0, 0.0)];
            if t > 0.0 {
                knots.push((t, 0.0));
            }
            knots.push((1.0, alpha * (1.0 - t)));
            Ok(GammaCertificate::new(knots, 0.0, t))
        }
    }
}

/// Support sizes of a predictor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct PredictionCounts {
    pub total: usize,
    pub max_per_event: usize,
    pub max_per_kappa: usize,
}

pub fn count_predictions(pred: &Predictor, inst: &Instance) -> PredictionCounts {
    let mut kappas: Vec<f64> = (0..pred.len())
        .filter(|&k| pred.marginal_at(inst, k) > 0.0)
        .filter_map(|k| pred.kappa_at(inst, k))
        .collect();
    kappas.sort_by(f64::total_cmp);
    let mut max_per_kappa = 0;
    let mut run = 0;
    for w in 0..kappas.len() {
        run = if w > 0 && kappas[w] - kappas[w - 1] < KAPPA_TOL { run + 1 } else { 1 };
        max_per_kappa = max_per_kappa.max(run);
    }
    PredictionCounts {
        total: pred.len(),
        max_per_event: (0..pred.n_events()).map(|i| pred.event_support_size(i)).max().unwrap_or(0),
        max_per_kappa,
    }
}
