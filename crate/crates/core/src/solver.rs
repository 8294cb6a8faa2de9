//! Survey-weighted elastic-net logistic regression.
//!
//! Minimizes
//!
//! ```text
//! -(1/n) Σ w_i [y_i η_i - log(1 + e^{η_i})] + λ Σ_j pf_j [(1-α) β_j² + α |β_j|]
//! ```
//!
//! with `η_i = x_iᵀβ`, weights normalized to mean one and penalty factors
//! `pf_j` equal to zero on the region indicators. The ridge term carries no
//! factor ½, so the coordinate update denominator uses `2λ(1-α)`.
//!
//! The region indicators partition the rows and therefore span the
//! intercept; the intercept is held at zero and the region coefficients act
//! as per-region intercepts.
//!
//! Fitting is a proximal Newton (IRLS) outer loop around cyclic coordinate
//! descent with soft-thresholding, with step halving whenever a Newton step
//! fails to decrease the objective.

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::Profile;
use crate::design::{Column, DesignMatrix};
use crate::error::{Error, Result};

/// Numerically stable `1 / (1 + e^{-x})`.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `y η - log(1 + e^η)` for a binary label.
pub fn loglik(eta: f64, y: f64) -> f64 {
    if y > 0.5 {
        -softplus(-eta)
    } else {
        -softplus(eta)
    }
}

/// Log-likelihood contribution of one design row.
pub fn loglik_contribution(intercept: f64, coefs: &[f64], row: &[u32], label: f64) -> f64 {
    let eta = intercept + row.iter().map(|&j| coefs[j as usize]).sum::<f64>();
    loglik(eta, label)
}

/// Weighted binomial deviance `-2 Σ w l / Σ w` over the given rows.
pub fn weighted_deviance(eta: impl Iterator<Item = (f64, f64, f64)>) -> f64 {
    let (num, den) = eta.fold((0.0, 0.0), |(num, den), (e, y, w)| {
        (num + w * loglik(e, y), den + w)
    });
    -2.0 * num / den
}

pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Convergence threshold on the largest coefficient change, measured on
    /// the standardized scale (change × column weighted sd).
    pub tol: f64,
    pub max_irls: usize,
    /// Coordinate sweeps allowed per IRLS iteration.
    pub max_sweeps: usize,
    /// Floor on `p(1-p)` in the working weights.
    pub weight_floor: f64,
    /// A fit is only reported converged when its KKT residual is below this.
    pub kkt_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-7,
            max_irls: 100,
            max_sweeps: 10_000,
            weight_floor: 1e-5,
            kkt_tol: 1e-6,
        }
    }
}

/// Coefficients of one elastic-net fit, aligned with the design columns.
#[derive(Debug, Clone, PartialEq)]
pub struct ElasticNetFit {
    pub intercept: f64,
    pub columns: Vec<Column>,
    pub coefs: Vec<f64>,
    /// Reference (implicit zero) level of every question in the fit.
    pub reference_levels: IndexMap<String, String>,
    pub lambda: f64,
    pub alpha: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl ElasticNetFit {
    /// All-zero fit shaped like `design`.
    pub fn zeros(design: &DesignMatrix, lambda: f64, alpha: f64) -> Self {
        ElasticNetFit {
            intercept: 0.0,
            columns: design.columns().to_vec(),
            coefs: vec![0.0; design.n_cols()],
            reference_levels: design
                .questions()
                .iter()
                .map(|q| (q.id.clone(), q.reference_level.clone()))
                .collect(),
            lambda,
            alpha,
            converged: true,
            iterations: 0,
        }
    }

    pub fn region_coef(&self, region: &str) -> Option<f64> {
        self.columns
            .iter()
            .zip(&self.coefs)
            .find_map(|(c, &b)| match c {
                Column::Region { region: r } if r == region => Some(b),
                _ => None,
            })
    }

    pub fn regions(&self) -> impl Iterator<Item = (&str, f64)> {
        self.columns
            .iter()
            .zip(&self.coefs)
            .filter_map(|(c, &b)| match c {
                Column::Region { region } => Some((region.as_str(), b)),
                _ => None,
            })
    }

    /// Level coefficients of `question`, reference level first (always 0).
    pub fn question_coefs(&self, question: &str) -> Option<Vec<(String, f64)>> {
        let reference = self.reference_levels.get(question)?;
        let mut out = vec![(reference.clone(), 0.0)];
        out.extend(
            self.columns
                .iter()
                .zip(&self.coefs)
                .filter_map(|(c, &b)| match c {
                    Column::Level { question: q, level } if q == question => {
                        Some((level.clone(), b))
                    }
                    _ => None,
                }),
        );
        Some(out)
    }

    /// Question ids with at least one nonzero level coefficient.
    pub fn active_questions(&self) -> Vec<String> {
        self.reference_levels
            .keys()
            .filter(|q| {
                self.columns.iter().zip(&self.coefs).any(|(c, &b)| {
                    matches!(c, Column::Level { question, .. } if question == *q) && b != 0.0
                })
            })
            .cloned()
            .collect()
    }

    fn check_design(&self, design: &DesignMatrix) -> Result<()> {
        if self.columns.as_slice() != design.columns() {
            return Err(Error::Dimension(format!(
                "fit has {} columns, design has {} (or differently labelled)",
                self.columns.len(),
                design.n_cols()
            )));
        }
        Ok(())
    }

    pub fn linear_predictor_row(&self, design: &DesignMatrix, i: usize) -> f64 {
        design.linear_predictor(i, self.intercept, &self.coefs)
    }

    pub fn predict_row(&self, design: &DesignMatrix, i: usize) -> f64 {
        logistic(self.linear_predictor_row(design, i))
    }

    /// Linear predictor for a labelled household profile.
    pub fn linear_predictor(&self, profile: &Profile) -> Result<f64> {
        if self.region_coef(&profile.region).is_none() {
            return Err(Error::Validation(format!(
                "region `{}` is not covered by the fit",
                profile.region
            )));
        }
        for (q, reference) in &self.reference_levels {
            let level = profile.responses.get(q).ok_or_else(|| {
                Error::Validation(format!("profile has no response for question `{q}`"))
            })?;
            let known = level == reference
                || self.columns.iter().any(|c| {
                    matches!(c, Column::Level { question, level: l } if question == q && l == level)
                });
            if !known {
                return Err(Error::Validation(format!(
                    "level `{level}` is not a level of question `{q}`"
                )));
            }
        }
        let mut eta = self.intercept;
        for (c, &b) in self.columns.iter().zip(&self.coefs) {
            let hit = match c {
                Column::Region { region } => *region == profile.region,
                Column::Level { question, level } => profile.responses.get(question) == Some(level),
            };
            if hit {
                eta += b;
            }
        }
        Ok(eta)
    }

    /// Probability of poverty `[1 + e^{-η}]^{-1}` for a household profile.
    pub fn predict_probability(&self, profile: &Profile) -> Result<f64> {
        Ok(logistic(self.linear_predictor(profile)?))
    }
}

#[derive(Serialize, Deserialize)]
struct QuestionCoefsJson {
    reference_level: String,
    levels: IndexMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
struct FitJson {
    intercept: f64,
    region_coefs: IndexMap<String, f64>,
    question_coefs: IndexMap<String, QuestionCoefsJson>,
    lambda: f64,
    alpha: f64,
    converged: bool,
    iterations: usize,
}

impl Serialize for ElasticNetFit {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut region_coefs = IndexMap::new();
        let mut question_coefs: IndexMap<String, QuestionCoefsJson> = self
            .reference_levels
            .iter()
            .map(|(q, r)| {
                (
                    q.clone(),
                    QuestionCoefsJson {
                        reference_level: r.clone(),
                        levels: IndexMap::new(),
                    },
                )
            })
            .collect();
        for (c, &b) in self.columns.iter().zip(&self.coefs) {
            match c {
                Column::Region { region } => {
                    region_coefs.insert(region.clone(), b);
                }
                Column::Level { question, level } => {
                    if let Some(q) = question_coefs.get_mut(question) {
                        q.levels.insert(level.clone(), b);
                    }
                }
            }
        }
        FitJson {
            intercept: self.intercept,
            region_coefs,
            question_coefs,
            lambda: self.lambda,
            alpha: self.alpha,
            converged: self.converged,
            iterations: self.iterations,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ElasticNetFit {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = FitJson::deserialize(d)?;
        let mut columns = Vec::new();
        let mut coefs = Vec::new();
        for (r, b) in raw.region_coefs {
            columns.push(Column::Region { region: r });
            coefs.push(b);
        }
        let mut reference_levels = IndexMap::new();
        for (q, qc) in raw.question_coefs {
            for (l, b) in qc.levels {
                columns.push(Column::Level {
                    question: q.clone(),
                    level: l,
                });
                coefs.push(b);
            }
            reference_levels.insert(q, qc.reference_level);
        }
        Ok(ElasticNetFit {
            intercept: raw.intercept,
            columns,
            coefs,
            reference_levels,
            lambda: raw.lambda,
            alpha: raw.alpha,
            converged: raw.converged,
            iterations: raw.iterations,
        })
    }
}

fn penalty(design: &DesignMatrix, coefs: &[f64], lambda: f64, alpha: f64) -> f64 {
    let pf = design.penalty_factors();
    let (l1, l2) = coefs
        .iter()
        .zip(pf)
        .filter(|(_, &f)| f > 0.0)
        .fold((0.0, 0.0), |(l1, l2), (&b, &f)| {
            (l1 + f * b.abs(), l2 + f * b * b)
        });
    lambda * ((1.0 - alpha) * l2 + alpha * l1)
}

fn loss_from_eta(design: &DesignMatrix, eta: &[f64]) -> f64 {
    let w = design.weights();
    let y = design.labels();
    -eta.iter()
        .zip(w)
        .zip(y)
        .map(|((&e, &wi), &yi)| wi * loglik(e, yi))
        .sum::<f64>()
        / design.n_rows() as f64
}

fn compute_eta(design: &DesignMatrix, intercept: f64, coefs: &[f64]) -> Vec<f64> {
    (0..design.n_rows())
        .map(|i| design.linear_predictor(i, intercept, coefs))
        .collect()
}

/// Penalized pseudo-loglikelihood objective of `fit` on `design`.
pub fn objective(fit: &ElasticNetFit, design: &DesignMatrix) -> Result<f64> {
    fit.check_design(design)?;
    Ok(objective_at(
        design,
        fit.intercept,
        &fit.coefs,
        fit.lambda,
        fit.alpha,
    ))
}

/// Objective at explicit coefficients; used for path comparisons at a
/// different λ than the fit's own.
pub fn objective_at(
    design: &DesignMatrix,
    intercept: f64,
    coefs: &[f64],
    lambda: f64,
    alpha: f64,
) -> f64 {
    let eta = compute_eta(design, intercept, coefs);
    loss_from_eta(design, &eta) + penalty(design, coefs, lambda, alpha)
}

/// Region-only maximum likelihood coefficients: weighted log-odds per region.
fn null_region_coefs(design: &DesignMatrix) -> Vec<f64> {
    let w = design.weights();
    let y = design.labels();
    (0..design.n_regions())
        .map(|r| {
            let rows = design.column_rows(r);
            if rows.is_empty() {
                return 0.0;
            }
            let (num, den) = rows.iter().fold((0.0, 0.0), |(n, d), &i| {
                let i = i as usize;
                (n + w[i] * y[i], d + w[i])
            });
            let p = (num / den).clamp(1e-10, 1.0 - 1e-10);
            (p / (1.0 - p)).ln()
        })
        .collect()
}

/// Weighted score `(1/n) Σ w_i x_ij (y_i - p_i)` for every column, plus the
/// intercept component.
fn gradients(design: &DesignMatrix, eta: &[f64]) -> (Vec<f64>, f64) {
    let n = design.n_rows() as f64;
    let w = design.weights();
    let y = design.labels();
    let resid: Vec<f64> = eta
        .iter()
        .zip(w)
        .zip(y)
        .map(|((&e, &wi), &yi)| wi * (yi - logistic(e)))
        .collect();
    let g = (0..design.n_cols())
        .map(|j| design.column_sum(j, &resid) / n)
        .collect();
    (g, resid.iter().sum::<f64>() / n)
}

/// Smallest λ at which every penalized coefficient is exactly zero.
pub fn lambda_max(design: &DesignMatrix, alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Validation(format!(
            "lambda_max needs alpha in (0, 1], got {alpha}"
        )));
    }
    let pf = design.penalty_factors();
    if !pf.iter().any(|&f| f > 0.0) {
        return Err(Error::Validation("design has no penalized columns".into()));
    }
    let mut coefs = vec![0.0; design.n_cols()];
    coefs[..design.n_regions()].copy_from_slice(&null_region_coefs(design));
    let eta = compute_eta(design, 0.0, &coefs);
    let (g, _) = gradients(design, &eta);
    Ok(g.iter()
        .zip(pf)
        .filter(|(_, &f)| f > 0.0)
        .map(|(&gj, &f)| gj.abs() / (alpha * f))
        .fold(0.0, f64::max))
}

/// Largest violation of the optimality conditions of the objective at `fit`.
///
/// Assumes the fit was produced for `design` (same column layout).
pub fn kkt_residual(fit: &ElasticNetFit, design: &DesignMatrix) -> f64 {
    assert_eq!(
        fit.coefs.len(),
        design.n_cols(),
        "fit does not match design"
    );
    let eta = compute_eta(design, fit.intercept, &fit.coefs);
    kkt_from_eta(design, &fit.coefs, &eta, fit.lambda, fit.alpha)
}

fn kkt_from_eta(design: &DesignMatrix, coefs: &[f64], eta: &[f64], lambda: f64, alpha: f64) -> f64 {
    let (g, g0) = gradients(design, eta);
    let pf = design.penalty_factors();
    let mut worst = g0.abs();
    for j in 0..design.n_cols() {
        let r = if pf[j] == 0.0 {
            g[j].abs()
        } else if coefs[j] != 0.0 {
            (g[j]
                - lambda * alpha * pf[j] * coefs[j].signum()
                - 2.0 * lambda * (1.0 - alpha) * pf[j] * coefs[j])
                .abs()
        } else {
            (g[j].abs() - lambda * alpha * pf[j]).max(0.0)
        };
        worst = worst.max(r);
    }
    worst
}

struct CoordinateDescent<'a> {
    design: &'a DesignMatrix,
    sd: &'a [f64],
    lambda: f64,
    alpha: f64,
    /// IRLS working weights `w_i max(p(1-p), floor) / n`
    v: Vec<f64>,
    /// working residual `z_i - η_i`
    r: Vec<f64>,
    /// Σ_i v_i x_ij
    xv: Vec<f64>,
}

impl CoordinateDescent<'_> {
    fn update(&mut self, j: usize, beta: &mut [f64]) -> f64 {
        if self.xv[j] <= 0.0 {
            return 0.0;
        }
        let grad = self.design.column_dot(j, &self.v, &self.r);
        let u = grad + self.xv[j] * beta[j];
        let pf = self.design.penalty_factors()[j];
        let new = if pf == 0.0 {
            u / self.xv[j]
        } else {
            soft_threshold(u, self.lambda * self.alpha * pf)
                / (self.xv[j] + 2.0 * self.lambda * (1.0 - self.alpha) * pf)
        };
        let delta = new - beta[j];
        if delta != 0.0 {
            self.design.column_add(j, &mut self.r, -delta);
            beta[j] = new;
        }
        (delta * self.sd[j]).abs()
    }

    fn sweep(&mut self, cols: impl Iterator<Item = usize>, beta: &mut [f64]) -> f64 {
        let mut max_change: f64 = 0.0;
        for j in cols {
            max_change = max_change.max(self.update(j, beta));
        }
        max_change
    }

    /// Solves the quadratic model exactly on the current active set with
    /// signs held fixed. Accepted only when the solution keeps every sign and
    /// satisfies the optimality conditions off the active set; otherwise
    /// `beta` and the residual are left untouched.
    fn solve_active(&mut self, beta: &mut [f64]) -> bool {
        let d = self.design;
        let pf = d.penalty_factors();
        let p = beta.len();
        let active: Vec<usize> = (0..p)
            .filter(|&j| self.xv[j] > 0.0 && (beta[j] != 0.0 || pf[j] == 0.0))
            .collect();
        let m = active.len();
        if m == 0 {
            return false;
        }
        let mut pos = vec![usize::MAX; p];
        for (a, &j) in active.iter().enumerate() {
            pos[j] = a;
        }
        let l1 = self.lambda * self.alpha;
        let l2 = 2.0 * self.lambda * (1.0 - self.alpha);

        let mut gram = vec![0.0; m * m];
        let mut rhs = vec![0.0; m];
        let mut eta = vec![0.0; d.n_rows()];
        let mut idx = Vec::with_capacity(64);
        for (i, e) in eta.iter_mut().enumerate() {
            idx.clear();
            let mut eta_i = 0.0;
            for &c in d.row(i) {
                let c = c as usize;
                eta_i += beta[c];
                if pos[c] != usize::MAX {
                    idx.push(pos[c]);
                }
            }
            *e = eta_i;
            let vi = self.v[i];
            let zi = vi * (eta_i + self.r[i]);
            for (k, &a) in idx.iter().enumerate() {
                rhs[a] += zi;
                let row = &mut gram[a * m..a * m + m];
                for &b in &idx[..=k] {
                    // SAFETY: positions are < m
                    unsafe {
                        *row.get_unchecked_mut(b) += vi;
                    }
                }
            }
        }
        // row indices within a design row are sorted, so `a >= b` above
        for (a, &j) in active.iter().enumerate() {
            if pf[j] > 0.0 {
                gram[a * m + a] += l2 * pf[j];
                rhs[a] -= l1 * pf[j] * beta[j].signum();
            }
        }
        if !cholesky_solve(&mut gram, &mut rhs, m) {
            return false;
        }
        for (a, &j) in active.iter().enumerate() {
            if pf[j] > 0.0 && rhs[a] * beta[j].signum() <= 0.0 {
                return false;
            }
        }
        let mut new_beta = beta.to_vec();
        for (a, &j) in active.iter().enumerate() {
            new_beta[j] = rhs[a];
        }
        let new_r: Vec<f64> = (0..d.n_rows())
            .map(|i| {
                let new_eta = d.row_sum(i, &new_beta);
                self.r[i] + eta[i] - new_eta
            })
            .collect();
        for j in 0..p {
            if pos[j] != usize::MAX || self.xv[j] <= 0.0 || pf[j] == 0.0 {
                continue;
            }
            let g = d.column_dot(j, &self.v, &new_r);
            if g.abs() > l1 * pf[j] {
                return false;
            }
        }
        beta.copy_from_slice(&new_beta);
        self.r = new_r;
        true
    }

    /// Minimizes the penalized quadratic model; returns sweeps used.
    ///
    /// A successful exact solve certifies optimality of the quadratic model,
    /// so it ends the loop; sweeps run first because they are cheap and
    /// usually settle the support.
    fn run(&mut self, beta: &mut [f64], tol: f64, max_sweeps: usize) -> usize {
        let p = beta.len();
        let pf = self.design.penalty_factors();
        let mut sweeps = 0;
        while sweeps < max_sweeps {
            let change = self.sweep(0..p, beta);
            sweeps += 1;
            if change < tol || self.solve_active(beta) {
                break;
            }
            let active: Vec<usize> = (0..p)
                .filter(|&j| (beta[j] != 0.0 || pf[j] == 0.0) && self.xv[j] > 0.0)
                .collect();
            for _ in 0..10 {
                if sweeps >= max_sweeps {
                    break;
                }
                let change = self.sweep(active.iter().copied(), beta);
                sweeps += 1;
                if change < tol {
                    break;
                }
            }
        }
        sweeps
    }
}

/// In-place Cholesky solve of the symmetric system whose lower triangle is
/// stored row-major in `a`. Returns false if the matrix is not numerically
/// positive definite.
fn cholesky_solve(a: &mut [f64], b: &mut [f64], m: usize) -> bool {
    fn dot(x: &[f64], y: &[f64]) -> f64 {
        x.iter().zip(y).map(|(p, q)| p * q).sum()
    }
    for j in 0..m {
        let (head, tail) = a.split_at_mut(j * m + m);
        let row_j = &mut head[j * m..];
        let diag = row_j[j] - dot(&row_j[..j], &row_j[..j]);
        if !(diag > 1e-12 * row_j[j].abs().max(1e-300)) {
            return false;
        }
        let ljj = diag.sqrt();
        row_j[j] = ljj;
        let row_j = &row_j[..j];
        for row_i in tail.chunks_exact_mut(m) {
            row_i[j] = (row_i[j] - dot(&row_i[..j], row_j)) / ljj;
        }
    }
    for i in 0..m {
        let row = &a[i * m..i * m + m];
        b[i] = (b[i] - dot(&row[..i], &b[..i])) / row[i];
    }
    for i in (0..m).rev() {
        let mut s = b[i];
        for k in (i + 1)..m {
            s -= a[k * m + i] * b[k];
        }
        b[i] = s / a[i * m + i];
    }
    true
}

/// Fits the penalized problem at a single `(λ, α)`.
///
/// A warm start must share the design's column layout. Non-convergence is
/// not an error: the fit comes back with `converged = false`.
pub fn fit(
    design: &DesignMatrix,
    lambda: f64,
    alpha: f64,
    warm_start: Option<&ElasticNetFit>,
    opts: &SolverOptions,
) -> Result<ElasticNetFit> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Validation(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Validation(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    if design.n_rows() == 0 {
        return Err(Error::Validation("design has no rows".into()));
    }
    if !design.both_classes_present() {
        return Err(Error::Validation(
            "labels contain a single class; logistic fit is undefined".into(),
        ));
    }
    let mut out = ElasticNetFit::zeros(design, lambda, alpha);
    if alpha > 0.0
        && design.penalty_factors().iter().any(|&f| f > 0.0)
        && lambda >= lambda_max(design, alpha)?
    {
        // the region-only model satisfies the optimality conditions exactly
        out.coefs[..design.n_regions()].copy_from_slice(&null_region_coefs(design));
        out.converged = true;
        return Ok(out);
    }
    match warm_start {
        Some(ws) => {
            ws.check_design(design)?;
            out.coefs.copy_from_slice(&ws.coefs);
        }
        None => {
            out.coefs[..design.n_regions()].copy_from_slice(&null_region_coefs(design));
        }
    }
    let n = design.n_rows();
    let nf = n as f64;
    let sd = design.column_sd();
    let w = design.weights();
    let y = design.labels();

    let mut beta = out.coefs;
    let mut eta = compute_eta(design, 0.0, &beta);
    let mut obj = loss_from_eta(design, &eta) + penalty(design, &beta, lambda, alpha);
    let mut inner_tol = opts.tol * 0.1;
    let mut converged = false;
    let mut iterations = 0;

    let mut cd = CoordinateDescent {
        design,
        sd: &sd,
        lambda,
        alpha,
        v: vec![0.0; n],
        r: vec![0.0; n],
        xv: vec![0.0; design.n_cols()],
    };

    while iterations < opts.max_irls {
        iterations += 1;
        for i in 0..n {
            let p = logistic(eta[i]);
            let q = (p * (1.0 - p)).max(opts.weight_floor);
            cd.v[i] = w[i] * q / nf;
            cd.r[i] = (y[i] - p) / q;
        }
        for j in 0..design.n_cols() {
            cd.xv[j] = design.column_sum(j, &cd.v);
        }
        let mut proposal = beta.clone();
        cd.run(&mut proposal, inner_tol, opts.max_sweeps);

        let mut new_eta = compute_eta(design, 0.0, &proposal);
        let mut new_obj =
            loss_from_eta(design, &new_eta) + penalty(design, &proposal, lambda, alpha);
        let slack = 1e-13 * obj.abs().max(1.0);
        if new_obj > obj + slack {
            // the Newton step overshot; back off along the segment
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                t *= 0.5;
                let trial: Vec<f64> = beta
                    .iter()
                    .zip(&proposal)
                    .map(|(&b, &pr)| b + t * (pr - b))
                    .collect();
                let trial_eta = compute_eta(design, 0.0, &trial);
                let trial_obj =
                    loss_from_eta(design, &trial_eta) + penalty(design, &trial, lambda, alpha);
                if trial_obj <= obj + slack {
                    proposal = trial;
                    new_eta = trial_eta;
                    new_obj = trial_obj;
                    accepted = true;
                    break;
                }
            }
            if !accepted {
                proposal = beta.clone();
                new_eta = eta.clone();
                new_obj = obj;
            }
        }
        let change = proposal
            .iter()
            .zip(&beta)
            .zip(&sd)
            .map(|((&a, &b), &s)| ((a - b) * s).abs())
            .fold(0.0, f64::max);
        beta = proposal;
        eta = new_eta;
        obj = new_obj;
        // Newton steps converge quadratically, so a step already below
        // √tol with a near-zero KKT residual leaves an error far below tol.
        if change < opts.tol.sqrt() * 0.1
            && change >= opts.tol
            && kkt_from_eta(design, &beta, &eta, lambda, alpha) <= opts.kkt_tol * 1e-2
        {
            converged = true;
            break;
        }
        if change < opts.tol {
            if kkt_from_eta(design, &beta, &eta, lambda, alpha) <= opts.kkt_tol {
                converged = true;
                break;
            }
            if inner_tol < 1e-15 {
                break;
            }
            inner_tol *= 0.01;
        }
    }

    out.coefs = beta;
    out.converged = converged;
    out.iterations = iterations;
    Ok(out)
}

/// A warm-started sequence of fits over a decreasing λ grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LambdaPath {
    pub lambdas: Vec<f64>,
    pub fits: Vec<ElasticNetFit>,
}

/// Log-spaced grid from `lambda_max` down to `lambda_min_ratio * lambda_max`.
pub fn lambda_grid(lambda_max: f64, n_lambda: usize, lambda_min_ratio: f64) -> Vec<f64> {
    if n_lambda == 1 {
        return vec![lambda_max];
    }
    let step = lambda_min_ratio.ln() / (n_lambda - 1) as f64;
    (0..n_lambda)
        .map(|k| lambda_max * (step * k as f64).exp())
        .collect()
}

/// Default lower end of the grid: 1e-4 when rows outnumber columns, else 1e-3.
pub fn default_lambda_min_ratio(design: &DesignMatrix) -> f64 {
    if design.n_rows() > design.n_cols() {
        1e-4
    } else {
        1e-3
    }
}

pub fn fit_path(
    design: &DesignMatrix,
    alpha: f64,
    n_lambda: usize,
    lambda_min_ratio: f64,
    opts: &SolverOptions,
) -> Result<LambdaPath> {
    if n_lambda < 2 {
        return Err(Error::Validation(format!(
            "n_lambda must be >= 2, got {n_lambda}"
        )));
    }
    if !(lambda_min_ratio > 0.0 && lambda_min_ratio < 1.0) {
        return Err(Error::Validation(format!(
            "lambda_min_ratio must lie in (0, 1), got {lambda_min_ratio}"
        )));
    }
    let lmax = lambda_max(design, alpha)?;
    if lmax <= 0.0 {
        return Err(Error::Numerical(
            "lambda_max is zero: the region-only model is optimal for every lambda".into(),
        ));
    }
    fit_path_on_grid(
        design,
        alpha,
        &lambda_grid(lmax, n_lambda, lambda_min_ratio),
        opts,
    )
}

/// Fits every λ of `lambdas` in order, each warm-started from the last.
pub fn fit_path_on_grid(
    design: &DesignMatrix,
    alpha: f64,
    lambdas: &[f64],
    opts: &SolverOptions,
) -> Result<LambdaPath> {
    let mut fits: Vec<ElasticNetFit> = Vec::with_capacity(lambdas.len());
    for &lam in lambdas {
        let f = fit(design, lam, alpha, fits.last(), opts)?;
        fits.push(f);
    }
    Ok(LambdaPath {
        lambdas: lambdas.to_vec(),
        fits,
    })
}
