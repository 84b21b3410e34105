//! Generative PPCA model, missingness mechanisms and population-level oracles.
//!
//! Data follow `Y = 1 alpha^T + W B + E` with `W` an `n x r` matrix of standard
//! normal latent factors, `B` the `r x p` loading matrix and `E` isotropic noise of
//! variance `sigma2`. Rows are i.i.d. `N(alpha, B^T B + sigma2 I)`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::linalg::{condition_number, submatrix, CONDITION_THRESHOLD};
use crate::moments::{LinearRelation, MomentTable};

/// Ground-truth parameters of a probabilistic PCA model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PpcaParams {
    /// Variable means, length `p`.
    pub alpha: DVector<f64>,
    /// Loading matrix, `r x p` (rows are latent factors).
    pub loadings: DMatrix<f64>,
    /// Isotropic noise variance.
    pub sigma2: f64,
}

impl PpcaParams {
    pub fn new(alpha: DVector<f64>, loadings: DMatrix<f64>, sigma2: f64) -> Result<Self> {
        let params = Self {
            alpha,
            loadings,
            sigma2,
        };
        params.validate()?;
        Ok(params)
    }

    /// Draws `alpha ~ U[0, 2]` per variable and i.i.d. standard normal loadings.
    pub fn random(p: usize, r: usize, sigma: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unif = Uniform::new(0.0, 2.0).expect("valid range");
        let alpha = DVector::from_fn(p, |_, _| unif.sample(&mut rng));
        let loadings = DMatrix::from_fn(r, p, |_, _| rng.sample::<f64, _>(StandardNormal));
        Self::new(alpha, loadings, sigma * sigma)
    }

    pub fn p(&self) -> usize {
        self.loadings.ncols()
    }

    pub fn r(&self) -> usize {
        self.loadings.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let (r, p) = self.loadings.shape();
        if r == 0 || r >= p {
            return Err(Error::RankOutOfRange { r, p });
        }
        if self.alpha.len() != p {
            return Err(Error::DimensionMismatch(format!(
                "alpha has length {} but loadings have {p} columns",
                self.alpha.len()
            )));
        }
        if !(self.sigma2 >= 0.0) || !self.sigma2.is_finite() {
            return Err(Error::InvalidParams(format!(
                "noise variance must be finite and nonnegative, got {}",
                self.sigma2
            )));
        }
        Ok(())
    }
}

/// Draws `n` rows from the model. Deterministic for a fixed seed.
pub fn sample_ppca(params: &PpcaParams, n: usize, seed: u64) -> Result<DMatrix<f64>> {
    params.validate()?;
    if n == 0 {
        return Err(Error::InvalidParams("sample size must be positive".into()));
    }
    let (r, p) = params.loadings.shape();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let latent = DMatrix::from_fn(n, r, |_, _| rng.sample::<f64, _>(StandardNormal));
    let sigma = params.sigma2.sqrt();
    let mut y = &latent * &params.loadings;
    for i in 0..n {
        for j in 0..p {
            let noise: f64 = rng.sample(StandardNormal);
            y[(i, j)] += params.alpha[j] + sigma * noise;
        }
    }
    Ok(y)
}

/// `B^T B + sigma2 I`.
pub fn population_covariance(params: &PpcaParams) -> DMatrix<f64> {
    let p = params.p();
    params.loadings.transpose() * &params.loadings + DMatrix::identity(p, p) * params.sigma2
}

/// Exact means and covariances of the model, in the form the estimators consume.
pub fn population_moments(params: &PpcaParams) -> MomentTable {
    MomentTable::from_parts(params.alpha.clone(), population_covariance(params))
}

/// `Var(Y_j | Y_k, k != j)` under the model; zero when the remaining variables determine `Y_j`.
pub fn population_conditional_variance(params: &PpcaParams, j: usize) -> Result<f64> {
    let p = params.p();
    check_index(j, p)?;
    let sigma = population_covariance(params);
    let others: Vec<usize> = (0..p).filter(|&k| k != j).collect();
    let szz = submatrix(&sigma, &others, &others);
    let szj = DVector::from_iterator(others.len(), others.iter().map(|&k| sigma[(k, j)]));
    let pinv = szz
        .pseudo_inverse(1e-12 * sigma.norm())
        .map_err(|e| Error::InvalidParams(e.to_string()))?;
    let explained = (szj.transpose() * pinv * &szj)[(0, 0)];
    Ok((sigma[(j, j)] - explained).max(0.0))
}

/// Coefficients of the exact linear relation between `response` and `r` other variables.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuralCoefficients {
    pub response: usize,
    pub regressors: Vec<usize>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
}

impl LinearRelation for StructuralCoefficients {
    fn response(&self) -> usize {
        self.response
    }

    fn intercept(&self) -> f64 {
        self.intercept
    }

    fn coefficient(&self, var: usize) -> Option<f64> {
        self.regressors
            .iter()
            .position(|&k| k == var)
            .map(|pos| self.coefficients[pos])
    }

    fn regressors(&self) -> &[usize] {
        &self.regressors
    }
}

/// Population coefficients of `Y_response = c0 + sum_k c_k Y_k + noise` over `r` regressors.
///
/// With `S` the `r x r` loading block over the regressors, the slopes are
/// `S^{-1} B_{.response}` and the intercept is `alpha_response - sum_k c_k alpha_k`.
/// For noiseless data these are also the complete-case regression coefficients, which
/// makes them the exactness oracle for the estimators.
pub fn population_cc_coefficients(
    params: &PpcaParams,
    response: usize,
    regressors: &[usize],
) -> Result<StructuralCoefficients> {
    params.validate()?;
    let (r, p) = params.loadings.shape();
    check_index(response, p)?;
    for &k in regressors {
        check_index(k, p)?;
        if k == response {
            return Err(Error::Precondition(format!(
                "variable {k} cannot regress on itself"
            )));
        }
    }
    if regressors.len() != r {
        return Err(Error::Precondition(format!(
            "expected {r} regressors, got {}",
            regressors.len()
        )));
    }
    let rows: Vec<usize> = (0..r).collect();
    let block = submatrix(&params.loadings, &rows, regressors);
    let condition = condition_number(&block);
    if !(condition <= CONDITION_THRESHOLD) {
        return Err(Error::SingularSubmatrix {
            columns: regressors.to_vec(),
            condition,
        });
    }
    let target = params.loadings.column(response).clone_owned();
    let slopes = block
        .lu()
        .solve(&target)
        .ok_or(Error::SingularSubmatrix {
            columns: regressors.to_vec(),
            condition,
        })?;
    let intercept = params.alpha[response]
        - regressors
            .iter()
            .zip(slopes.iter())
            .map(|(&k, c)| c * params.alpha[k])
            .sum::<f64>();
    Ok(StructuralCoefficients {
        response,
        regressors: regressors.to_vec(),
        intercept,
        coefficients: slopes.iter().copied().collect(),
    })
}

/// Population least-squares regression of `response` on any set of regressors.
///
/// Slopes are `Var(Y_R)^{-1} Cov(Y_R, Y_response)` under the model covariance.
pub fn population_regression(
    params: &PpcaParams,
    response: usize,
    regressors: &[usize],
) -> Result<StructuralCoefficients> {
    params.validate()?;
    let p = params.p();
    check_index(response, p)?;
    for &k in regressors {
        check_index(k, p)?;
    }
    let sigma = population_covariance(params);
    let srr = submatrix(&sigma, regressors, regressors);
    let srj = DVector::from_iterator(regressors.len(), regressors.iter().map(|&k| sigma[(k, response)]));
    let condition = condition_number(&srr);
    if !(condition <= CONDITION_THRESHOLD) {
        return Err(Error::RankDeficientDesign { condition });
    }
    let slopes = srr
        .lu()
        .solve(&srj)
        .ok_or(Error::RankDeficientDesign { condition })?;
    let intercept = params.alpha[response]
        - regressors
            .iter()
            .zip(slopes.iter())
            .map(|(&k, c)| c * params.alpha[k])
            .sum::<f64>();
    Ok(StructuralCoefficients {
        response,
        regressors: regressors.to_vec(),
        intercept,
        coefficients: slopes.iter().copied().collect(),
    })
}

fn check_index(index: usize, len: usize) -> Result<()> {
    if index < len {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { index, len })
    }
}

/// Observation mask: `true` where a cell is observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    nrows: usize,
    ncols: usize,
    observed: Vec<bool>,
}

impl Mask {
    pub fn all_observed(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            observed: vec![true; nrows * ncols],
        }
    }

    pub fn from_fn(nrows: usize, ncols: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut observed = Vec::with_capacity(nrows * ncols);
        for i in 0..nrows {
            for j in 0..ncols {
                observed.push(f(i, j));
            }
        }
        Self {
            nrows,
            ncols,
            observed,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        assert!(i < self.nrows && j < self.ncols, "mask index ({i}, {j}) out of bounds");
        self.observed[i * self.ncols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, observed: bool) {
        assert!(i < self.nrows && j < self.ncols, "mask index ({i}, {j}) out of bounds");
        self.observed[i * self.ncols + j] = observed;
    }

    pub fn missing_count(&self) -> usize {
        self.observed.iter().filter(|&&o| !o).count()
    }

    pub fn missing_fraction(&self) -> f64 {
        if self.observed.is_empty() {
            0.0
        } else {
            self.missing_count() as f64 / self.observed.len() as f64
        }
    }

    pub fn column_missing_fraction(&self, j: usize) -> f64 {
        let missing = (0..self.nrows).filter(|&i| !self.is_observed(i, j)).count();
        missing as f64 / self.nrows.max(1) as f64
    }

    pub fn row_complete(&self, i: usize) -> bool {
        self.observed[i * self.ncols..(i + 1) * self.ncols]
            .iter()
            .all(|&o| o)
    }

    /// 0/1 matrix with 1 for observed cells.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.nrows, self.ncols, |i, j| {
            if self.is_observed(i, j) {
                1.0
            } else {
                0.0
            }
        })
    }
}

/// Link function mapping the linear predictor to an observation probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Logistic,
    Probit,
}

impl Link {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Link::Logistic => 1.0 / (1.0 + (-x).exp()),
            Link::Probit => 0.5 * erfc(-x / std::f64::consts::SQRT_2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MechanismKind {
    SelfMaskedLogistic,
    SelfMaskedProbit,
    Mcar,
    /// Logistic in the sum of the `depends_on` columns.
    GeneralMnar,
}

/// Missingness law of one column: `P(observed) = F(phi0 + phi1 * x)`.
///
/// `x` is the column itself for self-masked kinds and the sum of the
/// `depends_on` columns for [`MechanismKind::GeneralMnar`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MechanismSpec {
    pub kind: MechanismKind,
    #[serde(default)]
    pub phi0: f64,
    #[serde(default)]
    pub phi1: f64,
    /// Observation probability, used by [`MechanismKind::Mcar`] only.
    #[serde(default = "one")]
    pub prob: f64,
    #[serde(default)]
    pub depends_on: Vec<usize>,
}

fn one() -> f64 {
    1.0
}

impl MechanismSpec {
    pub fn self_masked(link: Link, phi0: f64, phi1: f64) -> Self {
        let kind = match link {
            Link::Logistic => MechanismKind::SelfMaskedLogistic,
            Link::Probit => MechanismKind::SelfMaskedProbit,
        };
        Self {
            kind,
            phi0,
            phi1,
            prob: 1.0,
            depends_on: Vec::new(),
        }
    }

    pub fn mcar(prob: f64) -> Self {
        Self {
            kind: MechanismKind::Mcar,
            phi0: 0.0,
            phi1: 0.0,
            prob,
            depends_on: Vec::new(),
        }
    }

    pub fn general_mnar(phi0: f64, phi1: f64, depends_on: Vec<usize>) -> Self {
        Self {
            kind: MechanismKind::GeneralMnar,
            phi0,
            phi1,
            prob: 1.0,
            depends_on,
        }
    }

    pub fn link(&self) -> Link {
        match self.kind {
            MechanismKind::SelfMaskedProbit => Link::Probit,
            _ => Link::Logistic,
        }
    }

    /// Checks parameter ranges and, for general MNAR, that at least `r` of the `p`
    /// columns stay outside the dependence set so pivots remain available.
    pub fn validate(&self, p: usize, r: usize) -> Result<()> {
        match self.kind {
            MechanismKind::Mcar => {
                if !(0.0..=1.0).contains(&self.prob) {
                    return Err(Error::InvalidParams(format!(
                        "MCAR observation probability {} outside [0, 1]",
                        self.prob
                    )));
                }
            }
            MechanismKind::GeneralMnar => {
                for &k in &self.depends_on {
                    check_index(k, p)?;
                }
                let mut deps = self.depends_on.clone();
                deps.sort_unstable();
                deps.dedup();
                if p - deps.len() < r {
                    return Err(Error::InvalidParams(format!(
                        "dependence set of size {} leaves fewer than {r} pivot candidates",
                        deps.len()
                    )));
                }
            }
            _ => {}
        }
        if !self.phi0.is_finite() || !self.phi1.is_finite() {
            return Err(Error::InvalidParams("mechanism parameters must be finite".into()));
        }
        Ok(())
    }

    fn observation_probability(&self, y: &DMatrix<f64>, i: usize, j: usize) -> f64 {
        match self.kind {
            MechanismKind::Mcar => self.prob,
            MechanismKind::SelfMaskedLogistic | MechanismKind::SelfMaskedProbit => {
                self.link().apply(self.phi0 + self.phi1 * y[(i, j)])
            }
            MechanismKind::GeneralMnar => {
                let x: f64 = self.depends_on.iter().map(|&k| y[(i, k)]).sum();
                self.link().apply(self.phi0 + self.phi1 * x)
            }
        }
    }

    /// Expected missing rate when the mechanism's input is `N(mean, sd^2)`.
    pub fn expected_missing_rate(&self, mean: f64, sd: f64) -> f64 {
        if self.kind == MechanismKind::Mcar {
            return 1.0 - self.prob;
        }
        1.0 - gaussian_expectation(mean, sd, |x| self.link().apply(self.phi0 + self.phi1 * x))
    }

    /// Solves `phi0` by bisection so that the expected missing rate under an
    /// `N(mean, sd^2)` input equals `target_rate`, keeping `phi1` fixed.
    pub fn calibrate_intercept(&mut self, target_rate: f64, mean: f64, sd: f64) -> Result<()> {
        if self.kind == MechanismKind::Mcar {
            self.prob = 1.0 - target_rate;
            return Ok(());
        }
        if !(0.0 < target_rate && target_rate < 1.0) {
            return Err(Error::InvalidParams(format!(
                "target missing rate {target_rate} outside (0, 1)"
            )));
        }
        let rate_at = |phi0: f64| {
            let trial = MechanismSpec { phi0, ..self.clone() };
            trial.expected_missing_rate(mean, sd)
        };
        // the missing rate decreases in phi0
        let (mut lo, mut hi) = (-1.0, 1.0);
        while rate_at(lo) < target_rate {
            lo *= 2.0;
            if lo < -1e6 {
                return Err(Error::InvalidParams("cannot bracket mechanism intercept".into()));
            }
        }
        while rate_at(hi) > target_rate {
            hi *= 2.0;
            if hi > 1e6 {
                return Err(Error::InvalidParams("cannot bracket mechanism intercept".into()));
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if rate_at(mid) > target_rate {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-12 {
                break;
            }
        }
        self.phi0 = 0.5 * (lo + hi);
        Ok(())
    }

    /// Mean and standard deviation of the mechanism's input for column `col` under `params`.
    pub fn input_law(&self, params: &PpcaParams, col: usize) -> (f64, f64) {
        let sigma = population_covariance(params);
        let cols: Vec<usize> = match self.kind {
            MechanismKind::GeneralMnar => self.depends_on.clone(),
            _ => vec![col],
        };
        let mean: f64 = cols.iter().map(|&k| params.alpha[k]).sum();
        let var: f64 = cols
            .iter()
            .flat_map(|&a| cols.iter().map(move |&b| (a, b)))
            .map(|(a, b)| sigma[(a, b)])
            .sum();
        (mean, var.max(0.0).sqrt())
    }
}

/// `E[f(X)]` for `X ~ N(mean, sd^2)` by composite Simpson quadrature over +-10 sd.
fn gaussian_expectation(mean: f64, sd: f64, f: impl Fn(f64) -> f64) -> f64 {
    if sd <= 0.0 {
        return f(mean);
    }
    const STEPS: usize = 2000;
    let (a, b) = (-10.0, 10.0);
    let h = (b - a) / STEPS as f64;
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let g = |z: f64| f(mean + sd * z) * norm * (-0.5 * z * z).exp();
    let mut acc = g(a) + g(b);
    for k in 1..STEPS {
        let z = a + k as f64 * h;
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * g(z);
    }
    acc * h / 3.0
}

/// Draws the observation mask. Columns with `None` stay fully observed.
///
/// Cells are independent given `Y`; a single seeded stream is consumed column by
/// column, so the result is reproducible for a fixed seed.
pub fn apply_mechanism(
    y: &DMatrix<f64>,
    specs: &[Option<MechanismSpec>],
    seed: u64,
) -> Result<Mask> {
    let (n, p) = y.shape();
    if specs.len() > p {
        return Err(Error::DimensionMismatch(format!(
            "{} mechanisms for {p} columns",
            specs.len()
        )));
    }
    for spec in specs.iter().flatten() {
        if spec.kind == MechanismKind::GeneralMnar {
            for &k in &spec.depends_on {
                check_index(k, p)?;
            }
        }
        if spec.kind == MechanismKind::Mcar && !(0.0..=1.0).contains(&spec.prob) {
            return Err(Error::InvalidParams(format!(
                "MCAR observation probability {} outside [0, 1]",
                spec.prob
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = Mask::all_observed(n, p);
    for (j, spec) in specs.iter().enumerate() {
        let Some(spec) = spec else { continue };
        for i in 0..n {
            let prob = spec.observation_probability(y, i, j);
            let u: f64 = rng.random();
            mask.set(i, j, u < prob);
        }
    }
    Ok(mask)
}

/// Observed data with its mask and the variable roles used by the estimators.
///
/// Masked cells of `y` hold NaN; estimators consult `omega` and never read them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DMatrix<f64>,
    omega: Mask,
    mnar_vars: Vec<usize>,
    pivot_vars: Vec<usize>,
}

impl Dataset {
    /// Builds a dataset from complete values and a mask; masked cells are overwritten with NaN.
    pub fn new(
        mut y: DMatrix<f64>,
        omega: Mask,
        mnar_vars: Vec<usize>,
        pivot_vars: Vec<usize>,
    ) -> Result<Self> {
        if y.shape() != (omega.nrows(), omega.ncols()) {
            return Err(Error::DimensionMismatch(format!(
                "data is {:?} but mask is {}x{}",
                y.shape(),
                omega.nrows(),
                omega.ncols()
            )));
        }
        for i in 0..y.nrows() {
            for j in 0..y.ncols() {
                if !omega.is_observed(i, j) {
                    y[(i, j)] = f64::NAN;
                } else if !y[(i, j)].is_finite() {
                    return Err(Error::InvalidParams(format!(
                        "observed cell ({i}, {j}) is not finite"
                    )));
                }
            }
        }
        let mut mnar_vars = mnar_vars;
        let mut pivot_vars = pivot_vars;
        mnar_vars.sort_unstable();
        mnar_vars.dedup();
        pivot_vars.sort_unstable();
        pivot_vars.dedup();
        let p = y.ncols();
        for &k in mnar_vars.iter().chain(&pivot_vars) {
            check_index(k, p)?;
        }
        if let Some(k) = mnar_vars.iter().find(|k| pivot_vars.contains(k)) {
            return Err(Error::InvalidRoles(format!(
                "variable {k} is both MNAR and pivot"
            )));
        }
        Ok(Self {
            y,
            omega,
            mnar_vars,
            pivot_vars,
        })
    }

    /// Builds a dataset whose mask is read from the NaN cells of `y`.
    pub fn from_observed(y: DMatrix<f64>, mnar_vars: Vec<usize>, pivot_vars: Vec<usize>) -> Result<Self> {
        let omega = Mask::from_fn(y.nrows(), y.ncols(), |i, j| !y[(i, j)].is_nan());
        Self::new(y, omega, mnar_vars, pivot_vars)
    }

    /// Same data and mask with different variable roles.
    pub fn with_roles(&self, mnar_vars: Vec<usize>, pivot_vars: Vec<usize>) -> Result<Self> {
        Self::new(self.y.clone(), self.omega.clone(), mnar_vars, pivot_vars)
    }

    pub fn nrows(&self) -> usize {
        self.y.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.y.ncols()
    }

    pub fn omega(&self) -> &Mask {
        &self.omega
    }

    pub fn mnar_vars(&self) -> &[usize] {
        &self.mnar_vars
    }

    pub fn pivot_vars(&self) -> &[usize] {
        &self.pivot_vars
    }

    /// Raw storage, with NaN in masked cells.
    pub fn values(&self) -> &DMatrix<f64> {
        &self.y
    }

    #[inline]
    pub fn is_observed(&self, i: usize, j: usize) -> bool {
        self.omega.is_observed(i, j)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.omega.is_observed(i, j).then(|| self.y[(i, j)])
    }

    /// Value of a cell known to be observed.
    #[inline]
    pub(crate) fn observed(&self, i: usize, j: usize) -> f64 {
        debug_assert!(self.omega.is_observed(i, j), "read of masked cell ({i}, {j})");
        self.y[(i, j)]
    }

    /// Checks the role constraints needed for estimation at rank `r`.
    pub fn validate_roles(&self, r: usize) -> Result<()> {
        let p = self.ncols();
        if r == 0 || r >= p {
            return Err(Error::RankOutOfRange { r, p });
        }
        if self.pivot_vars.len() < r {
            return Err(Error::InvalidRoles(format!(
                "{} pivot candidates for rank {r}",
                self.pivot_vars.len()
            )));
        }
        if self.mnar_vars.len() >= p - r {
            return Err(Error::InvalidRoles(format!(
                "{} MNAR variables but at most {} allowed for p = {p}, r = {r}",
                self.mnar_vars.len(),
                p - r - 1
            )));
        }
        Ok(())
    }

    pub fn is_mnar(&self, k: usize) -> bool {
        self.mnar_vars.binary_search(&k).is_ok()
    }

    pub fn is_pivot(&self, k: usize) -> bool {
        self.pivot_vars.binary_search(&k).is_ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn toy_params() -> PpcaParams {
        PpcaParams::new(
            DVector::zeros(3),
            DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]),
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn degenerate_sample_is_constant() {
        let params = PpcaParams {
            alpha: DVector::from_element(4, 1.0),
            loadings: DMatrix::zeros(2, 4),
            sigma2: 0.0,
        };
        let y = sample_ppca(&params, 5, 3).unwrap();
        assert_eq!(y, DMatrix::from_element(5, 4, 1.0));
    }

    #[test]
    fn sample_is_seed_deterministic() {
        let params = PpcaParams::random(6, 2, 0.1, 1).unwrap();
        assert_eq!(
            sample_ppca(&params, 50, 9).unwrap(),
            sample_ppca(&params, 50, 9).unwrap()
        );
        assert_ne!(
            sample_ppca(&params, 50, 9).unwrap(),
            sample_ppca(&params, 50, 10).unwrap()
        );
    }

    #[test]
    fn zero_size_sample_rejected() {
        assert!(sample_ppca(&toy_params(), 0, 1).is_err());
    }

    #[test]
    fn population_covariance_edge_cases() {
        let params = PpcaParams {
            alpha: DVector::zeros(3),
            loadings: DMatrix::zeros(1, 3),
            sigma2: 1.0,
        };
        assert_eq!(population_covariance(&params), DMatrix::identity(3, 3));
        // r = p is outside the model's invariant but the formula still holds
        let square = PpcaParams {
            alpha: DVector::zeros(2),
            loadings: DMatrix::identity(2, 2),
            sigma2: 0.0,
        };
        assert_eq!(population_covariance(&square), DMatrix::identity(2, 2));
    }

    #[test]
    fn hand_solved_structural_coefficients() {
        // Y1 = W1, Y2 = W2, Y3 = W1 + W2, hence Y2 = -Y1 + Y3
        let coef = population_cc_coefficients(&toy_params(), 1, &[0, 2]).unwrap();
        assert_relative_eq!(coef.coefficients[0], -1.0, epsilon = 1e-14);
        assert_relative_eq!(coef.coefficients[1], 1.0, epsilon = 1e-14);
        assert_relative_eq!(coef.intercept, 0.0, epsilon = 1e-14);
    }

    #[test]
    fn singular_loading_block_rejected() {
        let params = PpcaParams::new(
            DVector::zeros(3),
            DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.0, 1.0, 2.0, 1.0]),
            0.0,
        )
        .unwrap();
        assert!(matches!(
            population_cc_coefficients(&params, 2, &[0, 1]),
            Err(Error::SingularSubmatrix { .. })
        ));
    }

    #[test]
    fn mcar_certain_observation() {
        let y = DMatrix::from_element(20, 3, 0.5);
        let specs = vec![Some(MechanismSpec::mcar(1.0)); 3];
        let mask = apply_mechanism(&y, &specs, 4).unwrap();
        assert_eq!(mask.missing_count(), 0);
    }

    #[test]
    fn general_mnar_out_of_range_dependence() {
        let y = DMatrix::from_element(5, 3, 0.5);
        let specs = vec![Some(MechanismSpec::general_mnar(0.0, 1.0, vec![0, 7]))];
        assert!(matches!(
            apply_mechanism(&y, &specs, 1),
            Err(Error::IndexOutOfRange { index: 7, .. })
        ));
    }

    #[test]
    fn general_mnar_must_leave_pivots() {
        let spec = MechanismSpec::general_mnar(0.0, 1.0, vec![0, 1, 2]);
        assert!(spec.validate(4, 2).is_err());
        assert!(spec.validate(5, 2).is_ok());
    }

    #[test]
    fn calibration_hits_target_rate() {
        let mut spec = MechanismSpec::self_masked(Link::Logistic, 0.0, -3.0);
        spec.calibrate_intercept(0.3, 1.2, 0.7).unwrap();
        assert_relative_eq!(spec.expected_missing_rate(1.2, 0.7), 0.3, epsilon = 1e-9);

        let mut probit = MechanismSpec::self_masked(Link::Probit, 0.0, -2.0);
        probit.calibrate_intercept(0.5, 0.0, 1.0).unwrap();
        // symmetric input and link: the median-centred intercept is zero
        assert_relative_eq!(probit.phi0, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn roles_validation() {
        let y = DMatrix::from_element(4, 5, 1.0);
        let mask = Mask::all_observed(4, 5);
        assert!(Dataset::new(y.clone(), mask.clone(), vec![0, 1], vec![1, 3]).is_err());
        assert!(Dataset::new(y.clone(), mask.clone(), vec![9], vec![]).is_err());
        let ds = Dataset::new(y, mask, vec![0, 1, 2], vec![3, 4]).unwrap();
        // |M| must stay below p - r
        assert!(ds.validate_roles(2).is_err());
        assert!(ds.validate_roles(1).is_ok());
    }

    #[test]
    fn masked_cells_hold_nan() {
        let y = DMatrix::from_element(2, 2, 3.0);
        let mut mask = Mask::all_observed(2, 2);
        mask.set(1, 0, false);
        let ds = Dataset::new(y, mask, vec![], vec![]).unwrap();
        assert!(ds.values()[(1, 0)].is_nan());
        assert_eq!(ds.get(1, 0), None);
        assert_eq!(ds.get(0, 0), Some(3.0));
    }
}
