//! Simultaneous confidence bands for many means under martingale-difference
//! noise, with a Gaussian multiplier bootstrap critical value.
//!
//! For a panel `r_{kj}` (`k` time, `j` coordinate) the band is
//! `μ̂_j ± ĉv(δ) σ̂_j / √n`, where `ĉv(δ)` is the conditional `(1-δ)`
//! quantile of `max_j |n^{-1/2} Σ_k g_k Ẑ_{kj}|`.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::penalties::{check_delta, BootCfg, MIN_REPLICATES};
use crate::rng;

/// An `n × d` panel of observations, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Panel {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl Panel {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n < 2 || d < 1 {
            return Err(Error::OutOfDomain(format!("panel needs n >= 2 and d >= 1 (got {n} x {d})")));
        }
        if data.len() != n * d {
            return Err(Error::OutOfDomain(format!("expected {} entries, got {}", n * d, data.len())));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::OutOfDomain("panel has non-finite entries".into()));
        }
        Ok(Self { n, d, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::OutOfDomain("ragged panel rows".into()));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.data[k * self.d + j]
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.d..(k + 1) * self.d]
    }
}

/// Column means, `1/n` standard deviations and the studentized panel.
#[derive(Clone, Debug, PartialEq)]
pub struct Studentized {
    pub mu_hat: Vec<f64>,
    pub sigma_hat: Vec<f64>,
    /// `n × d`, row-major.
    pub z: Vec<f64>,
}

pub fn studentize(panel: &Panel) -> Result<Studentized> {
    let (n, d) = (panel.n, panel.d);
    let mut mu = vec![0.0; d];
    for k in 0..n {
        mu.iter_mut().zip(panel.row(k)).for_each(|(m, x)| *m += x);
    }
    mu.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for k in 0..n {
        for (j, x) in panel.row(k).iter().enumerate() {
            var[j] += (x - mu[j]).powi(2);
        }
    }
    let sigma: Vec<f64> = var.iter().map(|v| (v / n as f64).sqrt()).collect();
    if let Some(j) = sigma.iter().position(|&s| !(s > 0.0)) {
        return Err(Error::DegenerateVariance(j));
    }
    let z = (0..n * d)
        .map(|i| (panel.data[i] - mu[i % d]) / sigma[i % d])
        .collect();
    Ok(Studentized {
        mu_hat: mu,
        sigma_hat: sigma,
        z,
    })
}

/// `max_j |n^{-1/2} Σ_k g_k z_{kj}|` for one multiplier vector.
fn replicate(z: &[f64], n: usize, d: usize, g: &[f64], acc: &mut [f64]) -> f64 {
    acc.iter_mut().for_each(|a| *a = 0.0);
    for (k, &gk) in g.iter().enumerate().take(n) {
        acc.iter_mut()
            .zip(&z[k * d..(k + 1) * d])
            .for_each(|(a, x)| *a += gk * x);
    }
    let scale = (n as f64).sqrt();
    acc.iter().map(|a| a.abs() / scale).fold(0.0, f64::max)
}

/// Bootstrap replicates of the max statistic; replicate `r` uses stream `r`.
pub fn band_replicates(z: &[f64], n: usize, d: usize, replicates: usize, seed: u64) -> Vec<f64> {
    (0..replicates)
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], vec![0.0; d]),
            |(g, acc), r| {
                let mut rng = rng::stream(seed, r as u64);
                g.iter_mut().for_each(|x| *x = StandardNormal.sample(&mut rng));
                replicate(z, n, d, g, acc)
            },
        )
        .collect()
}

/// `ĉv(δ)`: the `⌈(1-δ)B⌉`-th smallest of `B` replicates.
pub fn band_cv(z: &[f64], n: usize, d: usize, delta: f64, replicates: usize, seed: u64) -> Result<f64> {
    check_delta(delta)?;
    if replicates < MIN_REPLICATES {
        return Err(Error::Config(format!("need at least {MIN_REPLICATES} replicates (got {replicates})")));
    }
    if z.len() != n * d {
        return Err(Error::OutOfDomain(format!("expected {} entries, got {}", n * d, z.len())));
    }
    let mut reps = band_replicates(z, n, d, replicates, seed);
    Ok(rng::upper_quantile(&mut reps, delta))
}

/// Simultaneous bands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandResult {
    pub mu_hat: Vec<f64>,
    pub sigma_hat: Vec<f64>,
    pub cv_hat: f64,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BandResult {
    /// Assembles bands from estimates and a critical value.
    pub fn from_parts(mu_hat: Vec<f64>, sigma_hat: Vec<f64>, cv_hat: f64, n: usize) -> Self {
        let half: Vec<f64> = sigma_hat.iter().map(|s| cv_hat * s / (n as f64).sqrt()).collect();
        let lower = mu_hat.iter().zip(&half).map(|(m, h)| m - h).collect();
        let upper = mu_hat.iter().zip(&half).map(|(m, h)| m + h).collect();
        Self {
            mu_hat,
            sigma_hat,
            cv_hat,
            lower,
            upper,
        }
    }

    /// Whether every `mu[j]` lies in its band.
    pub fn covers(&self, mu: &[f64]) -> bool {
        mu.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(m, (lo, hi))| lo <= m && m <= hi)
    }
}

/// Bands at level `cfg.delta` from `cfg.replicates` replicates seeded by
/// `cfg.seed`. The tuning fields of `cfg` are not used.
pub fn bands(panel: &Panel, cfg: &BootCfg) -> Result<BandResult> {
    cfg.validate()?;
    let st = studentize(panel)?;
    let cv = band_cv(&st.z, panel.n, panel.d, cfg.delta, cfg.replicates, cfg.seed)?;
    Ok(BandResult::from_parts(st.mu_hat, st.sigma_hat, cv, panel.n))
}

/// Martingale-difference panel design: `r_{kj} = μ_j + s_j h_{kj} e_{kj}`.
///
/// `e_k` is Gaussian with equicorrelation `rho` across coordinates. The
/// conditional scale `h_{kj} = √(0.5 + 0.5 y_{k-1,j}²)` is driven by a latent
/// stationary AR(1) process `y_{kj} = φ y_{k-1,j} + √(1-φ²) u_{kj}` with its
/// own Gaussian innovations, so `E h² = 1` and the noise is a martingale
/// difference with time-varying conditional variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdsDesign {
    pub phi: f64,
    pub rho: f64,
    pub mu: Vec<f64>,
    pub scale: Vec<f64>,
}

impl MdsDesign {
    /// `d` coordinates with means `j/d` and scales between 0.5 and 2.
    pub fn standard(d: usize) -> Self {
        Self {
            phi: 0.5,
            rho: 0.3,
            mu: (0..d).map(|j| j as f64 / d as f64).collect(),
            scale: (0..d).map(|j| 0.5 + 1.5 * j as f64 / d.max(2).saturating_sub(1) as f64).collect(),
        }
    }

    pub fn d(&self) -> usize {
        self.mu.len()
    }

    /// Simulates an `n × d` panel.
    pub fn simulate(&self, n: usize, seed: u64) -> Result<Panel> {
        let d = self.d();
        let mut rng = rng::stream(seed, 0);
        let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
        let innov = (1.0 - self.phi * self.phi).sqrt();
        // start the latent process in its stationary law
        let mut y: Vec<f64> = (0..d).map(|_| draw()).collect();
        let (a, b) = (self.rho.sqrt(), (1.0 - self.rho).sqrt());
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            let common = draw();
            for ((yj, mu), scale) in y.iter_mut().zip(&self.mu).zip(&self.scale) {
                let h = (0.5 + 0.5 * *yj * *yj).sqrt();
                let e = a * common + b * draw();
                data.push(mu + scale * h * e);
                *yj = self.phi * *yj + innov * draw();
            }
        }
        Panel::new(n, d, data)
    }
}
