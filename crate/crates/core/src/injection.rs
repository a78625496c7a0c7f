//! Fixed projection of the latent into model width and the three ways of
//! turning it into per-position biases.
//!
//! With `Z ∈ R^{(d'/k)×k}` and `W_z ∈ R^{d×(d'/k)}`, the expert matrix
//! `M = W_z Z` has one column per expert. Then per position `t`:
//!
//! * none (`k = 1`): `z' = M[:,0]`
//! * attention: `z' = M softmax(Mᵀ h_prev)`
//! * interleave: `z' = M[:, t mod k]`
//!
//! `W_z` stacks an identity block over rows that are softmax-normalized
//! Gaussian mixtures of the free coordinates, then shuffles the rows. It is
//! never trained.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::TensorFile;
use crate::linalg::{axpy, dot, softmax_in_place, Real};
use crate::model::{BiasPlan, ModelConfig, QueryMode, Site, SiteAdjoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    None,
    Attention,
    Interleave,
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Mechanism::None => "none",
            Mechanism::Attention => "attention",
            Mechanism::Interleave => "interleave",
        })
    }
}

impl FromStr for Mechanism {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Mechanism::None),
            "attention" => Ok(Mechanism::Attention),
            "interleave" => Ok(Mechanism::Interleave),
            other => Err(Error::Config(format!("unknown mechanism {other:?}"))),
        }
    }
}

/// Subset of {embed, layers, head}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Locations {
    pub embed: bool,
    pub layers: bool,
    pub head: bool,
}

impl Locations {
    pub const ALL: Locations = Locations {
        embed: true,
        layers: true,
        head: true,
    };
    pub const EMBED: Locations = Locations {
        embed: true,
        layers: false,
        head: false,
    };
    pub const HEAD: Locations = Locations {
        embed: false,
        layers: false,
        head: true,
    };

    pub fn is_empty(&self) -> bool {
        !(self.embed || self.layers || self.head)
    }

    pub fn contains(&self, site: Site) -> bool {
        match site {
            Site::Embed => self.embed,
            Site::Layer(_) => self.layers,
            Site::Head => self.head,
        }
    }
}

impl fmt::Display for Locations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Locations::ALL {
            return f.write_str("all");
        }
        let mut parts = Vec::new();
        if self.embed {
            parts.push("embed");
        }
        if self.layers {
            parts.push("layers");
        }
        if self.head {
            parts.push("head");
        }
        f.write_str(&parts.join("+"))
    }
}

impl FromStr for Locations {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut loc = Locations {
            embed: false,
            layers: false,
            head: false,
        };
        for part in s.split(['+', ',']).map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "all" => loc = Locations::ALL,
                "embed" => loc.embed = true,
                "layers" => loc.layers = true,
                "head" => loc.head = true,
                other => return Err(Error::Config(format!("unknown location {other:?}"))),
            }
        }
        if loc.is_empty() {
            return Err(Error::Config("no injection location selected".into()));
        }
        Ok(loc)
    }
}

impl TryFrom<String> for Locations {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Locations> for String {
    fn from(l: Locations) -> Self {
        l.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionSharing {
    /// One `W_z` for every active site.
    #[default]
    Shared,
    /// An independently seeded `W_z` per site.
    PerSite,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct InjectionConfig {
    pub locations: Locations,
    pub mechanism: Mechanism,
    pub k: usize,
    pub d_prime: usize,
    pub projection_seed: u64,
    pub sharing: ProjectionSharing,
    pub query_mode: QueryMode,
}

impl Default for InjectionConfig {
    fn default() -> Self {
        Self::new(Locations::ALL, Mechanism::None, 1, 64)
    }
}

impl InjectionConfig {
    pub fn new(locations: Locations, mechanism: Mechanism, k: usize, d_prime: usize) -> Self {
        Self {
            locations,
            mechanism,
            k,
            d_prime,
            projection_seed: 0,
            sharing: ProjectionSharing::Shared,
            query_mode: QueryMode::PreviousToken,
        }
    }

    pub fn cols(&self) -> usize {
        self.d_prime / self.k
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.locations.is_empty() {
            return Err(Error::Config("no injection location selected".into()));
        }
        if self.k == 0 || self.d_prime == 0 {
            return Err(Error::Config("k and d' must be positive".into()));
        }
        match self.mechanism {
            Mechanism::None if self.k != 1 => {
                return Err(Error::Config("mechanism none requires k = 1".into()))
            }
            Mechanism::Attention | Mechanism::Interleave if self.k < 2 => {
                return Err(Error::Config(format!(
                    "mechanism {} requires k >= 2",
                    self.mechanism
                )))
            }
            _ => {}
        }
        if self.d_prime % self.k != 0 {
            return Err(Error::Config(format!(
                "k={} does not divide d'={}",
                self.k, self.d_prime
            )));
        }
        if self.d_prime > d {
            return Err(Error::Config(format!("d'={} exceeds d={d}", self.d_prime)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix<T> {
    pub d: usize,
    pub cols: usize,
    /// d × cols, row-major.
    pub data: Vec<T>,
    /// Final row `r` is pre-permutation row `permutation[r]`.
    pub permutation: Vec<usize>,
    pub seed: u64,
}

impl<T: Real> ProjectionMatrix<T> {
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `W_z v` for `v ∈ R^cols`.
    pub fn apply(&self, v: &[T]) -> Vec<T> {
        (0..self.d).map(|r| dot(self.row(r), v)).collect()
    }

    pub fn to_tensor_file(&self) -> TensorFile<T> {
        let mut f = TensorFile::new(
            "projection",
            serde_json::json!({ "seed": self.seed, "permutation": self.permutation }),
        );
        f.push("w_z", vec![self.d, self.cols], self.data.clone());
        f
    }
}

/// `W_z = P [I; W_mixᵀ]` where each column of `W_mix` is a softmax of i.i.d.
/// standard normals and `P` is a seeded row shuffle.
pub fn build_projection<T: Real>(d: usize, cols: usize, seed: u64) -> Result<ProjectionMatrix<T>> {
    if cols == 0 || cols > d {
        return Err(Error::Config(format!("d'/k = {cols} must lie in 1..={d}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pre = vec![0.0f64; d * cols];
    for i in 0..cols {
        pre[i * cols + i] = 1.0;
    }
    for r in cols..d {
        let row = &mut pre[r * cols..(r + 1) * cols];
        for v in row.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        softmax_in_place(row);
    }
    let mut permutation: Vec<usize> = (0..d).collect();
    permutation.shuffle(&mut rng);
    let mut data = vec![T::zero(); d * cols];
    for (r, &src) in permutation.iter().enumerate() {
        for c in 0..cols {
            data[r * cols + c] = T::lit(pre[src * cols + c]);
        }
    }
    Ok(ProjectionMatrix {
        d,
        cols,
        data,
        permutation,
        seed,
    })
}

/// The trainable representation: `Z ∈ R^{(d'/k)×k}`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState<T> {
    pub z: Vec<T>,
    pub d_prime: usize,
    pub k: usize,
}

impl<T: Real> LatentState<T> {
    pub fn new(z: Vec<T>, d_prime: usize, k: usize) -> Result<Self> {
        if k == 0 || d_prime % k != 0 {
            return Err(Error::Config(format!("k={k} does not divide d'={d_prime}")));
        }
        if z.len() != d_prime {
            return Err(Error::Shape(format!(
                "latent has {} entries, expected {d_prime}",
                z.len()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("latent contains non-finite entries".into()));
        }
        Ok(Self { z, d_prime, k })
    }

    pub fn zeros(d_prime: usize, k: usize) -> Result<Self> {
        Self::new(vec![T::zero(); d_prime], d_prime, k)
    }

    pub fn cols(&self) -> usize {
        self.d_prime / self.k
    }

    /// Expert `j` as a vector in `R^{d'/k}`.
    pub fn expert(&self, j: usize) -> Vec<T> {
        (0..self.cols()).map(|c| self.z[c * self.k + j]).collect()
    }

    pub fn lerp(a: &Self, b: &Self, lambda: f64) -> Result<Self> {
        if a.d_prime != b.d_prime || a.k != b.k {
            return Err(Error::Shape("latents differ in shape".into()));
        }
        let l = T::lit(lambda);
        let z =
            a.z.iter()
                .zip(&b.z)
                .map(|(&x, &y)| (T::one() - l) * x + l * y)
                .collect();
        Self::new(z, a.d_prime, a.k)
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.z.iter().map(|v| v.as_f64()).collect()
    }
}

/// Expert columns of `W_z Z`, each of length d.
fn expert_columns<T: Real>(
    p: &ProjectionMatrix<T>,
    latent: &LatentState<T>,
) -> Result<Vec<Vec<T>>> {
    if latent.cols() != p.cols {
        return Err(Error::Shape(format!(
            "latent has {} rows, projection expects {}",
            latent.cols(),
            p.cols
        )));
    }
    Ok((0..latent.k).map(|j| p.apply(&latent.expert(j))).collect())
}

fn attend<T: Real>(columns: &[Vec<T>], h_prev: &[T], weights: &mut [T], out: &mut [T]) {
    for (w, c) in weights.iter_mut().zip(columns) {
        *w = dot(h_prev, c);
    }
    softmax_in_place(weights);
    out.iter_mut().for_each(|v| *v = T::zero());
    for (&w, c) in weights.iter().zip(columns) {
        axpy(w, c, out);
    }
}

/// No ensembling: `z' = W_z z`, the same at every position.
pub fn bias_none<T: Real>(p: &ProjectionMatrix<T>, latent: &LatentState<T>) -> Result<Vec<T>> {
    if latent.k != 1 {
        return Err(Error::Config(format!(
            "bias_none requires k = 1, got {}",
            latent.k
        )));
    }
    Ok(expert_columns(p, latent)?.remove(0))
}

/// Attention ensembling; also returns the expert weights.
pub fn bias_attention_weights<T: Real>(
    p: &ProjectionMatrix<T>,
    latent: &LatentState<T>,
    h_prev: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    if latent.k < 2 {
        return Err(Error::Config(format!(
            "attention ensembling requires k >= 2, got {}",
            latent.k
        )));
    }
    if h_prev.len() != p.d {
        return Err(Error::Shape(format!(
            "h_prev has length {}, expected {}",
            h_prev.len(),
            p.d
        )));
    }
    let cols = expert_columns(p, latent)?;
    let mut weights = vec![T::zero(); latent.k];
    let mut out = vec![T::zero(); p.d];
    attend(&cols, h_prev, &mut weights, &mut out);
    Ok((out, weights))
}

pub fn bias_attention<T: Real>(
    p: &ProjectionMatrix<T>,
    latent: &LatentState<T>,
    h_prev: &[T],
) -> Result<Vec<T>> {
    Ok(bias_attention_weights(p, latent, h_prev)?.0)
}

/// Interleaved ensembling at 1-based position `t`: expert `(t-1) mod k`.
pub fn bias_interleave<T: Real>(
    p: &ProjectionMatrix<T>,
    latent: &LatentState<T>,
    t: usize,
) -> Result<Vec<T>> {
    if latent.k < 2 {
        return Err(Error::Config(format!(
            "interleaved ensembling requires k >= 2, got {}",
            latent.k
        )));
    }
    if t == 0 {
        return Err(Error::Config("positions are 1-based".into()));
    }
    Ok(expert_columns(p, latent)?.swap_remove((t - 1) % latent.k))
}

/// An injection configuration with its projection matrices built.
#[derive(Debug, Clone)]
pub struct InjectionSpec<T> {
    pub config: InjectionConfig,
    pub d: usize,
    n_layers: usize,
    projections: Vec<ProjectionMatrix<T>>,
}

impl<T: Real> InjectionSpec<T> {
    pub fn build(config: InjectionConfig, model: &ModelConfig) -> Result<Self> {
        config.validate(model.d)?;
        let n_proj = match config.sharing {
            ProjectionSharing::Shared => 1,
            ProjectionSharing::PerSite => model.n_layers + 2,
        };
        let projections = (0..n_proj)
            .map(|i| {
                let seed = config
                    .projection_seed
                    .wrapping_add((i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                build_projection(model.d, config.cols(), seed)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            config,
            d: model.d,
            n_layers: model.n_layers,
            projections,
        })
    }

    pub fn projections(&self) -> &[ProjectionMatrix<T>] {
        &self.projections
    }

    fn projection_index(&self, site: Site) -> usize {
        match self.config.sharing {
            ProjectionSharing::Shared => 0,
            ProjectionSharing::PerSite => match site {
                Site::Embed => 0,
                Site::Layer(l) => 1 + l,
                Site::Head => 1 + self.n_layers,
            },
        }
    }

    pub fn active_sites(&self) -> Vec<Site> {
        let mut out = Vec::new();
        if self.config.locations.embed {
            out.push(Site::Embed);
        }
        if self.config.locations.layers {
            out.extend((0..self.n_layers).map(Site::Layer));
        }
        if self.config.locations.head {
            out.push(Site::Head);
        }
        out
    }

    pub fn check_latent(&self, latent: &LatentState<T>) -> Result<()> {
        if latent.d_prime != self.config.d_prime || latent.k != self.config.k {
            return Err(Error::Shape(format!(
                "latent (d'={}, k={}) does not match spec (d'={}, k={})",
                latent.d_prime, latent.k, self.config.d_prime, self.config.k
            )));
        }
        Ok(())
    }

    pub fn plan(&self, latent: &LatentState<T>) -> Result<LatentPlan<'_, T>> {
        LatentPlan::new(self, latent)
    }
}

/// `BiasPlan` backed by a latent; also collects `∂loss/∂Z` on the way back.
pub struct LatentPlan<'a, T> {
    spec: &'a InjectionSpec<T>,
    cols: usize,
    z: Vec<T>,
    /// Per projection: k expert columns of length d.
    experts: Vec<Vec<Vec<T>>>,
    /// Per projection: adjoint of the expert columns.
    d_experts: Vec<Vec<Vec<T>>>,
}

impl<'a, T: Real> LatentPlan<'a, T> {
    pub fn new(spec: &'a InjectionSpec<T>, latent: &LatentState<T>) -> Result<Self> {
        spec.check_latent(latent)?;
        let experts: Vec<Vec<Vec<T>>> = spec
            .projections
            .iter()
            .map(|p| expert_columns(p, latent))
            .collect::<Result<_>>()?;
        let d_experts = experts
            .iter()
            .map(|e| e.iter().map(|c| vec![T::zero(); c.len()]).collect())
            .collect();
        Ok(Self {
            spec,
            cols: latent.cols(),
            z: latent.z.clone(),
            experts,
            d_experts,
        })
    }

    /// `∂loss/∂Z` from the accumulated expert adjoints: `W_zᵀ dM` per projection.
    pub fn latent_grad(&self) -> Vec<T> {
        let k = self.spec.config.k;
        let mut g = vec![T::zero(); self.z.len()];
        for (p, dm) in self.spec.projections.iter().zip(&self.d_experts) {
            for (j, col) in dm.iter().enumerate() {
                for (r, &dv) in col.iter().enumerate() {
                    if dv == T::zero() {
                        continue;
                    }
                    let row = p.row(r);
                    for c in 0..self.cols {
                        g[c * k + j] += row[c] * dv;
                    }
                }
            }
        }
        g
    }
}

impl<T: Real> BiasPlan<T> for LatentPlan<'_, T> {
    fn is_active(&self, site: Site) -> bool {
        self.spec.config.locations.contains(site)
    }

    fn query_mode(&self) -> QueryMode {
        self.spec.config.query_mode
    }

    fn bias(&self, site: Site, position: usize, h_prev: &[T], out: &mut [T]) {
        let experts = &self.experts[self.spec.projection_index(site)];
        match self.spec.config.mechanism {
            Mechanism::None => out.copy_from_slice(&experts[0]),
            Mechanism::Interleave => out.copy_from_slice(&experts[position % experts.len()]),
            Mechanism::Attention => {
                let mut w = vec![T::zero(); experts.len()];
                attend(experts, h_prev, &mut w, out);
            }
        }
    }
}

impl<T: Real> SiteAdjoint<T> for LatentPlan<'_, T> {
    fn site_backward(&mut self, site: Site, queries: &[T], d_bias: &[T], d_queries: &mut [T]) {
        let d = self.spec.d;
        let idx = self.spec.projection_index(site);
        let len = d_bias.len() / d;
        let k = self.experts[idx].len();
        match self.spec.config.mechanism {
            Mechanism::None => {
                let dm = &mut self.d_experts[idx][0];
                for t in 0..len {
                    axpy(T::one(), &d_bias[t * d..(t + 1) * d], dm);
                }
            }
            Mechanism::Interleave => {
                for t in 0..len {
                    axpy(
                        T::one(),
                        &d_bias[t * d..(t + 1) * d],
                        &mut self.d_experts[idx][t % k],
                    );
                }
            }
            Mechanism::Attention => {
                let experts = &self.experts[idx];
                let dm = &mut self.d_experts[idx];
                let mut w = vec![T::zero(); k];
                let mut scratch = vec![T::zero(); d];
                let mut da = vec![T::zero(); k];
                for t in 0..len {
                    let q = &queries[t * d..(t + 1) * d];
                    let db = &d_bias[t * d..(t + 1) * d];
                    attend(experts, q, &mut w, &mut scratch);
                    let mut mean = T::zero();
                    for j in 0..k {
                        da[j] = dot(&experts[j], db);
                        mean += w[j] * da[j];
                    }
                    let dq = &mut d_queries[t * d..(t + 1) * d];
                    for j in 0..k {
                        let ds = w[j] * (da[j] - mean);
                        axpy(w[j], db, &mut dm[j]);
                        axpy(ds, q, &mut dm[j]);
                        axpy(ds, &experts[j], dq);
                    }
                }
            }
        }
    }
}
