use super::Population;
use crate::error::{domain, Result};

/// First-moment consistency required between the classical part, the condensed
/// fraction and the declared total wealth.
const MOMENT_TOLERANCE: f64 = 1e-9;

/// Empirical wealths, sorted ascending, with prefix sums of `x` and `x^2 / 2`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    sorted: Vec<f64>,
    pub(crate) prefix_wealth: Vec<f64>,
    prefix_half_sq: Vec<f64>,
}

impl SampleSet {
    fn new(mut samples: Vec<f64>) -> Result<Self> {
        if let Some(w) = samples.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return domain(format!(
                "sample wealth {w} is not a finite nonnegative number"
            ));
        }
        samples.sort_by(f64::total_cmp);
        let mut prefix_wealth = Vec::with_capacity(samples.len() + 1);
        let mut prefix_half_sq = Vec::with_capacity(samples.len() + 1);
        let (mut s1, mut s2) = (0.0, 0.0);
        prefix_wealth.push(0.0);
        prefix_half_sq.push(0.0);
        for &x in &samples {
            s1 += x;
            s2 += 0.5 * x * x;
            prefix_wealth.push(s1);
            prefix_half_sq.push(s2);
        }
        Ok(SampleSet {
            sorted: samples,
            prefix_wealth,
            prefix_half_sq,
        })
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    fn wealth(&self) -> f64 {
        *self.prefix_wealth.last().unwrap()
    }
}

/// Piecewise-uniform density on bins; all partial integrals are exact for that shape.
#[derive(Clone, Debug, PartialEq)]
pub struct GridDensity {
    edges: Vec<f64>,
    densities: Vec<f64>,
    pub(crate) cum_agents: Vec<f64>,
    pub(crate) cum_wealth: Vec<f64>,
    cum_half_sq: Vec<f64>,
}

impl GridDensity {
    fn new(edges: Vec<f64>, densities: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return domain("a grid needs at least one bin");
        }
        if densities.len() + 1 != edges.len() {
            return domain(format!(
                "{} edges cannot hold {} densities",
                edges.len(),
                densities.len()
            ));
        }
        if !(edges[0] >= 0.0) || edges.windows(2).any(|e| !(e[1] > e[0])) {
            return domain("grid edges must start at a nonnegative wealth and increase strictly");
        }
        if let Some(p) = densities.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return domain(format!("density {p} is not a finite nonnegative number"));
        }
        let n = densities.len();
        let mut cum_agents = Vec::with_capacity(n + 1);
        let mut cum_wealth = Vec::with_capacity(n + 1);
        let mut cum_half_sq = Vec::with_capacity(n + 1);
        let (mut a, mut w, mut b) = (0.0, 0.0, 0.0);
        cum_agents.push(a);
        cum_wealth.push(w);
        cum_half_sq.push(b);
        for (i, &p) in densities.iter().enumerate() {
            let (lo, hi) = (edges[i], edges[i + 1]);
            a += p * (hi - lo);
            w += p * 0.5 * (hi * hi - lo * lo);
            b += p * (hi * hi * hi - lo * lo * lo) / 6.0;
            cum_agents.push(a);
            cum_wealth.push(w);
            cum_half_sq.push(b);
        }
        Ok(GridDensity {
            edges,
            densities,
            cum_agents,
            cum_wealth,
            cum_half_sq,
        })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    fn agents(&self) -> f64 {
        *self.cum_agents.last().unwrap()
    }

    fn wealth(&self) -> f64 {
        *self.cum_wealth.last().unwrap()
    }

    pub fn w_max(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    /// Exact integrals of `P`, `x P` and `x^2/2 P` over `[0, w)`.
    fn below(&self, w: f64) -> (f64, f64, f64) {
        if w <= self.edges[0] {
            return (0.0, 0.0, 0.0);
        }
        let n = self.densities.len();
        if w >= self.w_max() {
            return (self.cum_agents[n], self.cum_wealth[n], self.cum_half_sq[n]);
        }
        // edges[i] <= w < edges[i + 1]
        let i = self.edges.partition_point(|&e| e <= w) - 1;
        let (lo, p) = (self.edges[i], self.densities[i]);
        (
            self.cum_agents[i] + p * (w - lo),
            self.cum_wealth[i] + p * 0.5 * (w * w - lo * lo),
            self.cum_half_sq[i] + p * (w * w * w - lo * lo * lo) / 6.0,
        )
    }
}

/// Classical part of a wealth distribution.
#[derive(Clone, Debug, PartialEq)]
pub enum Classical {
    Samples(SampleSet),
    Grid(GridDensity),
}

/// Classical agent density plus a condensed wealth fraction `c` that carries no agents.
#[derive(Clone, Debug, PartialEq)]
pub struct WealthDistribution {
    classical: Classical,
    condensed_fraction: f64,
    n_agents: f64,
    total_wealth: f64,
}

impl WealthDistribution {
    /// Equal-weight samples with no condensed wealth.
    pub fn from_samples(samples: Vec<f64>) -> Result<Self> {
        let set = SampleSet::new(samples)?;
        let w = set.wealth();
        Self::build(Classical::Samples(set), 0.0, w)
    }

    /// Samples holding `(1 - c)` of `total_wealth`, the remaining `c` being condensed.
    pub fn from_samples_with_condensed(
        samples: Vec<f64>,
        condensed_fraction: f64,
        total_wealth: f64,
    ) -> Result<Self> {
        let set = SampleSet::new(samples)?;
        Self::build(Classical::Samples(set), condensed_fraction, total_wealth)
    }

    pub fn from_population(pop: &Population) -> Result<Self> {
        Self::from_samples(pop.wealths().to_vec())
    }

    /// Gridded classical density plus `condensed_wealth` in currency units.
    pub fn from_grid(edges: Vec<f64>, densities: Vec<f64>, condensed_wealth: f64) -> Result<Self> {
        if !(condensed_wealth.is_finite() && condensed_wealth >= 0.0) {
            return domain(format!("condensed wealth {condensed_wealth} must be >= 0"));
        }
        let grid = GridDensity::new(edges, densities)?;
        let total = grid.wealth() + condensed_wealth;
        let c = if total > 0.0 {
            condensed_wealth / total
        } else {
            0.0
        };
        Self::build(Classical::Grid(grid), c, total)
    }

    fn build(classical: Classical, c: f64, total_wealth: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&c) {
            return domain(format!("condensed fraction {c} outside [0, 1]"));
        }
        if !(total_wealth.is_finite() && total_wealth > 0.0) {
            return domain(format!(
                "total wealth must be positive (got {total_wealth})"
            ));
        }
        let (n_agents, classical_wealth) = match &classical {
            Classical::Samples(s) => (s.sorted.len() as f64, s.wealth()),
            Classical::Grid(g) => (g.agents(), g.wealth()),
        };
        if n_agents <= 0.0 {
            return domain("distribution has no agents");
        }
        let expected = (1.0 - c) * total_wealth;
        if (classical_wealth - expected).abs() > MOMENT_TOLERANCE * total_wealth {
            return domain(format!(
                "classical wealth {classical_wealth} does not equal (1 - c) W = {expected}"
            ));
        }
        Ok(WealthDistribution {
            classical,
            condensed_fraction: c,
            n_agents,
            total_wealth,
        })
    }

    pub fn classical(&self) -> &Classical {
        &self.classical
    }

    pub fn condensed_fraction(&self) -> f64 {
        self.condensed_fraction
    }

    pub fn n_agents(&self) -> f64 {
        self.n_agents
    }

    pub fn total_wealth(&self) -> f64 {
        self.total_wealth
    }

    pub fn classical_wealth(&self) -> f64 {
        match &self.classical {
            Classical::Samples(s) => s.wealth(),
            Classical::Grid(g) => g.wealth(),
        }
    }

    /// Same classical part with the condensed component removed.
    pub fn classical_only(&self) -> Result<Self> {
        let w = self.classical_wealth();
        Self::build(self.classical.clone(), 0.0, w)
    }

    /// Raw integrals of `P`, `x P` and `x^2/2 P` over classical agents with wealth `< w`.
    pub(crate) fn integrals_below(&self, w: f64) -> (f64, f64, f64) {
        match &self.classical {
            Classical::Samples(s) => {
                let k = s.sorted.partition_point(|&x| x < w);
                (k as f64, s.prefix_wealth[k], s.prefix_half_sq[k])
            }
            Classical::Grid(g) => g.below(w),
        }
    }

    /// Largest wealth carried by the classical part (upper grid edge for grids).
    pub fn support_max(&self) -> f64 {
        match &self.classical {
            Classical::Samples(s) => *s.sorted.last().unwrap_or(&0.0),
            Classical::Grid(g) => g.w_max(),
        }
    }
}
