//! Scoring rules and divergences measuring closeness to the true distribution.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Observation, Task};
use crate::error::{Error, Result};
use crate::predictive::Predictive;
use crate::special::std_normal_ln_pdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriterionKind {
    LogScore,
    Kld,
    Wasserstein1,
    Auroc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    LowerBetter,
    HigherBetter,
}

impl CriterionKind {
    pub fn orientation(&self) -> Orientation {
        match self {
            CriterionKind::Auroc => Orientation::HigherBetter,
            _ => Orientation::LowerBetter,
        }
    }

    /// `true` if `a` is strictly better than `b` under this criterion.
    pub fn better(&self, a: f64, b: f64) -> bool {
        match self.orientation() {
            Orientation::LowerBetter => a < b,
            Orientation::HigherBetter => a > b,
        }
    }

    /// Value mapped so that lower is always better.
    pub fn as_loss(&self, v: f64) -> f64 {
        match self.orientation() {
            Orientation::LowerBetter => v,
            Orientation::HigherBetter => -v,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CriterionKind::LogScore => "log_score",
            CriterionKind::Kld => "kld",
            CriterionKind::Wasserstein1 => "wasserstein1",
            CriterionKind::Auroc => "auroc",
        }
    }
}

impl std::fmt::Display for CriterionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for CriterionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log_score" => Ok(CriterionKind::LogScore),
            "kld" => Ok(CriterionKind::Kld),
            "wasserstein1" => Ok(CriterionKind::Wasserstein1),
            "auroc" => Ok(CriterionKind::Auroc),
            other => Err(Error::invalid(format!("unknown criterion {other:?}"))),
        }
    }
}

/// What is known about the true distribution.
#[derive(Debug, Clone, PartialEq)]
pub enum F0Spec {
    KnownGaussian { mu0: f64, sigma0: f64 },
    EmpiricalOnly { test: Dataset },
}

impl F0Spec {
    pub fn ln_pdf(&self, y: f64) -> Option<f64> {
        match *self {
            F0Spec::KnownGaussian { mu0, sigma0 } => Some(std_normal_ln_pdf((y - mu0) / sigma0) - sigma0.ln()),
            F0Spec::EmpiricalOnly { .. } => None,
        }
    }
}

/// Mean negative log predictive over a test set (lower is better).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogScore {
    pub value: f64,
    /// Test points where the predictive is zero; the score is then `+inf`.
    pub zero_density_points: usize,
}

impl LogScore {
    pub fn flagged(&self) -> bool {
        self.zero_density_points > 0
    }
}

/// Per-point negative log predictive values.
pub fn pointwise_log_scores(p: &dyn Predictive, test: &Dataset) -> Vec<f64> {
    test.iter().map(|x| -p.log_predictive(x)).collect()
}

pub fn log_score(p: &dyn Predictive, test: &Dataset) -> Result<LogScore> {
    if test.is_empty() {
        return Err(Error::invalid("log score needs a non-empty test set"));
    }
    test.iter().try_for_each(|x| p.model().check_observation(x))?;
    let s = pointwise_log_scores(p, test);
    let zero = s.iter().filter(|v| **v == f64::INFINITY).count();
    let value = if zero > 0 { f64::INFINITY } else { s.iter().sum::<f64>() / s.len() as f64 };
    Ok(LogScore { value, zero_density_points: zero })
}

/// Trapezoid grid for KLD quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Quadrature {
    /// `mu0 ± 10 sigma0` with step `sigma0 / 500`.
    pub fn default_for(mu0: f64, sigma0: f64) -> Self {
        Quadrature { lo: mu0 - 10.0 * sigma0, hi: mu0 + 10.0 * sigma0, step: sigma0 / 500.0 }
    }

    pub fn points(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step).round() as usize;
        let h = (self.hi - self.lo) / n as f64;
        (0..=n).map(|i| self.lo + i as f64 * h).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kld {
    /// `∫ f0 (ln f0 - ln p)` over the points where `p > 0`.
    pub value: f64,
    /// f0 mass where the predictive is zero (support deficit).
    pub deficit_mass: f64,
}

impl Kld {
    pub fn flagged(&self) -> bool {
        self.deficit_mass > 0.0
    }
}

/// KL divergence from a known Gaussian `f0` to the predictive `p`.
pub fn kld_to_f0(f0: &F0Spec, p: &dyn Predictive, quad: &Quadrature) -> Result<Kld> {
    let F0Spec::KnownGaussian { mu0, sigma0 } = *f0 else {
        return Err(Error::invalid("KLD needs a known F0 density"));
    };
    if p.model().task() != Task::Gaussian {
        return Err(Error::incompatible("KLD is defined for scalar predictives"));
    }
    if !(quad.hi > quad.lo && quad.step > 0.0) {
        return Err(Error::invalid("invalid quadrature range"));
    }
    // Coverage precondition: at most 1e-10 of the f0 mass outside the range.
    let outside = crate::special::std_normal_cdf((quad.lo - mu0) / sigma0)
        + crate::special::std_normal_cdf(-(quad.hi - mu0) / sigma0);
    if outside > 1e-10 {
        return Err(Error::invalid(format!("quadrature range misses {outside:.1e} of the f0 mass")));
    }
    let ys = quad.points();
    let h = ys[1] - ys[0];
    let mut value = 0.0;
    let mut deficit = 0.0;
    for (i, &y) in ys.iter().enumerate() {
        let w = if i == 0 || i + 1 == ys.len() { 0.5 * h } else { h };
        let lf = f0.ln_pdf(y).expect("known density");
        let f = lf.exp();
        if f == 0.0 {
            continue;
        }
        let lp = p.log_predictive(&Observation::Scalar(y));
        if lp == f64::NEG_INFINITY {
            deficit += w * f;
        } else {
            value += w * f * (lf - lp);
        }
    }
    Ok(Kld { value, deficit_mass: deficit })
}

/// One-dimensional Wasserstein-1 distance between two empirical
/// distributions, `∫ |F_p(t) - F_q(t)| dt`, exact for any sample sizes. For
/// equal sizes this is the mean absolute difference of sorted samples.
pub fn wasserstein1(samples_p: &[f64], samples_q: &[f64]) -> Result<f64> {
    if samples_p.is_empty() || samples_q.is_empty() {
        return Err(Error::invalid("Wasserstein distance needs non-empty samples"));
    }
    if samples_p.iter().chain(samples_q).any(|v| !v.is_finite()) {
        return Err(Error::invalid("Wasserstein distance needs finite samples"));
    }
    let mut a = samples_p.to_vec();
    let mut b = samples_q.to_vec();
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    if a.len() == b.len() {
        return Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64);
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut prev = a[0].min(b[0]);
    let mut total = 0.0;
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => x.min(*y),
            (Some(x), None) => *x,
            (None, Some(y)) => *y,
            (None, None) => unreachable!(),
        };
        total += (i as f64 / na - j as f64 / nb).abs() * (next - prev);
        prev = next;
        while i < a.len() && a[i] == next {
            i += 1;
        }
        while j < b.len() && b[j] == next {
            j += 1;
        }
    }
    Ok(total)
}

fn check_auroc_inputs(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("scores and labels differ in length"));
    }
    let pos = labels.iter().filter(|l| **l).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::invalid("AUROC needs both classes"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("AUROC scores contain NaN"));
    }
    Ok(())
}

/// Area under the ROC curve; ties count one half. Computed from mid-ranks in
/// `O(n log n)`, equal to [`auroc_pairwise`].
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_auroc_inputs(scores, labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut k = 0;
    while k < idx.len() {
        let mut e = k;
        while e + 1 < idx.len() && scores[idx[e + 1]] == scores[idx[k]] {
            e += 1;
        }
        let mid = (k + e) as f64 / 2.0 + 1.0;
        rank_sum_pos += idx[k..=e].iter().filter(|&&i| labels[i]).count() as f64 * mid;
        k = e + 1;
    }
    let n1 = labels.iter().filter(|l| **l).count() as f64;
    let n0 = labels.len() as f64 - n1;
    Ok((rank_sum_pos - n1 * (n1 + 1.0) / 2.0) / (n0 * n1))
}

/// The literal pairwise estimator over negative × positive pairs.
pub fn auroc_pairwise(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_auroc_inputs(scores, labels)?;
    let mut total = 0.0;
    let mut pairs = 0.0;
    for (s0, _) in scores.iter().zip(labels).filter(|(_, l)| !**l) {
        for (s1, _) in scores.iter().zip(labels).filter(|(_, l)| **l) {
            total += if s0 < s1 {
                1.0
            } else if s0 == s1 {
                0.5
            } else {
                0.0
            };
            pairs += 1.0;
        }
    }
    Ok(total / pairs)
}

/// AUROC of a logistic predictive on labelled test data.
pub fn predictive_auroc(p: &dyn Predictive, test: &Dataset) -> Result<f64> {
    if test.task() != Task::Logistic {
        return Err(Error::incompatible("AUROC needs labelled test data"));
    }
    let (scores, labels): (Vec<f64>, Vec<bool>) = test
        .iter()
        .map(|o| match o {
            Observation::Labeled { features, label } => (p.prob_label_one(features), *label),
            Observation::Scalar(_) => unreachable!(),
        })
        .unzip();
    auroc(&scores, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Provenance;
    use crate::models::{ModelSpec, Theta};
    use crate::predictive::{PredictiveEnsemble, PredictiveModel};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    fn gauss(mu: f64, sigma: f64) -> PredictiveModel {
        PredictiveModel::from_thetas(ModelSpec::gaussian(), vec![Theta::gaussian(mu, sigma)]).unwrap()
    }

    fn normal_samples(seed: u64, n: usize, mu: f64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(mu, 1.0).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn orientation() {
        assert_eq!(CriterionKind::Auroc.orientation(), Orientation::HigherBetter);
        for c in [CriterionKind::LogScore, CriterionKind::Kld, CriterionKind::Wasserstein1] {
            assert_eq!(c.orientation(), Orientation::LowerBetter);
            assert_eq!(c.name().parse::<CriterionKind>().unwrap(), c);
        }
    }

    #[test]
    fn log_score_entropy() {
        let test = Dataset::gaussian(normal_samples(1, 100_000, 0.0), Provenance::Real);
        let s = log_score(&gauss(0.0, 1.0), &test).unwrap();
        let entropy = 0.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        assert!((s.value - entropy).abs() < 0.01, "{}", s.value);
        assert!(!s.flagged());
    }

    #[test]
    fn log_score_degenerate_cases() {
        // A logistic predictive certain of label 1.
        let p = PredictiveModel::from_thetas(
            ModelSpec::LogisticRegression { dim: 1 },
            vec![Theta::logistic(800.0, vec![0.0])],
        )
        .unwrap();
        let one = Dataset::logistic(vec![(vec![0.0], true)], Provenance::Real).unwrap();
        assert_eq!(log_score(&p, &one).unwrap().value, 0.0);
        let tg =
            PredictiveModel::from_thetas(ModelSpec::truncated_gaussian(3.0), vec![Theta::gaussian(0.0, 1.0)]).unwrap();
        let far = Dataset::gaussian([0.0, 5.0], Provenance::Real);
        let s = log_score(&tg, &far).unwrap();
        assert_eq!(s.value, f64::INFINITY);
        assert_eq!(s.zero_density_points, 1);
    }

    #[test]
    fn kld_analytic() {
        let f0 = F0Spec::KnownGaussian { mu0: 0.0, sigma0: 1.0 };
        let q = Quadrature::default_for(0.0, 1.0);
        let k = kld_to_f0(&f0, &gauss(1.0, 1.0), &q).unwrap();
        assert!((k.value - 0.5).abs() < 1e-6, "{}", k.value);
        assert!(kld_to_f0(&f0, &gauss(0.0, 1.0), &q).unwrap().value.abs() < 1e-9);
    }

    #[test]
    fn kld_mixture_matches_monte_carlo() {
        let f0 = F0Spec::KnownGaussian { mu0: 0.0, sigma0: 1.0 };
        let mix = PredictiveEnsemble::new(vec![gauss(-1.0, 1.0), gauss(1.0, 1.0)]).unwrap();
        let quad = kld_to_f0(&f0, &mix, &Quadrature::default_for(0.0, 1.0)).unwrap().value;
        let xs = normal_samples(2, 1_000_000, 0.0);
        let mc = xs.iter().map(|&x| f0.ln_pdf(x).unwrap() - mix.log_predictive(&Observation::Scalar(x))).sum::<f64>()
            / xs.len() as f64;
        assert!((quad - mc).abs() < 1e-3, "{quad} vs {mc}");
    }

    #[test]
    fn kld_flags_support_deficit() {
        let f0 = F0Spec::KnownGaussian { mu0: 0.0, sigma0: 1.0 };
        let tg =
            PredictiveModel::from_thetas(ModelSpec::truncated_gaussian(3.0), vec![Theta::gaussian(0.0, 1.0)]).unwrap();
        let k = kld_to_f0(&f0, &tg, &Quadrature::default_for(0.0, 1.0)).unwrap();
        assert!(k.flagged());
        assert!((k.deficit_mass - 0.0027).abs() < 1e-4);
        assert!(kld_to_f0(&f0, &tg, &Quadrature { lo: -3.0, hi: 3.0, step: 0.01 }).is_err());
    }

    #[test]
    fn wasserstein_cases() {
        let a = normal_samples(3, 1000, 0.0);
        assert_eq!(wasserstein1(&a, &a).unwrap(), 0.0);
        let p = normal_samples(4, 100_000, 0.0);
        let q = normal_samples(5, 100_000, 1.0);
        assert!((wasserstein1(&p, &q).unwrap() - 1.0).abs() < 0.02);
        assert_eq!(wasserstein1(&[0.0, 1.0], &[2.0, 3.0]).unwrap(), 2.0);
        assert!(wasserstein1(&[], &[1.0]).is_err());
        // Unequal sizes: {0} vs {0, 2} moves half the mass by 2.
        assert!((wasserstein1(&[0.0], &[0.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        // Replicating a sample set leaves the distribution unchanged.
        let doubled: Vec<f64> = a.iter().chain(&a).copied().collect();
        assert!(wasserstein1(&a, &doubled).unwrap().abs() < 1e-12);
    }

    #[test]
    fn auroc_cases() {
        assert_eq!(auroc(&[0.9, 0.8, 0.3], &[true, true, false]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.2, 0.8], &[true, false]).unwrap(), 0.0);
        assert_eq!(auroc(&[0.5; 4], &[true, false, true, false]).unwrap(), 0.5);
        assert!(auroc(&[0.1, 0.2], &[true, true]).is_err());
    }

    proptest! {
        #[test]
        fn auroc_matches_pairwise(
            raw in proptest::collection::vec((0u8..6, any::<bool>()), 2..60),
        ) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| *s as f64).collect();
            let labels: Vec<bool> = raw.iter().map(|(_, l)| *l).collect();
            if labels.iter().any(|l| *l) && labels.iter().any(|l| !*l) {
                let a = auroc(&scores, &labels).unwrap();
                let b = auroc_pairwise(&scores, &labels).unwrap();
                prop_assert!((a - b).abs() < 1e-12);
                // Strictly monotone transforms leave it unchanged.
                let t: Vec<f64> = scores.iter().map(|s| (s * 0.7).exp() - 3.0).collect();
                prop_assert!((auroc(&t, &labels).unwrap() - a).abs() < 1e-12);
            }
        }

        #[test]
        fn wasserstein_symmetric_and_triangle(seed in 0u64..1000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect() };
            let (a, b, c) = (draw(17), draw(23), draw(31));
            let ab = wasserstein1(&a, &b).unwrap();
            prop_assert!((ab - wasserstein1(&b, &a).unwrap()).abs() < 1e-12);
            prop_assert!(wasserstein1(&a, &c).unwrap() <= ab + wasserstein1(&b, &c).unwrap() + 1e-12);
        }
    }
}
