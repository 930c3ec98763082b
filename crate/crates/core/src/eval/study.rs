//! Replicated simulation studies: generate data from a known truth, fit,
//! and score the fit against the truth.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::karlis::{bivariate_poisson_mixture_generate, BivPoissonMixtureParams};
use super::presets::example1;
use super::{best_matching, kl_from_log_pairs};
use crate::error::{Error, Result};
use crate::gauss::BoxAccuracy;
use crate::margins::MarginParams;
use crate::model::{generate, Family, MixtureEval, MixtureParams};
use crate::rng::{derive_seed, stream};
use crate::sampler::{argmax, fit, ChainConfig};
use crate::schema::MixedDataset;

pub const DEFAULT_KL_DRAWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Study {
    /// Two-component copula mixture on (continuous, integer, binary).
    Example1,
    /// Two-component bivariate Poisson mixture, fitted with a
    /// heteroscedastic copula mixture.
    Karlis,
}

impl Study {
    fn tag(self) -> u64 {
        match self {
            Study::Example1 => 1,
            Study::Karlis => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Study::Example1 => "example1",
            Study::Karlis => "karlis",
        }
    }
}

impl fmt::Display for Study {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Study {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "example1" => Ok(Study::Example1),
            "karlis" => Ok(Study::Karlis),
            other => Err(Error::Config(format!("unknown study '{other}' (expected example1 or karlis)"))),
        }
    }
}

/// One long-format result line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    pub study: Study,
    pub n: usize,
    pub replicate: usize,
    pub metric: String,
    pub value: f64,
}

/// Metrics reported per replicate.
///
/// `misclassification` compares the fitted partition of the sample with
/// its true labels; `misclassification_test` scores the MAP rule of the
/// estimate on the independent sample drawn for the KL estimate.
pub const METRICS: [&str; 7] = [
    "kl",
    "kl_se",
    "misclassification",
    "misclassification_test",
    "gamma1_12",
    "margin1",
    "fit_secs",
];

enum Truth {
    Copula(MixtureParams),
    Poisson(BivPoissonMixtureParams),
}

impl Truth {
    fn of(study: Study) -> Self {
        match study {
            Study::Example1 => Truth::Copula(example1().1),
            Study::Karlis => Truth::Poisson(BivPoissonMixtureParams::default()),
        }
    }

    fn generate(&self, n: usize, seed: u64) -> Result<(MixedDataset, Vec<usize>)> {
        let mut rng = stream(seed, &[]);
        match self {
            Truth::Copula(theta) => {
                let gen = generate(n, theta, &example1().0, &mut rng)?;
                Ok((gen.data, gen.labels))
            }
            Truth::Poisson(p) => bivariate_poisson_mixture_generate(p, n, &mut rng),
        }
    }

    /// Draws an independent sample of size `draws` and returns the
    /// (log p_true, log p_est) pairs with the true labels and the MAP labels
    /// under `est`.
    fn holdout(&self, est: &MixtureParams, draws: usize, seed: u64) -> Result<Holdout> {
        let (sample, labels, log_true) = match self {
            Truth::Copula(theta) => {
                let gen = generate(draws, theta, &example1().0, &mut stream(seed, &[]))?;
                let eval = MixtureEval::for_data(theta, &gen.data)?;
                let acc = BoxAccuracy::default();
                let lt: Vec<f64> = gen.data.rows().map(|x| eval.logpdf(x, &acc).value).collect();
                (gen.data, gen.labels, lt)
            }
            Truth::Poisson(p) => {
                let (data, labels) = bivariate_poisson_mixture_generate(p, draws, &mut stream(seed, &[]))?;
                let lt: Vec<f64> = data.rows().map(|x| p.logpmf(x)).collect();
                (data, labels, lt)
            }
        };
        let eval = MixtureEval::for_data(est, &sample)?;
        let acc = BoxAccuracy::default();
        let (pairs, map): (Vec<(f64, f64)>, Vec<usize>) = (0..sample.n())
            .into_par_iter()
            .map(|i| {
                let post = eval.posterior(sample.row(i), &acc);
                ((log_true[i], post.log_density), argmax(&post.t))
            })
            .unzip();
        Ok(Holdout { pairs, labels, map })
    }
}

struct Holdout {
    pairs: Vec<(f64, f64)>,
    labels: Vec<usize>,
    map: Vec<usize>,
}

/// Location parameter of a margin: μ for Gaussian, λ for Poisson, P(level
/// 1) for ordinal.
fn location(m: &MarginParams) -> f64 {
    match m {
        MarginParams::Gaussian { mu, .. } => *mu,
        MarginParams::Poisson { lambda } => *lambda,
        MarginParams::Ordinal { probs } => probs[0],
    }
}

fn replicate(study: Study, truth: &Truth, n: usize, rep: usize, cfg: &ChainConfig, seed: u64, kl_draws: usize) -> Result<Vec<StudyRecord>> {
    let base = derive_seed(seed, &[study.tag(), n as u64, rep as u64]);
    let (data, labels) = truth.generate(n, derive_seed(base, &[0]))?;
    let mut cfg = cfg.clone();
    cfg.seed = derive_seed(base, &[1]);
    cfg.init = None;
    let r = fit(&data, &cfg)?;
    let matching = best_matching(&r.partition, &labels)?;
    // Estimated component matched to the true first component.
    let k1 = matching.perm.iter().position(|&t| t == 0).unwrap_or(0);
    let alpha = &r.theta.components[k1];
    let holdout = truth.holdout(&r.theta, kl_draws, derive_seed(base, &[2]))?;
    let kl = kl_from_log_pairs(&holdout.pairs);
    let test_rate = best_matching(&holdout.map, &holdout.labels)?.rate;
    let rec = |metric: &str, value: f64| StudyRecord {
        study,
        n,
        replicate: rep,
        metric: metric.to_string(),
        value,
    };
    Ok(vec![
        rec("kl", kl.value),
        rec("kl_se", kl.std_error),
        rec("misclassification", matching.rate),
        rec("misclassification_test", test_rate),
        rec("gamma1_12", alpha.correlation.get(0, 1)),
        rec("margin1", location(&alpha.margins[0])),
        rec("fit_secs", r.wall_time_secs),
    ])
}

/// Runs `replicates` independent replicates at each sample size. The
/// fitted family and g are fixed by the study (heteroscedastic, g = 2);
/// other chain settings come from `cfg`. Failed replicates are logged and
/// skipped.
pub fn run_simulation_study(
    study: Study,
    sizes: &[usize],
    replicates: usize,
    cfg: &ChainConfig,
    seed: u64,
    kl_draws: usize,
) -> Result<Vec<StudyRecord>> {
    if sizes.is_empty() || sizes.contains(&0) {
        return Err(Error::Config("sample sizes must be positive".into()));
    }
    if replicates == 0 || kl_draws == 0 {
        return Err(Error::Config("replicates and KL draws must be positive".into()));
    }
    let mut cfg = cfg.clone();
    cfg.g = 2;
    cfg.family = Family::Heteroscedastic;
    cfg.validate()?;
    let truth = Truth::of(study);
    let jobs: Vec<(usize, usize)> = sizes.iter().flat_map(|&n| (0..replicates).map(move |r| (n, r))).collect();
    let results: Vec<Vec<StudyRecord>> = jobs
        .par_iter()
        .map(|&(n, rep)| match replicate(study, &truth, n, rep, &cfg, seed, kl_draws) {
            Ok(v) => v,
            Err(e) => {
                warn!("{study} n={n} replicate {rep} failed: {e}");
                Vec::new()
            }
        })
        .collect();
    Ok(results.into_iter().flatten().collect())
}

pub fn records_csv(records: &[StudyRecord]) -> String {
    let mut s = String::from("study,n,replicate,metric,value\n");
    for r in records {
        let _ = writeln!(s, "{},{},{},{},{}", r.study, r.n, r.replicate + 1, r.metric, r.value);
    }
    s
}

/// Median of `metric` over replicates at sample size `n`.
pub fn median_of(records: &[StudyRecord], n: usize, metric: &str) -> Option<f64> {
    let mut v: Vec<f64> = records
        .iter()
        .filter(|r| r.n == n && r.metric == metric && r.value.is_finite())
        .map(|r| r.value)
        .collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len();
    Some(if m % 2 == 1 { v[m / 2] } else { 0.5 * (v[m / 2 - 1] + v[m / 2]) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_study_names() {
        assert_eq!("Example1".parse::<Study>().unwrap(), Study::Example1);
        assert_eq!("karlis".parse::<Study>().unwrap(), Study::Karlis);
        assert!("other".parse::<Study>().is_err());
    }

    #[test]
    fn medians() {
        let r = |v: f64| StudyRecord {
            study: Study::Karlis,
            n: 5,
            replicate: 0,
            metric: "kl".into(),
            value: v,
        };
        assert_eq!(median_of(&[r(3.0), r(1.0), r(2.0)], 5, "kl"), Some(2.0));
        assert_eq!(median_of(&[r(3.0), r(1.0)], 5, "kl"), Some(2.0));
        assert_eq!(median_of(&[r(3.0)], 6, "kl"), None);
    }

    #[test]
    fn small_study_has_the_long_shape() {
        let mut cfg = ChainConfig::new(2, Family::Heteroscedastic);
        cfg.iterations = 20;
        cfg.burn_in = 5;
        cfg.n_chains = 1;
        cfg.em_restarts = 2;
        let recs = run_simulation_study(Study::Karlis, &[60], 2, &cfg, 9, 200).unwrap();
        assert_eq!(recs.len(), 2 * METRICS.len());
        for r in recs.iter().filter(|r| r.metric == "misclassification") {
            assert!((0.0..=1.0).contains(&r.value));
        }
        let again = run_simulation_study(Study::Karlis, &[60], 2, &cfg, 9, 200).unwrap();
        let strip = |v: &[StudyRecord]| v.iter().filter(|r| r.metric != "fit_secs").cloned().collect::<Vec<_>>();
        assert_eq!(strip(&recs), strip(&again));
        assert_eq!(records_csv(&recs).lines().count(), recs.len() + 1);
    }
}
