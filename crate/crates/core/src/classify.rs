//! Bit-rate sweeps over group sizes, per-class models and MAP classification.
//!
//! Class scores are exact code lengths (`exact_map_bits`), not the relaxed
//! objective; the lowest score wins and ties go to the smaller class id.

use rayon::prelude::*;

use crate::model::{total_bits, CoocModel, Grouping};
use crate::optimizer::{fit, init_grouping, FitConfig, InitMode};
use crate::sparsity::{IndexDomain, SignificanceMap};
use crate::{invalid, Error, Result};

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// Bits per index under the three groupings compared in a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BitRates {
    pub optimized: f64,
    /// `None` when `s` blocks cannot tile the domain.
    pub square: Option<f64>,
    pub single: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub group_size: usize,
    pub train: BitRates,
    pub test: Option<BitRates>,
}

impl SweepRow {
    pub fn log2_size(&self) -> f64 {
        (self.group_size as f64).log2()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// Row with the lowest held-out optimized bit rate (training rate when
    /// there is no held-out set). Ties go to the earlier row.
    pub fn best(&self) -> Option<&SweepRow> {
        let key = |r: &SweepRow| r.test.map_or(r.train.optimized, |t| t.optimized);
        self.rows
            .iter()
            .fold(None, |best: Option<&SweepRow>, r| match best {
                Some(b) if key(b) <= key(r) => Some(b),
                _ => Some(r),
            })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "s,log2_s,train_optimized,train_square,train_single,test_optimized,test_square,test_single\n",
        );
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.group_size,
                r.log2_size(),
                r.train.optimized,
                opt(r.train.square),
                r.train.single,
                opt(r.test.map(|t| t.optimized)),
                opt(r.test.and_then(|t| t.square)),
                opt(r.test.map(|t| t.single)),
            ));
        }
        out
    }
}

fn rates(model: &CoocModel, maps: &[SignificanceMap]) -> Result<f64> {
    Ok(total_bits(maps, model)?.bits_per_index)
}

/// Model on the fixed `sqrt(s) x sqrt(s)` block partition, if it exists.
pub fn square_block_model(maps: &[SignificanceMap], s: usize, bins: usize) -> Result<Option<CoocModel>> {
    let domain = *first_domain(maps)?;
    match init_grouping(domain, s, InitMode::SquareBlocks, 0) {
        Ok(g) => Ok(Some(CoocModel::from_grouping(g, maps, bins)?)),
        Err(Error::InvalidArgument(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Model with a single group covering the whole domain.
pub fn single_group_model(maps: &[SignificanceMap], bins: usize) -> Result<CoocModel> {
    let domain = *first_domain(maps)?;
    let n = domain.size();
    CoocModel::from_grouping(Grouping::new(domain, n, vec![0; n])?, maps, bins)
}

fn first_domain(maps: &[SignificanceMap]) -> Result<&IndexDomain> {
    Ok(maps.first().ok_or_else(|| invalid("need at least one map"))?.domain())
}

/// Fit every group size on `train` and report bit rates on `train` and `test`.
pub fn sweep_group_sizes(
    train: &[SignificanceMap],
    test: &[SignificanceMap],
    sizes: &[usize],
    template: &FitConfig,
) -> Result<SweepResult> {
    let domain = *first_domain(train)?;
    for y in test {
        y.domain().ensure_same(&domain)?;
    }
    for &s in sizes {
        if s < 2 || s > domain.size() {
            return Err(invalid(format!("group size {s} outside [2, {}]", domain.size())));
        }
    }
    let single = single_group_model(train, template.bins)?;
    let single_train = rates(&single, train)?;
    let single_test = if test.is_empty() { None } else { Some(rates(&single, test)?) };

    let mut rows = Vec::with_capacity(sizes.len());
    for &s in sizes {
        let config = FitConfig {
            group_size: s,
            ..template.clone()
        };
        let (model, _) = fit(train, &config)?;
        let square = square_block_model(train, s, template.bins)?;
        let train_rates = BitRates {
            optimized: rates(&model, train)?,
            square: square.as_ref().map(|m| rates(m, train)).transpose()?,
            single: single_train,
        };
        let test_rates = match single_test {
            Some(single) => Some(BitRates {
                optimized: rates(&model, test)?,
                square: square.as_ref().map(|m| rates(m, test)).transpose()?,
                single,
            }),
            None => None,
        };
        rows.push(SweepRow {
            group_size: s,
            train: train_rates,
            test: test_rates,
        });
    }
    Ok(SweepResult { rows })
}

// ---------------------------------------------------------------------------
// Class models
// ---------------------------------------------------------------------------

/// One model per class, all on the same domain and group size.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassModelSet {
    models: Vec<CoocModel>,
}

impl ClassModelSet {
    pub fn new(models: Vec<CoocModel>) -> Result<Self> {
        let first = models.first().ok_or_else(|| Error::Invariant("no class models".into()))?;
        for (d, m) in models.iter().enumerate() {
            m.domain().ensure_same(first.domain())?;
            if m.grouping().group_size() != first.grouping().group_size() {
                return Err(Error::Invariant(format!(
                    "class {d} has group size {}, class 0 has {}",
                    m.grouping().group_size(),
                    first.grouping().group_size()
                )));
            }
        }
        Ok(Self { models })
    }

    pub fn models(&self) -> &[CoocModel] {
        &self.models
    }

    pub fn num_classes(&self) -> usize {
        self.models.len()
    }

    pub fn domain(&self) -> &IndexDomain {
        self.models[0].domain()
    }

    pub fn num_groups(&self) -> usize {
        self.models[0].num_groups()
    }

    pub fn feature_dim(&self) -> usize {
        self.num_classes() * self.num_groups()
    }

    pub fn into_models(self) -> Vec<CoocModel> {
        self.models
    }
}

/// Fit one model per class. Class `d` uses seed `config.seed + d`.
pub fn train_class_models(maps_by_label: &[Vec<SignificanceMap>], config: &FitConfig) -> Result<ClassModelSet> {
    if let Some(d) = maps_by_label.iter().position(Vec::is_empty) {
        return Err(invalid(format!("class {d} has no training maps")));
    }
    let models = maps_by_label
        .par_iter()
        .enumerate()
        .map(|(d, maps)| {
            let class_config = config.clone().with_seed(config.seed.wrapping_add(d as u64));
            fit(maps, &class_config).map(|(m, _)| m)
        })
        .collect::<Result<Vec<_>>>()?;
    ClassModelSet::new(models)
}

/// Exact code length of `y` under every class model.
pub fn class_scores(y: &SignificanceMap, models: &ClassModelSet) -> Result<Vec<f64>> {
    models.models.iter().map(|m| m.map_bits(y)).collect()
}

/// Index of the smallest score; the first wins ties.
pub fn argmin(scores: &[f64]) -> usize {
    let mut best = 0;
    for (d, &s) in scores.iter().enumerate() {
        if s < scores[best] {
            best = d;
        }
    }
    best
}

pub fn map_classify(y: &SignificanceMap, models: &ClassModelSet) -> Result<usize> {
    Ok(argmin(&class_scores(y, models)?))
}

pub fn classify_batch(maps: &[SignificanceMap], models: &ClassModelSet) -> Result<Vec<usize>> {
    maps.par_iter().map(|y| map_classify(y, models)).collect()
}

/// Per-(class, group) code lengths, class-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub classes: usize,
    pub groups: usize,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn get(&self, d: usize, k: usize) -> f64 {
        self.values[d * self.groups + k]
    }

    pub fn class_total(&self, d: usize) -> f64 {
        self.values[d * self.groups..(d + 1) * self.groups].iter().sum()
    }
}

pub fn extract_features(y: &SignificanceMap, models: &ClassModelSet) -> Result<FeatureVector> {
    let mut values = Vec::with_capacity(models.feature_dim());
    for m in &models.models {
        values.extend(m.group_bits(y)?);
    }
    Ok(FeatureVector {
        classes: models.num_classes(),
        groups: models.num_groups(),
        values,
    })
}

pub fn features_batch(maps: &[SignificanceMap], models: &ClassModelSet) -> Result<Vec<FeatureVector>> {
    maps.par_iter().map(|y| extract_features(y, models)).collect()
}

pub fn evaluate_error(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(invalid(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if labels.is_empty() {
        return Err(invalid("no predictions to evaluate"));
    }
    let wrong = predictions.iter().zip(labels).filter(|(p, l)| p != l).count();
    Ok(wrong as f64 / labels.len() as f64)
}

/// `id,predicted,true`; the last column is empty without labels.
pub fn predictions_csv(predictions: &[usize], labels: Option<&[usize]>) -> String {
    let mut out = String::from("id,predicted,true\n");
    for (i, p) in predictions.iter().enumerate() {
        let truth = labels.map_or(String::new(), |l| l[i].to_string());
        out.push_str(&format!("{i},{p},{truth}\n"));
    }
    out
}

/// Header `label,f_<d>_<k>...` then one row per example: label, then the
/// features class-major.
pub fn features_csv(features: &[FeatureVector], labels: Option<&[usize]>) -> String {
    let mut out = String::from("label");
    if let Some(f) = features.first() {
        for d in 0..f.classes {
            for k in 0..f.groups {
                out.push_str(&format!(",f_{d}_{k}"));
            }
        }
    }
    out.push('\n');
    for (i, f) in features.iter().enumerate() {
        if let Some(l) = labels {
            out.push_str(&l[i].to_string());
        }
        for v in &f.values {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, SyntheticSpec};
    use crate::model::{binom_bits, GroupHistogram};

    fn toy_models(classes: usize) -> ClassModelSet {
        let d = IndexDomain::pixel(4, 4).unwrap();
        let models = (0..classes)
            .map(|c| {
                let maps: Vec<SignificanceMap> = (0..5)
                    .map(|l| SignificanceMap::from_indices(d, (0..16).filter(|p| (p + l + c) % 4 == 0)).unwrap())
                    .collect();
                let g = init_grouping(d, 4, InitMode::Random, c as u64).unwrap();
                CoocModel::from_grouping(g, &maps, 3).unwrap()
            })
            .collect();
        ClassModelSet::new(models).unwrap()
    }

    #[test]
    fn error_rate_counts() {
        assert_eq!(evaluate_error(&[1, 2, 3], &[1, 2, 3]).unwrap(), 0.0);
        assert_eq!(evaluate_error(&[1, 2], &[0, 0]).unwrap(), 1.0);
        let labels = vec![0; 100];
        let preds: Vec<usize> = (0..100).map(|i| usize::from(i < 18)).collect();
        assert_eq!(evaluate_error(&preds, &labels).unwrap(), 0.18);
        assert!(evaluate_error(&[1], &[1, 2]).is_err());
    }

    #[test]
    fn identical_models_tie_to_class_zero() {
        let one = toy_models(1).into_models().remove(0);
        let set = ClassModelSet::new(vec![one; 10]).unwrap();
        let y = SignificanceMap::from_indices(*set.domain(), [1, 2, 3]).unwrap();
        assert_eq!(map_classify(&y, &set).unwrap(), 0);
    }

    #[test]
    fn features_sum_to_scores() {
        let set = toy_models(3);
        let y = SignificanceMap::from_indices(*set.domain(), [0, 5, 6, 15]).unwrap();
        let f = extract_features(&y, &set).unwrap();
        assert_eq!(f.values.len(), 3 * 4);
        let scores = class_scores(&y, &set).unwrap();
        for (d, score) in scores.iter().enumerate() {
            assert!((f.class_total(d) - score).abs() < 1e-9);
        }
        assert!(f.values.iter().all(|v| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn empty_map_features() {
        let set = toy_models(2);
        let f = extract_features(&SignificanceMap::empty(*set.domain()), &set).unwrap();
        for (d, m) in set.models().iter().enumerate() {
            for (k, h) in m.histograms().iter().enumerate() {
                assert_eq!(f.get(d, k), -h.count_prob(0).log2());
            }
        }
    }

    #[test]
    fn decision_invariant_under_monotone_transform() {
        let scores = [5.0, 3.0, 3.0, 7.0];
        let transformed: Vec<f64> = scores.iter().map(|s: &f64| (s * 2.0).exp()).collect();
        assert_eq!(argmin(&scores), 1);
        assert_eq!(argmin(&transformed), 1);
    }

    #[test]
    fn domain_mismatch_rejected() {
        let set = toy_models(2);
        let y = SignificanceMap::empty(IndexDomain::pixel(2, 2).unwrap());
        assert!(matches!(map_classify(&y, &set), Err(Error::DomainMismatch(_))));
        assert!(extract_features(&y, &set).is_err());
    }

    #[test]
    fn feature_csv_layout() {
        let set = toy_models(2);
        let y = SignificanceMap::empty(*set.domain());
        let f = features_batch(&[y.clone(), y], &set).unwrap();
        let csv = features_csv(&f, Some(&[4, 7]));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines.iter().all(|l| l.split(',').count() == 1 + 2 * 4));
        assert!(lines[1].starts_with("4,"));
        assert_eq!(predictions_csv(&[1, 0], Some(&[1, 1])), "id,predicted,true\n0,1,1\n1,0,1\n");
    }

    #[test]
    fn single_group_matches_closed_form() {
        let d = IndexDomain::pixel(4, 2).unwrap();
        let maps: Vec<SignificanceMap> = [vec![0, 1], vec![3], vec![0, 1, 2, 3, 4]]
            .into_iter()
            .map(|ix| SignificanceMap::from_indices(d, ix).unwrap())
            .collect();
        let model = single_group_model(&maps, 4).unwrap();
        let h = GroupHistogram::from_counts(8, 4, maps.iter().map(|y| y.count()));
        let expected: f64 = maps
            .iter()
            .map(|y| binom_bits(8, y.count()).unwrap() - h.count_prob(y.count()).log2())
            .sum();
        assert!((total_bits(&maps, &model).unwrap().bits - expected).abs() < 1e-12);
    }

    #[test]
    fn identical_classes_give_identical_models() {
        let spec = SyntheticSpec::uniform(16, 4, 0.9, 0.1, 30, 4);
        let maps = gen_synthetic(&spec).unwrap().maps;
        let mut config = FitConfig::new(4);
        config.init = InitMode::SquareBlocks;
        let set = train_class_models(&[maps.clone(), maps], &config).unwrap();
        assert_eq!(set.models()[0], set.models()[1]);
        assert!(train_class_models(&[vec![]], &config).is_err());
    }
}
