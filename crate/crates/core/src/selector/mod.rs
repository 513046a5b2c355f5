//! Sequential projection selection.
//!
//! Each surviving candidate owns one feature sequence. Every iteration the
//! scorer is trained on those sequences against soft targets, the unselected
//! candidate with the highest prediction is picked, its feature row is
//! appended to every live sequence and its own sequence is masked.
//! [`greedy_select`] skips the network and takes the target argmax directly.

mod adamw;
mod gru;

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use adamw::{AdamWConfig, OptimizerState};
pub use gru::{bce, loss_and_gradients, predict, GruLayer, GruModel, SequenceBatch, BCE_CLAMP};

use crate::completeness::{CompletenessMatrix, CoverageSet};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::metrics::MetricTable;

/// Target weights for normalized pixel intensity, CNR and marginal coverage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    pub pixel_intensity: f64,
    pub cnr: f64,
    pub coverage: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            pixel_intensity: 1.0,
            cnr: 1.0,
            coverage: 16.0,
        }
    }
}

impl Weights {
    pub fn coverage_only() -> Self {
        Weights {
            pixel_intensity: 0.0,
            cnr: 0.0,
            coverage: 1.0,
        }
    }

    fn total(&self) -> Result<f64> {
        let all = [self.pixel_intensity, self.cnr, self.coverage];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid(format!("weights must be finite and nonnegative: {self:?}")));
        }
        let sum: f64 = all.iter().sum();
        if sum <= 0.0 {
            return Err(Error::invalid("at least one weight must be positive"));
        }
        Ok(sum)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectorHyper {
    pub hidden_size: usize,
    pub layers: usize,
    pub max_loops: usize,
    #[serde(default)]
    pub optimizer: AdamWConfig,
    #[serde(default)]
    pub weights: Weights,
}

impl SelectorHyper {
    /// Small model for laptop-scale runs.
    pub fn desk() -> Self {
        SelectorHyper {
            hidden_size: 64,
            layers: 2,
            max_loops: 34,
            optimizer: AdamWConfig::default(),
            weights: Weights::default(),
        }
    }

    /// Full-size network (hidden 1075, 6 layers).
    pub fn paper() -> Self {
        SelectorHyper {
            hidden_size: 1075,
            layers: 6,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.layers == 0 || self.max_loops == 0 {
            return Err(Error::invalid("hidden_size, layers and max_loops must be positive"));
        }
        self.optimizer.validate()?;
        self.weights.total().map(|_| ())
    }
}

/// Feature row of a table entry: normalized pixel intensity, normalized CNR,
/// then the completeness bits as 0/1.
pub fn feature_row(table: &MetricTable, row: usize) -> Vec<f64> {
    let r = &table.rows[row];
    let mut out = Vec::with_capacity(table.m + 2);
    out.push(r.pixel_intensity_norm);
    out.push(r.cnr_norm);
    out.extend((0..table.m).map(|j| if r.bit(j) { 1.0 } else { 0.0 }));
    out
}

pub fn feature_table(table: &MetricTable) -> Array2<f64> {
    let f = table.m + 2;
    let flat: Vec<f64> = (0..table.len()).flat_map(|i| feature_row(table, i)).collect();
    Array2::from_shape_vec((table.len(), f), flat).expect("row lengths are uniform")
}

fn table_matrix(table: &MetricTable) -> Result<CompletenessMatrix> {
    // Δγ and the VOI point only matter for persistence, not for coverage.
    table.completeness(0.0, Vec3::ZERO)
}

/// Per table row: `(w_pi·pi + w_cnr·cnr + w_cov·cov) / Σw`, with `cov` the
/// marginal gain over `selected_rows` divided by the largest gain (0 if no
/// candidate adds anything). Selected rows score 0.
pub fn compute_targets(
    table: &MetricTable,
    completeness: &CompletenessMatrix,
    selected_rows: &[usize],
    weights: &Weights,
) -> Result<Vec<f64>> {
    let total = weights.total()?;
    if completeness.n() != table.len() {
        return Err(Error::DimMismatch(format!(
            "completeness has {} rows, metric table {}",
            completeness.n(),
            table.len()
        )));
    }
    let mut covered = CoverageSet::new(completeness);
    let mut taken = vec![false; table.len()];
    for &r in selected_rows {
        covered.add_row(completeness, r);
        taken[r] = true;
    }
    let gains: Vec<u32> = (0..table.len())
        .map(|i| if taken[i] { 0 } else { covered.gain(completeness, i) })
        .collect();
    let best = gains.iter().copied().max().unwrap_or(0);
    Ok(table
        .rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            if taken[i] {
                return 0.0;
            }
            let cov = if best == 0 { 0.0 } else { gains[i] as f64 / best as f64 };
            let s = (weights.pixel_intensity * r.pixel_intensity_norm + weights.cnr * r.cnr_norm + weights.coverage * cov)
                / total;
            s.clamp(0.0, 1.0)
        })
        .collect())
}

/// Index of the largest score among rows not in `taken`; ties go to the
/// lowest index.
fn argmax_free(scores: &[f64], taken: &[bool]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &s) in scores.iter().enumerate() {
        if taken[i] {
            continue;
        }
        if best.is_none_or(|b| s > scores[b]) {
            best = Some(i);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    LossIncrease,
    MaxLoops,
    Greedy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationLog {
    pub chosen_id: usize,
    pub loss_curve: Vec<f64>,
    /// Coverage fraction after adding `chosen_id`.
    pub coverage: f64,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionLog {
    pub method: String,
    pub seed: Option<u64>,
    pub iterations: Vec<IterationLog>,
    pub selected_ids: Vec<usize>,
}

impl SelectionLog {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("selection log serializes");
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// Something that can be fitted to per-sequence targets and then score the
/// sequences. The GRU is the real implementation; tests substitute oracles.
pub trait SequenceScorer {
    /// Loss at the current parameters; gradients are kept for [`Self::apply_step`].
    fn loss(&mut self, batch: &SequenceBatch, targets: &[f64]) -> Result<f64>;
    fn apply_step(&mut self) -> Result<()>;
    fn predict(&self, batch: &SequenceBatch) -> Result<Vec<f64>>;
}

/// GRU plus its optimizer state.
#[derive(Debug, Clone)]
pub struct GruScorer {
    pub model: GruModel,
    pub optimizer: OptimizerState,
    grads: Option<GruModel>,
}

impl GruScorer {
    pub fn new(input_size: usize, hyper: &SelectorHyper, seed: u64) -> Result<Self> {
        hyper.validate()?;
        let model = GruModel::init(input_size, hyper.hidden_size, hyper.layers, seed)?;
        let shapes: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
        Ok(GruScorer {
            model,
            optimizer: OptimizerState::new(hyper.optimizer, &shapes),
            grads: None,
        })
    }
}

impl SequenceScorer for GruScorer {
    fn loss(&mut self, batch: &SequenceBatch, targets: &[f64]) -> Result<f64> {
        let (loss, grads) = loss_and_gradients(&self.model, batch, targets)?;
        self.grads = Some(grads);
        Ok(loss)
    }

    fn apply_step(&mut self) -> Result<()> {
        let grads = self
            .grads
            .take()
            .ok_or_else(|| Error::invalid("apply_step called before loss"))?;
        self.optimizer.step(self.model.tensors_mut(), grads.tensors())
    }

    fn predict(&self, batch: &SequenceBatch) -> Result<Vec<f64>> {
        predict(&self.model, batch)
    }
}

/// Mutable state of one sequential selection run.
#[derive(Debug, Clone)]
pub struct SelectionState {
    table: MetricTable,
    completeness: CompletenessMatrix,
    batch: SequenceBatch,
    selected_rows: Vec<usize>,
    taken: Vec<bool>,
    covered: CoverageSet,
    pub k: usize,
    pub weights: Weights,
    pub max_loops: usize,
}

impl SelectionState {
    pub fn new(table: MetricTable, k: usize, weights: Weights, max_loops: usize) -> Result<Self> {
        weights.total()?;
        if k == 0 || k > table.len() {
            return Err(Error::invalid(format!(
                "k = {k} must lie in 1..={} (surviving candidates)",
                table.len()
            )));
        }
        if max_loops == 0 {
            return Err(Error::invalid("max_loops must be positive"));
        }
        let completeness = table_matrix(&table)?;
        let batch = SequenceBatch::new(feature_table(&table))?;
        let covered = CoverageSet::new(&completeness);
        let n = table.len();
        Ok(SelectionState {
            table,
            completeness,
            batch,
            selected_rows: Vec::new(),
            taken: vec![false; n],
            covered,
            k,
            weights,
            max_loops,
        })
    }

    pub fn table(&self) -> &MetricTable {
        &self.table
    }

    pub fn batch(&self) -> &SequenceBatch {
        &self.batch
    }

    pub fn selected_ids(&self) -> Vec<usize> {
        self.selected_rows.iter().map(|&r| self.table.rows[r].candidate_id).collect()
    }

    pub fn coverage(&self) -> f64 {
        self.covered.fraction()
    }

    pub fn is_done(&self) -> bool {
        self.selected_rows.len() >= self.k
    }

    pub fn targets(&self) -> Result<Vec<f64>> {
        compute_targets(&self.table, &self.completeness, &self.selected_rows, &self.weights)
    }

    fn commit(&mut self, row: usize) {
        self.selected_rows.push(row);
        self.taken[row] = true;
        self.covered.add_row(&self.completeness, row);
        self.batch.push_winner(row, &self.taken);
    }
}

/// Trains `scorer` until the loss rises above the previous loop's or
/// `max_loops` losses have been evaluated, then commits the best-scored
/// unselected candidate.
pub fn run_iteration<S: SequenceScorer>(state: &mut SelectionState, scorer: &mut S) -> Result<IterationLog> {
    if state.is_done() || state.taken.iter().all(|&t| t) {
        return Err(Error::Exhausted);
    }
    let targets = state.targets()?;
    let mut curve = Vec::with_capacity(state.max_loops);
    let mut stop = StopReason::MaxLoops;
    for _ in 0..state.max_loops {
        let loss = scorer.loss(&state.batch, &targets)?;
        if !loss.is_finite() {
            return Err(Error::invalid(format!("training loss became {loss}")));
        }
        let rose = curve.last().is_some_and(|&prev| loss > prev);
        curve.push(loss);
        if rose {
            stop = StopReason::LossIncrease;
            break;
        }
        scorer.apply_step()?;
    }
    let probs = scorer.predict(&state.batch)?;
    let row = argmax_free(&probs, &state.taken).expect("an unselected candidate exists");
    state.commit(row);
    Ok(IterationLog {
        chosen_id: state.table.rows[row].candidate_id,
        loss_curve: curve,
        coverage: state.coverage(),
        stop_reason: stop,
    })
}

/// Runs `k` GRU-driven iterations from a freshly seeded model.
pub fn optimize_trajectory(table: &MetricTable, k: usize, hyper: &SelectorHyper, seed: u64) -> Result<SelectionLog> {
    hyper.validate()?;
    let mut state = SelectionState::new(table.clone(), k, hyper.weights, hyper.max_loops)?;
    let mut scorer = GruScorer::new(table.m + 2, hyper, seed)?;
    let mut iterations = Vec::with_capacity(k);
    while !state.is_done() {
        iterations.push(run_iteration(&mut state, &mut scorer)?);
    }
    Ok(SelectionLog {
        method: "gru".into(),
        seed: Some(seed),
        iterations,
        selected_ids: state.selected_ids(),
    })
}

/// Repeatedly takes the argmax of [`compute_targets`].
pub fn greedy_select(table: &MetricTable, k: usize, weights: &Weights) -> Result<SelectionLog> {
    let mut state = SelectionState::new(table.clone(), k, *weights, 1)?;
    let mut iterations = Vec::with_capacity(k);
    while !state.is_done() {
        let scores = state.targets()?;
        let row = argmax_free(&scores, &state.taken).ok_or(Error::Exhausted)?;
        state.commit(row);
        iterations.push(IterationLog {
            chosen_id: state.table.rows[row].candidate_id,
            loss_curve: Vec::new(),
            coverage: state.coverage(),
            stop_reason: StopReason::Greedy,
        });
    }
    Ok(SelectionLog {
        method: "greedy".into(),
        seed: None,
        iterations,
        selected_ids: state.selected_ids(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::PixelRect;
    use crate::metrics::{MetricRow, Range};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn table_from(bits: &[Vec<bool>], pi: &[f64], cnr: &[f64]) -> MetricTable {
        let m = bits[0].len();
        let rows = bits
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let mut words = vec![0u64; m.div_ceil(64)];
                for (j, &on) in b.iter().enumerate() {
                    if on {
                        words[j / 64] |= 1u64 << (j % 64);
                    }
                }
                MetricRow {
                    candidate_id: 10 * i + 3,
                    min_roi: 0.5,
                    pixel_intensity: pi[i],
                    cnr: cnr[i],
                    pixel_intensity_norm: pi[i],
                    cnr_norm: cnr[i],
                    completeness_bits: words,
                }
            })
            .collect();
        MetricTable {
            rows,
            alpha: 0.0,
            m,
            pixel_intensity_range: Range { min: 0.0, max: 1.0 },
            cnr_range: Range { min: 0.0, max: 1.0 },
            background: PixelRect { row0: 0, col0: 0, rows: 1, cols: 1 },
        }
    }

    fn random_table(seed: u64, n: usize, m: usize, density: f64) -> MetricTable {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bits: Vec<Vec<bool>> = (0..n).map(|_| (0..m).map(|_| rng.random_bool(density)).collect()).collect();
        let pi: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let cnr: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        table_from(&bits, &pi, &cnr)
    }

    fn coverage_of(table: &MetricTable, ids: &[usize]) -> f64 {
        table_matrix(table).unwrap().coverage(ids).unwrap()
    }

    #[test]
    fn target_examples() {
        let t = table_from(
            &[vec![true, true, false], vec![false, false, true], vec![false, false, false]],
            &[1.0, 0.0, 0.3],
            &[1.0, 0.0, 0.3],
        );
        let c = table_matrix(&t).unwrap();
        let s = compute_targets(&t, &c, &[], &Weights::default()).unwrap();
        assert_eq!(s[0], 1.0);
        assert!((s[1] - 16.0 * 0.5 / 18.0).abs() < 1e-12);
        assert!((s[2] - 0.6 / 18.0).abs() < 1e-12);
        let s = compute_targets(&t, &c, &[0], &Weights::default()).unwrap();
        assert_eq!(s[0], 0.0);
        assert!((s[1] - 16.0 / 18.0).abs() < 1e-12);
        // nothing left to gain: coverage term vanishes
        let s = compute_targets(&t, &c, &[0, 1], &Weights::default()).unwrap();
        assert!((s[2] - 0.6 / 18.0).abs() < 1e-12);
        assert!(compute_targets(&t, &c, &[], &Weights { pixel_intensity: 0.0, cnr: 0.0, coverage: 0.0 }).is_err());
    }

    #[test]
    fn greedy_on_disjoint_rows() {
        let m = 6;
        let bits: Vec<Vec<bool>> = (0..m).map(|i| (0..m).map(|j| i == j).collect()).collect();
        let t = table_from(&bits, &[0.0; 6], &[0.0; 6]);
        for k in 1..=m {
            let log = greedy_select(&t, k, &Weights::coverage_only()).unwrap();
            assert_eq!(log.selected_ids.len(), k);
            assert!((log.iterations.last().unwrap().coverage - k as f64 / m as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_ties_go_to_lowest_id() {
        let bits = vec![vec![true, false], vec![true, false], vec![false, true]];
        let t = table_from(&bits, &[0.0; 3], &[0.0; 3]);
        let log = greedy_select(&t, 3, &Weights::coverage_only()).unwrap();
        assert_eq!(log.selected_ids, vec![3, 23, 13]);
    }

    fn best_triple(t: &MetricTable) -> f64 {
        let ids = t.ids();
        let mut best: f64 = 0.0;
        for a in 0..ids.len() {
            for b in a + 1..ids.len() {
                for c in b + 1..ids.len() {
                    best = best.max(coverage_of(t, &[ids[a], ids[b], ids[c]]));
                }
            }
        }
        best
    }

    #[test]
    fn greedy_within_one_minus_inverse_e_of_optimum() {
        for seed in 0..10 {
            let t = random_table(seed, 12, 16, 0.25);
            let greedy = greedy_select(&t, 3, &Weights::coverage_only()).unwrap();
            let g = greedy.iterations.last().unwrap().coverage;
            assert!(g >= (1.0 - (-1.0f64).exp()) * best_triple(&t) - 1e-12, "seed {seed}");
        }
    }

    #[test]
    fn greedy_coverage_is_monotone_in_k() {
        let t = random_table(4, 20, 40, 0.1);
        let log = greedy_select(&t, 20, &Weights::default()).unwrap();
        let cov: Vec<f64> = log.iterations.iter().map(|i| i.coverage).collect();
        assert!(cov.windows(2).all(|w| w[1] >= w[0]));
        assert!(greedy_select(&t, 21, &Weights::default()).is_err());
        assert!(greedy_select(&t, 0, &Weights::default()).is_err());
    }

    /// Returns the targets it was last trained on as its predictions.
    struct Oracle {
        targets: Vec<f64>,
        loops: usize,
    }

    impl SequenceScorer for Oracle {
        fn loss(&mut self, _: &SequenceBatch, targets: &[f64]) -> Result<f64> {
            self.targets = targets.to_vec();
            self.loops += 1;
            Ok(1.0 / self.loops as f64)
        }
        fn apply_step(&mut self) -> Result<()> {
            Ok(())
        }
        fn predict(&self, _: &SequenceBatch) -> Result<Vec<f64>> {
            Ok(self.targets.clone())
        }
    }

    #[test]
    fn oracle_scorer_reproduces_greedy() {
        let t = random_table(8, 15, 30, 0.2);
        let w = Weights { pixel_intensity: 0.0, cnr: 0.0, coverage: 16.0 };
        let greedy = greedy_select(&t, 6, &w).unwrap();
        let mut state = SelectionState::new(t, 6, w, 34).unwrap();
        let mut oracle = Oracle { targets: Vec::new(), loops: 0 };
        let mut ids = Vec::new();
        while !state.is_done() {
            let log = run_iteration(&mut state, &mut oracle).unwrap();
            assert_eq!(log.stop_reason, StopReason::MaxLoops);
            assert_eq!(log.loss_curve.len(), 34);
            ids.push(log.chosen_id);
        }
        assert_eq!(ids, greedy.selected_ids);
        assert!(matches!(run_iteration(&mut state, &mut oracle), Err(Error::Exhausted)));
    }

    /// Loss rises on the third evaluation.
    struct Bumpy {
        calls: usize,
        steps: usize,
    }

    impl SequenceScorer for Bumpy {
        fn loss(&mut self, _: &SequenceBatch, _: &[f64]) -> Result<f64> {
            self.calls += 1;
            Ok([0.9, 0.5, 0.7, 0.1][self.calls - 1])
        }
        fn apply_step(&mut self) -> Result<()> {
            self.steps += 1;
            Ok(())
        }
        fn predict(&self, b: &SequenceBatch) -> Result<Vec<f64>> {
            Ok((0..b.batches()).map(|i| i as f64).collect())
        }
    }

    #[test]
    fn training_stops_when_loss_rises() {
        let t = random_table(1, 4, 8, 0.5);
        let mut state = SelectionState::new(t, 2, Weights::default(), 34).unwrap();
        let mut s = Bumpy { calls: 0, steps: 0 };
        let log = run_iteration(&mut state, &mut s).unwrap();
        assert_eq!(log.loss_curve, vec![0.9, 0.5, 0.7]);
        assert_eq!(log.stop_reason, StopReason::LossIncrease);
        assert_eq!(s.steps, 2);
        assert_eq!(log.chosen_id, 33);
    }

    #[test]
    fn last_candidate_is_taken_regardless() {
        let t = random_table(2, 3, 8, 0.5);
        let mut state = SelectionState::new(t, 3, Weights::default(), 2).unwrap();
        let mut s = GruScorer::new(10, &SelectorHyper { hidden_size: 4, layers: 1, ..SelectorHyper::desk() }, 0).unwrap();
        let mut seen = Vec::new();
        for _ in 0..3 {
            seen.push(run_iteration(&mut state, &mut s).unwrap().chosen_id);
        }
        seen.sort();
        assert_eq!(seen, vec![3, 13, 23]);
    }

    #[test]
    fn batches_grow_and_mask() {
        let t = random_table(3, 5, 8, 0.5);
        let mut state = SelectionState::new(t, 3, Weights::default(), 3).unwrap();
        let mut s = GruScorer::new(10, &SelectorHyper { hidden_size: 4, layers: 1, ..SelectorHyper::desk() }, 0).unwrap();
        for it in 0..3 {
            run_iteration(&mut state, &mut s).unwrap();
            assert_eq!(state.batch().seq_len(), it + 2);
        }
        for &r in &state.selected_rows {
            for t in 0..state.batch().seq_len() {
                assert!(state.batch().row(t, r).iter().all(|&x| x == 0.0));
            }
        }
    }

    fn small_hyper() -> SelectorHyper {
        SelectorHyper {
            hidden_size: 8,
            layers: 2,
            max_loops: 10,
            ..SelectorHyper::desk()
        }
    }

    #[test]
    fn optimize_is_deterministic_and_distinct() {
        let t = random_table(5, 25, 32, 0.15);
        let a = optimize_trajectory(&t, 8, &small_hyper(), 42).unwrap();
        let b = optimize_trajectory(&t, 8, &small_hyper(), 42).unwrap();
        assert_eq!(a, b);
        let mut ids = a.selected_ids.clone();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 8);
        let cov: Vec<f64> = a.iterations.iter().map(|i| i.coverage).collect();
        assert!(cov.windows(2).all(|w| w[1] >= w[0]));
        for it in &a.iterations {
            assert!(!it.loss_curve.is_empty() && it.loss_curve.len() <= 10);
            assert!(it.loss_curve.iter().all(|l| l.is_finite()));
        }
        assert!(optimize_trajectory(&t, 26, &small_hyper(), 42).is_err());
    }

    #[test]
    fn single_pick_coverage_is_popcount_fraction() {
        let t = random_table(6, 10, 20, 0.3);
        let log = optimize_trajectory(&t, 1, &small_hyper(), 1).unwrap();
        let id = log.selected_ids[0];
        let row = t.rows.iter().find(|r| r.candidate_id == id).unwrap();
        assert!((log.iterations[0].coverage - row.popcount() as f64 / 20.0).abs() < 1e-12);
    }

    #[test]
    fn log_round_trip() {
        let t = random_table(7, 6, 8, 0.4);
        let log = greedy_select(&t, 3, &Weights::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sel.json");
        log.save(&p).unwrap();
        assert_eq!(SelectionLog::load(&p).unwrap(), log);
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("\"stop_reason\": \"greedy\""));
    }

    #[test]
    fn feature_rows_carry_metrics_and_bits() {
        let t = table_from(&[vec![true, false, true], vec![false, true, false]], &[0.25, 1.0], &[0.5, 0.0]);
        assert_eq!(feature_row(&t, 0), vec![0.25, 0.5, 1.0, 0.0, 1.0]);
        assert_eq!(feature_table(&t).dim(), (2, 5));
    }
}
