//! Multi-layer GRU with a sigmoid readout, trained by full-batch BPTT.
//!
//! Gate blocks are stacked row-wise in the order update `z`, reset `r`,
//! candidate `h′`, so `w` is `3H × in`, `u` is `3H × H` and `b` has `3H`
//! entries. The state update is `h = (1 − z)·h_prev + z·h′`.

use std::io::Write;
use std::path::Path;

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Probabilities are clamped to `[BCE_CLAMP, 1 − BCE_CLAMP]` inside the loss.
pub const BCE_CLAMP: f64 = 1e-7;

const MAGIC: &[u8; 4] = b"CTGR";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct GruLayer {
    pub w: Array2<f64>,
    pub u: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruModel {
    input_size: usize,
    hidden_size: usize,
    pub layers: Vec<GruLayer>,
    pub readout_w: Array1<f64>,
    /// Single-element array so every parameter is a flat tensor.
    pub readout_b: Array1<f64>,
}

impl GruModel {
    pub fn zeros(input_size: usize, hidden_size: usize, layers: usize) -> Result<Self> {
        if input_size == 0 || hidden_size == 0 || layers == 0 {
            return Err(Error::invalid(format!(
                "GRU sizes must be positive (input {input_size}, hidden {hidden_size}, layers {layers})"
            )));
        }
        let layer = |inp: usize| GruLayer {
            w: Array2::zeros((3 * hidden_size, inp)),
            u: Array2::zeros((3 * hidden_size, hidden_size)),
            b: Array1::zeros(3 * hidden_size),
        };
        Ok(GruModel {
            input_size,
            hidden_size,
            layers: (0..layers)
                .map(|l| layer(if l == 0 { input_size } else { hidden_size }))
                .collect(),
            readout_w: Array1::zeros(hidden_size),
            readout_b: Array1::zeros(1),
        })
    }

    /// Every parameter uniform in `[−1/√H, 1/√H]`.
    pub fn init(input_size: usize, hidden_size: usize, layers: usize, seed: u64) -> Result<Self> {
        let mut model = Self::zeros(input_size, hidden_size, layers)?;
        let a = 1.0 / (hidden_size as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in model.tensors_mut() {
            for x in t.iter_mut() {
                *x = rng.random_range(-a..=a);
            }
        }
        Ok(model)
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Parameter tensors in a fixed order: per layer `w, u, b`, then the readout.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &self.layers {
            out.push(l.w.as_slice().expect("standard layout"));
            out.push(l.u.as_slice().expect("standard layout"));
            out.push(l.b.as_slice().expect("standard layout"));
        }
        out.push(self.readout_w.as_slice().expect("standard layout"));
        out.push(self.readout_b.as_slice().expect("standard layout"));
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::with_capacity(3 * self.layers.len() + 2);
        for l in &mut self.layers {
            out.push(l.w.as_slice_mut().expect("standard layout"));
            out.push(l.u.as_slice_mut().expect("standard layout"));
            out.push(l.b.as_slice_mut().expect("standard layout"));
        }
        out.push(self.readout_w.as_slice_mut().expect("standard layout"));
        out.push(self.readout_b.as_slice_mut().expect("standard layout"));
        out
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.input_size, self.hidden_size, self.layers.len()).expect("sizes already validated")
    }

    /// Flat little-endian checkpoint: magic, version, input, hidden, layers,
    /// then every tensor in [`GruModel::tensors`] order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::with_capacity(32 + 8 * self.num_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for n in [self.input_size, self.hidden_size, self.layers.len()] {
            out.extend_from_slice(&(n as u64).to_le_bytes());
        }
        for t in self.tensors() {
            for x in t {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 32 || &bytes[..4] != MAGIC {
            return Err(Error::format(path, "not a GRU checkpoint"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(Error::format(path, format!("unsupported version {version}")));
        }
        let word = |i: usize| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap()) as usize;
        let mut model = Self::zeros(word(0), word(1), word(2)).map_err(|e| Error::format(path, e.to_string()))?;
        let body = &bytes[32..];
        if body.len() != 8 * model.num_params() {
            return Err(Error::format(
                path,
                format!("expected {} parameter bytes, found {}", 8 * model.num_params(), body.len()),
            ));
        }
        let mut chunks = body.chunks_exact(8);
        for t in model.tensors_mut() {
            for x in t.iter_mut() {
                *x = f64::from_le_bytes(chunks.next().unwrap().try_into().unwrap());
            }
        }
        Ok(model)
    }
}

/// Equal-length sequences over a shared feature table. Step `t` of batch `b`
/// is row `steps[t][b]` of the table; the table's last row is all zeros and
/// stands for a masked entry.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceBatch {
    features: Array2<f64>,
    steps: Vec<Vec<usize>>,
}

impl SequenceBatch {
    /// One sequence per feature row, each starting with its own row.
    pub fn new(features: Array2<f64>) -> Result<Self> {
        let n = features.nrows();
        let steps = vec![(0..n).collect()];
        Self::from_steps(features, steps)
    }

    /// `features` excludes the zero row; an index equal to `features.nrows()`
    /// selects it.
    pub fn from_steps(features: Array2<f64>, steps: Vec<Vec<usize>>) -> Result<Self> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(Error::invalid("feature table is empty"));
        }
        if !features.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("features must be finite"));
        }
        let n = features.nrows();
        let b = steps.first().map_or(0, |s| s.len());
        if b == 0 {
            return Err(Error::invalid("no sequences"));
        }
        for s in &steps {
            if s.len() != b {
                return Err(Error::invalid("every step must cover the same batches"));
            }
            if let Some(&bad) = s.iter().find(|&&i| i > n) {
                return Err(Error::invalid(format!("feature index {bad} out of range")));
            }
        }
        let mut table = Array2::zeros((n + 1, features.ncols()));
        table.slice_mut(s![..n, ..]).assign(&features);
        Ok(SequenceBatch { features: table, steps })
    }

    pub fn batches(&self) -> usize {
        self.steps[0].len()
    }

    pub fn seq_len(&self) -> usize {
        self.steps.len()
    }

    pub fn feature_size(&self) -> usize {
        self.features.ncols()
    }

    pub fn zero_row(&self) -> usize {
        self.features.nrows() - 1
    }

    pub fn steps(&self) -> &[Vec<usize>] {
        &self.steps
    }

    /// Feature vector at step `t` of batch `b`.
    pub fn row(&self, t: usize, b: usize) -> Vec<f64> {
        self.features.row(self.steps[t][b]).to_vec()
    }

    /// Appends `winner`'s feature row to every unmasked sequence, then masks
    /// the winner's own sequence across all steps.
    pub fn push_winner(&mut self, winner: usize, masked: &[bool]) {
        let zero = self.zero_row();
        let next = (0..self.batches())
            .map(|b| if masked[b] || b == winner { zero } else { winner })
            .collect();
        self.steps.push(next);
        for s in &mut self.steps {
            s[winner] = zero;
        }
    }

    fn input(&self, t: usize) -> Array2<f64> {
        self.features.select(Axis(0), &self.steps[t])
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct StepCache {
    hp: Array2<f64>,
    z: Array2<f64>,
    r: Array2<f64>,
    hc: Array2<f64>,
}

struct Forward {
    /// `inputs[l][t]` feeds layer `l` at step `t`.
    inputs: Vec<Vec<Array2<f64>>>,
    caches: Vec<Vec<StepCache>>,
    top: Array2<f64>,
    logits: Array1<f64>,
}

fn check_shapes(model: &GruModel, batch: &SequenceBatch) -> Result<()> {
    if batch.feature_size() != model.input_size {
        return Err(Error::invalid(format!(
            "feature length {} does not match model input size {}",
            batch.feature_size(),
            model.input_size
        )));
    }
    Ok(())
}

fn forward(model: &GruModel, batch: &SequenceBatch, keep: bool) -> Forward {
    let (bn, h, t_len) = (batch.batches(), model.hidden_size, batch.seq_len());
    let mut inputs: Vec<Vec<Array2<f64>>> = Vec::new();
    let mut caches = Vec::new();
    let mut xs: Vec<Array2<f64>> = (0..t_len).map(|t| batch.input(t)).collect();
    for layer in &model.layers {
        let u_zr = layer.u.slice(s![..2 * h, ..]);
        let u_h = layer.u.slice(s![2 * h.., ..]);
        let mut hp = Array2::<f64>::zeros((bn, h));
        let mut outs = Vec::with_capacity(t_len);
        let mut layer_cache = Vec::new();
        for x in &xs {
            let mut a = x.dot(&layer.w.t());
            a += &layer.b;
            let mut a_zr = a.slice(s![.., ..2 * h]).to_owned();
            a_zr += &hp.dot(&u_zr.t());
            let zr = a_zr.mapv(sigmoid);
            let z = zr.slice(s![.., ..h]).to_owned();
            let r = zr.slice(s![.., h..]).to_owned();
            let rh = &r * &hp;
            let mut a_h = a.slice(s![.., 2 * h..]).to_owned();
            a_h += &rh.dot(&u_h.t());
            let hc = a_h.mapv(f64::tanh);
            let mut hn = hp.clone();
            Zip::from(&mut hn).and(&z).and(&hc).for_each(|o, &z, &c| *o = (1.0 - z) * *o + z * c);
            if keep {
                layer_cache.push(StepCache { hp, z, r, hc });
            }
            outs.push(hn.clone());
            hp = hn;
        }
        if keep {
            inputs.push(std::mem::replace(&mut xs, outs));
        } else {
            xs = outs;
        }
        caches.push(layer_cache);
    }
    let top = xs.pop().expect("sequence is nonempty");
    let logits = top.dot(&model.readout_w) + model.readout_b[0];
    Forward { inputs, caches, top, logits }
}

/// Probability per batch.
pub fn predict(model: &GruModel, batch: &SequenceBatch) -> Result<Vec<f64>> {
    check_shapes(model, batch)?;
    Ok(forward(model, batch, false).logits.iter().map(|&a| sigmoid(a)).collect())
}

/// Mean clamped binary cross entropy.
pub fn bce(probs: &[f64], targets: &[f64]) -> f64 {
    let n = probs.len() as f64;
    probs
        .iter()
        .zip(targets)
        .map(|(&p, &y)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        })
        .sum::<f64>()
        / n
}

/// Loss and exact gradients by backpropagation through time. Gradients are
/// returned in a model-shaped container.
pub fn loss_and_gradients(model: &GruModel, batch: &SequenceBatch, targets: &[f64]) -> Result<(f64, GruModel)> {
    check_shapes(model, batch)?;
    if targets.len() != batch.batches() {
        return Err(Error::invalid(format!(
            "{} targets for {} batches",
            targets.len(),
            batch.batches()
        )));
    }
    if let Some(y) = targets.iter().find(|y| !(0.0..=1.0).contains(*y)) {
        return Err(Error::invalid(format!("targets must lie in [0, 1], got {y}")));
    }
    let h = model.hidden_size;
    let bn = batch.batches();
    let fw = forward(model, batch, true);
    let probs: Vec<f64> = fw.logits.iter().map(|&a| sigmoid(a)).collect();
    let loss = bce(&probs, targets);

    let mut g = model.zeros_like();
    let dlogit = Array1::from_iter(probs.iter().zip(targets).map(|(&p, &y)| {
        if (BCE_CLAMP..=1.0 - BCE_CLAMP).contains(&p) {
            (p - y) / bn as f64
        } else {
            0.0
        }
    }));
    g.readout_w = fw.top.t().dot(&dlogit);
    g.readout_b[0] = dlogit.sum();

    let t_len = batch.seq_len();
    // Gradient w.r.t. each step's output of the layer being processed.
    let mut d_out: Vec<Array2<f64>> = vec![Array2::zeros((bn, h)); t_len];
    d_out[t_len - 1] = dlogit
        .view()
        .insert_axis(Axis(1))
        .dot(&model.readout_w.view().insert_axis(Axis(0)));

    for l in (0..model.layers.len()).rev() {
        let layer = &model.layers[l];
        let gl = &mut g.layers[l];
        let u_zr = layer.u.slice(s![..2 * h, ..]);
        let u_h = layer.u.slice(s![2 * h.., ..]);
        let mut dh_next = Array2::<f64>::zeros((bn, h));
        let mut d_in: Vec<Array2<f64>> = Vec::with_capacity(if l > 0 { t_len } else { 0 });
        for t in (0..t_len).rev() {
            let c = &fw.caches[l][t];
            let x: ArrayView2<f64> = fw.inputs[l][t].view();
            let dh = &d_out[t] + &dh_next;
            let mut da = Array2::<f64>::zeros((bn, 3 * h));
            // update gate and candidate
            let mut dhc = Array2::zeros((bn, h));
            {
                let mut daz = da.slice_mut(s![.., ..h]);
                Zip::from(&mut daz)
                    .and(&mut dhc)
                    .and(&dh)
                    .and(&c.z)
                    .and(&c.hc)
                    .and(&c.hp)
                    .for_each(|daz, dhc, &dh, &z, &hc, &hp| {
                        *daz = dh * (hc - hp) * z * (1.0 - z);
                        *dhc = dh * z * (1.0 - hc * hc);
                    });
            }
            da.slice_mut(s![.., 2 * h..]).assign(&dhc);
            let rh = &c.r * &c.hp;
            gl.u.slice_mut(s![2 * h.., ..]).scaled_add(1.0, &dhc.t().dot(&rh));
            let d_rh = dhc.dot(&u_h);
            {
                let mut dar = da.slice_mut(s![.., h..2 * h]);
                Zip::from(&mut dar)
                    .and(&d_rh)
                    .and(&c.hp)
                    .and(&c.r)
                    .for_each(|dar, &drh, &hp, &r| *dar = drh * hp * r * (1.0 - r));
            }
            let da_zr = da.slice(s![.., ..2 * h]);
            gl.u.slice_mut(s![..2 * h, ..]).scaled_add(1.0, &da_zr.t().dot(&c.hp));
            let mut dhp = da_zr.dot(&u_zr);
            Zip::from(&mut dhp)
                .and(&dh)
                .and(&c.z)
                .and(&d_rh)
                .and(&c.r)
                .for_each(|o, &dh, &z, &drh, &r| *o += dh * (1.0 - z) + drh * r);
            dh_next = dhp;

            gl.w.scaled_add(1.0, &da.t().dot(&x));
            gl.b.scaled_add(1.0, &da.sum_axis(Axis(0)));
            if l > 0 {
                d_in.push(da.dot(&layer.w));
            }
        }
        if l > 0 {
            d_in.reverse();
            d_out = d_in;
        }
    }
    Ok((loss, g))
}
