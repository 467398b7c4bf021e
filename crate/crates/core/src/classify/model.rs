//! Fully-connected classifier trained with Balanced Softmax.

use crate::error::{Error, Result};
use crate::numeric::tape::log_sum_exp;
use crate::numeric::{Adam, AdamConfig, Matrix, NodeId, RngStream, Tape};

/// `x → relu(x W1 + b1) → relu(· W2 + b2) → · W3 + b3`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierModel {
    pub params: Vec<Matrix>,
    /// Train-split class frequencies.
    pub prior: Vec<f64>,
}

impl ClassifierModel {
    pub fn new(
        inputs: usize,
        hidden: [usize; 2],
        prior: Vec<f64>,
        rng: &mut RngStream,
    ) -> Result<Self> {
        validate_prior(&prior)?;
        let classes = prior.len();
        let dims = [inputs, hidden[0], hidden[1], classes];
        let mut params = Vec::with_capacity(6);
        for w in dims.windows(2) {
            let bound = (6.0 / w[0] as f64).sqrt();
            params.push(Matrix::from_fn(w[0], w[1], |_, _| {
                rng.uniform_range(-bound, bound)
            }));
            params.push(Matrix::zeros(1, w[1]));
        }
        Ok(Self { params, prior })
    }

    pub fn num_classes(&self) -> usize {
        self.prior.len()
    }

    pub fn inputs(&self) -> usize {
        self.params[0].rows()
    }

    pub fn log_prior(&self) -> Vec<f64> {
        self.prior.iter().map(|p| p.ln()).collect()
    }

    pub fn record_logits(&self, tape: &mut Tape, params: &[NodeId], x: &Matrix) -> Result<NodeId> {
        let xin = tape.constant(x.clone());
        let a1 = tape.affine(xin, params[0], params[1])?;
        let h1 = tape.relu(a1);
        let a2 = tape.affine(h1, params[2], params[3])?;
        let h2 = tape.relu(a2);
        tape.affine(h2, params[4], params[5])
    }

    /// Raw logits, one row per input row.
    pub fn logits(&self, x: &Matrix) -> Result<Matrix> {
        let mut h = x.clone();
        for (layer, pair) in self.params.chunks(2).enumerate() {
            h = h.matmul(&pair[0])?;
            let last = layer == 2;
            for r in 0..h.rows() {
                for (v, &b) in h.row_mut(r).iter_mut().zip(pair[1].data()) {
                    *v += b;
                    if !last {
                        *v = v.max(0.0);
                    }
                }
            }
        }
        Ok(h)
    }

    /// Arg-max over raw logits (no prior adjustment at inference).
    pub fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        let logits = self.logits(x)?;
        Ok((0..logits.rows()).map(|r| argmax(logits.row(r))).collect())
    }

    /// Mean Balanced Softmax loss on a batch and its parameter gradients.
    pub fn loss_and_gradients(&self, x: &Matrix, labels: &[usize]) -> Result<(f64, Vec<Matrix>)> {
        let mut tape = Tape::new();
        let ids: Vec<NodeId> = self.params.iter().map(|p| tape.var(p.clone())).collect();
        let logits = self.record_logits(&mut tape, &ids, x)?;
        let loss = tape.cross_entropy(logits, labels, Some(&self.log_prior()))?;
        let mut grads = tape.backward(loss)?;
        let g = ids
            .iter()
            .zip(&self.params)
            .map(|(&id, p)| {
                grads
                    .take(id)
                    .unwrap_or_else(|| Matrix::zeros(p.rows(), p.cols()))
            })
            .collect();
        Ok((tape.value(loss).as_scalar().unwrap_or(f64::NAN), g))
    }

    /// Mean Balanced Softmax loss without gradients.
    pub fn loss(&self, x: &Matrix, labels: &[usize]) -> Result<f64> {
        let logits = self.logits(x)?;
        let mut total = 0.0;
        for (r, &y) in labels.iter().enumerate() {
            total += balanced_softmax_loss(logits.row(r), y, &self.prior)?;
        }
        Ok(total / labels.len().max(1) as f64)
    }
}

pub const CLASSIFIER_MAGIC: &[u8; 4] = b"LTCM";

impl ClassifierModel {
    /// `"LTCM"`, u32 classes, C × f64 prior, u32 layer count, then per
    /// matrix u32 rows, u32 cols and the f64 entries; CRC32 footer.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CLASSIFIER_MAGIC);
        out.extend_from_slice(&(self.prior.len() as u32).to_le_bytes());
        for p in &self.prior {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for m in &self.params {
            out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != CLASSIFIER_MAGIC {
            return Err(Error::Format("missing LTCM magic".into()));
        }
        if bytes.len() < 8 {
            return Err(Error::Corruption("classifier file too short".into()));
        }
        let (body, footer) = bytes.split_at(bytes.len() - 4);
        if crc32fast::hash(body) != u32::from_le_bytes(footer.try_into().unwrap()) {
            return Err(Error::Corruption("classifier CRC mismatch".into()));
        }
        let mut r = Reader {
            bytes: body,
            pos: 4,
        };
        let classes = r.u32()?;
        let prior = (0..classes).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        validate_prior(&prior)?;
        let layers = r.u32()?;
        if layers != 6 {
            return Err(Error::Model(format!(
                "expected 6 parameter matrices, found {layers}"
            )));
        }
        let mut params = Vec::with_capacity(layers);
        for _ in 0..layers {
            let rows = r.u32()?;
            let cols = r.u32()?;
            let data = (0..rows * cols)
                .map(|_| r.f64())
                .collect::<Result<Vec<_>>>()?;
            params.push(Matrix::new(rows, cols, data)?);
        }
        if r.pos != body.len() {
            return Err(Error::Corruption(
                "trailing bytes after classifier parameters".into(),
            ));
        }
        if params[4].cols() != classes {
            return Err(Error::Model(
                "output width disagrees with prior length".into(),
            ));
        }
        Ok(Self { params, prior })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let chunk = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Corruption("truncated classifier file".into()))?;
        self.pos += n;
        Ok(chunk)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

pub fn validate_prior(prior: &[f64]) -> Result<()> {
    if prior.is_empty() {
        return Err(Error::Contract("empty class prior".into()));
    }
    if let Some(p) = prior.iter().find(|&&p| !(p > 0.0 && p.is_finite())) {
        return Err(Error::Contract(format!(
            "class prior entry {p} must be > 0"
        )));
    }
    Ok(())
}

/// Class frequencies normalised to sum to one.
pub fn prior_from_counts(counts: &[usize]) -> Result<Vec<f64>> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Err(Error::Contract("no training samples".into()));
    }
    let prior: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    validate_prior(&prior)?;
    Ok(prior)
}

/// Cross-entropy on prior-adjusted logits `z_c + log π_c`.
pub fn balanced_softmax_loss(logits: &[f64], label: usize, prior: &[f64]) -> Result<f64> {
    validate_prior(prior)?;
    if logits.len() != prior.len() {
        return Err(Error::Shape(format!(
            "{} logits for {} classes",
            logits.len(),
            prior.len()
        )));
    }
    if label >= logits.len() {
        return Err(Error::Contract(format!("label {label} out of range")));
    }
    let adjusted: Vec<f64> = logits.iter().zip(prior).map(|(z, p)| z + p.ln()).collect();
    Ok(log_sum_exp(&adjusted) - adjusted[label])
}

/// Model plus optimizer state; the unit copied between RL-CAS episodes.
#[derive(Clone, Debug)]
pub struct ClassifierState {
    pub model: ClassifierModel,
    pub optimizer: Adam,
}

impl ClassifierState {
    pub fn new(model: ClassifierModel, config: AdamConfig) -> Self {
        let optimizer = Adam::new(config, &model.params);
        Self { model, optimizer }
    }

    /// One optimizer step on a batch; returns the pre-step loss.
    pub fn step(&mut self, x: &Matrix, labels: &[usize]) -> Result<f64> {
        let (loss, grads) = self.model.loss_and_gradients(x, labels)?;
        if loss.is_finite() {
            self.optimizer.step(&mut self.model.params, &grads);
        }
        Ok(loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_prior_equal_logits_is_ln2() {
        let l = balanced_softmax_loss(&[1.0, 1.0], 0, &[0.5, 0.5]).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn head_prior_shifts_by_log_ratio() {
        let prior = [0.9, 0.1];
        let l0 = balanced_softmax_loss(&[0.0, 0.0], 0, &prior).unwrap();
        let l1 = balanced_softmax_loss(&[0.0, 0.0], 1, &prior).unwrap();
        // adjusted logit gap = log 0.9 − log 0.1 = log 9
        assert!(((l1 - l0) - 9f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn uniform_prior_is_plain_cross_entropy() {
        let z = [0.3, -1.2, 2.0];
        let plain = log_sum_exp(&z) - z[2];
        let bal = balanced_softmax_loss(&z, 2, &[1.0 / 3.0; 3]).unwrap();
        assert!((plain - bal).abs() < 1e-12);
    }

    #[test]
    fn zero_prior_rejected() {
        assert!(matches!(
            balanced_softmax_loss(&[0.0, 0.0], 0, &[1.0, 0.0]),
            Err(Error::Contract(_))
        ));
        assert!(prior_from_counts(&[3, 0]).is_err());
    }

    #[test]
    fn tape_and_direct_logits_agree() {
        let m = ClassifierModel::new(5, [4, 3], vec![0.5, 0.3, 0.2], &mut RngStream::new(0, 0))
            .unwrap();
        let mut rng = RngStream::new(1, 0);
        let x = Matrix::from_fn(6, 5, |_, _| rng.normal());
        let mut tape = Tape::new();
        let ids: Vec<_> = m.params.iter().map(|p| tape.constant(p.clone())).collect();
        let z = m.record_logits(&mut tape, &ids, &x).unwrap();
        assert!(tape.value(z).max_abs_diff(&m.logits(&x).unwrap()) < 1e-12);
        let labels = [0, 1, 2, 0, 1, 2];
        let (l, _) = m.loss_and_gradients(&x, &labels).unwrap();
        assert!((l - m.loss(&x, &labels).unwrap()).abs() < 1e-12);
    }
}
