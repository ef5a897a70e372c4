use serde::{Deserialize, Serialize};

use super::{DcclConfig, DcclError, DcclGrads, DcclState, PerturbTrace};
use crate::encoder::{EncoderModel, HeadParams};
use crate::math;

/// Mean cross-entropy of the domain classifier. Needs at least two domains.
pub fn domain_loss(domain_logits: &[Vec<f64>], domains: &[usize]) -> Result<f64, DcclError> {
    if domain_logits.len() != domains.len() || domains.is_empty() {
        return Err(DcclError::BatchShape);
    }
    if domains.iter().all(|d| *d == domains[0]) {
        return Err(DcclError::SingleDomainBatch);
    }
    Ok(mean_ce(domain_logits, domains))
}

/// InfoNCE over cosine similarities with in-batch negatives:
/// `mean_i [ -S_ii + log Σ_j exp S_ij ]`, `S_ij = cos(z_i, z'_j) / τ`.
pub fn contrastive_loss(z: &[Vec<f64>], z_perturbed: &[Vec<f64>], temperature: f64) -> Result<f64, DcclError> {
    if z.len() != z_perturbed.len() {
        return Err(DcclError::BatchShape);
    }
    if z.len() < 2 {
        return Err(DcclError::BatchTooSmall(z.len()));
    }
    let u: Vec<_> = z.iter().map(|v| normalize(v).0).collect();
    let v: Vec<_> = z_perturbed.iter().map(|v| normalize(v).0).collect();
    Ok(info_nce(&similarities(&u, &v, temperature)))
}

/// Mean `KL(p(h) ‖ p(h + δ))` between clean and perturbed class distributions.
pub fn consistency_loss(clean_logits: &[Vec<f64>], perturbed_logits: &[Vec<f64>]) -> f64 {
    let n = clean_logits.len().max(1) as f64;
    clean_logits.iter().zip(perturbed_logits).map(|(p, q)| math::kl_from_logits(p, q)).sum::<f64>() / n
}

/// Mean cross-entropy of the distortion classifier on clean embeddings.
pub fn classification_loss(logits: &[Vec<f64>], labels: &[usize]) -> f64 {
    mean_ce(logits, labels)
}

fn mean_ce(logits: &[Vec<f64>], targets: &[usize]) -> f64 {
    let n = logits.len().max(1) as f64;
    logits.iter().zip(targets).map(|(l, &t)| math::cross_entropy(l, t)).sum::<f64>() / n
}

const NORM_FLOOR: f64 = 1e-12;

fn normalize(z: &[f64]) -> (Vec<f64>, f64) {
    let n = math::norm(z).max(NORM_FLOOR);
    (z.iter().map(|v| v / n).collect(), n)
}

/// Backward of `u = z / ‖z‖`.
fn normalize_backward(u: &[f64], norm: f64, du: &[f64]) -> Vec<f64> {
    let proj = math::dot(u, du);
    du.iter().zip(u).map(|(g, ui)| (g - ui * proj) / norm).collect()
}

fn similarities(u: &[Vec<f64>], v: &[Vec<f64>], temperature: f64) -> Vec<Vec<f64>> {
    u.iter().map(|ui| v.iter().map(|vj| math::dot(ui, vj) / temperature).collect()).collect()
}

fn info_nce(s: &[Vec<f64>]) -> f64 {
    let n = s.len() as f64;
    s.iter().enumerate().map(|(i, row)| math::log_sum_exp(row) - row[i]).sum::<f64>() / n
}

/// A batch of sentence embeddings with their domain and class indices.
#[derive(Clone, Debug, PartialEq)]
pub struct DcclBatch {
    pub h: Vec<Vec<f64>>,
    /// Lexicon features per example; empty vectors when unused.
    pub extra: Vec<Vec<f64>>,
    pub domains: Vec<usize>,
    pub labels: Vec<usize>,
}

impl DcclBatch {
    pub fn new(h: Vec<Vec<f64>>, domains: Vec<usize>, labels: Vec<usize>) -> Self {
        let extra = vec![Vec::new(); h.len()];
        DcclBatch { h, extra, domains, labels }
    }

    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    fn check(&self) -> Result<(), DcclError> {
        let n = self.h.len();
        if n == 0 || self.extra.len() != n || self.domains.len() != n || self.labels.len() != n {
            return Err(DcclError::BatchShape);
        }
        Ok(())
    }
}

/// The four loss terms and their weighted sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub domain: f64,
    pub consistency: f64,
    pub contrastive: f64,
    pub classification: f64,
}

impl LossBreakdown {
    /// `α·domain + β·consistency + λ·contrastive + classification`.
    pub fn weighted(config: &DcclConfig, domain: f64, consistency: f64, contrastive: f64, classification: f64) -> Self {
        let total = config.alpha * domain + config.beta * consistency + config.lambda * contrastive + classification;
        LossBreakdown { total, domain, consistency, contrastive, classification }
    }
}

/// Forward pass over a batch, kept for backpropagation.
#[derive(Clone, Debug)]
pub struct DcclForward {
    pub perturb: Vec<PerturbTrace>,
    pub h_perturbed: Vec<Vec<f64>>,
    pub domain_logits: Vec<Vec<f64>>,
    pub clean_logits: Vec<Vec<f64>>,
    pub perturbed_logits: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub u_norm: Vec<f64>,
    pub v: Vec<Vec<f64>>,
    pub v_norm: Vec<f64>,
    pub similarities: Vec<Vec<f64>>,
    pub losses: LossBreakdown,
}

/// Parameter gradients and `∂L/∂h` per example from one backward pass.
#[derive(Clone, Debug)]
pub struct DcclBackward {
    pub dh: Vec<Vec<f64>>,
    pub head: HeadParams,
    pub dccl: DcclGrads,
}

fn head_logits(model: &EncoderModel, h: &[f64], extra: &[f64]) -> Result<Vec<f64>, DcclError> {
    Ok(model.head_logits(h, extra)?.to_vec())
}

impl DcclForward {
    /// Runs every component. Batches with one domain or one example are
    /// accepted here; the affected term is then computed on what is present
    /// (domain) or set to zero (contrastive).
    pub fn new(model: &EncoderModel, state: &DcclState, batch: &DcclBatch) -> Result<Self, DcclError> {
        batch.check()?;
        if state.dim() != model.dim() {
            return Err(DcclError::InvalidConfig(format!(
                "DCCL state built for dimension {}, model has {}",
                state.dim(),
                model.dim()
            )));
        }
        let cfg = &state.config;
        let n = batch.len();
        let mut perturb = Vec::with_capacity(n);
        let mut h_perturbed = Vec::with_capacity(n);
        let mut domain_logits = Vec::with_capacity(n);
        let mut clean_logits = Vec::with_capacity(n);
        let mut perturbed_logits = Vec::with_capacity(n);
        let (mut u, mut u_norm, mut v, mut v_norm) = (vec![], vec![], vec![], vec![]);
        for i in 0..n {
            let h = &batch.h[i];
            if h.len() != state.dim() {
                return Err(DcclError::BatchShape);
            }
            if batch.domains[i] >= state.domains.len() {
                return Err(DcclError::BatchShape);
            }
            let trace = state.perturb(h);
            let hp: Vec<f64> = h.iter().zip(&trace.delta).map(|(a, b)| a + b).collect();
            domain_logits.push(state.domain_weight.affine(&hp, &state.domain_bias));
            clean_logits.push(head_logits(model, h, &batch.extra[i])?);
            perturbed_logits.push(head_logits(model, &hp, &batch.extra[i])?);
            let (ui, un) = normalize(&state.projection.affine(h, &state.projection_bias));
            let (vi, vn) = normalize(&state.projection.affine(&hp, &state.projection_bias));
            u.push(ui);
            u_norm.push(un);
            v.push(vi);
            v_norm.push(vn);
            perturb.push(trace);
            h_perturbed.push(hp);
        }
        let similarities = similarities(&u, &v, cfg.temperature);
        let domain = mean_ce(&domain_logits, &batch.domains);
        let consistency = consistency_loss(&clean_logits, &perturbed_logits);
        let contrastive = if n >= 2 { info_nce(&similarities) } else { 0.0 };
        let classification = classification_loss(&clean_logits, &batch.labels);
        Ok(DcclForward {
            perturb,
            h_perturbed,
            domain_logits,
            clean_logits,
            perturbed_logits,
            u,
            u_norm,
            v,
            v_norm,
            similarities,
            losses: LossBreakdown::weighted(cfg, domain, consistency, contrastive, classification),
        })
    }

    /// Gradient of the total loss.
    ///
    /// With `reverse`, the gradient of the domain term is negated where it
    /// leaves the domain classifier, so the perturbation generator and the
    /// encoder ascend the domain loss while the classifier descends it.
    /// Without it the result is the plain gradient of the total loss.
    pub fn backward(&self, model: &EncoderModel, state: &DcclState, batch: &DcclBatch, reverse: bool) -> DcclBackward {
        let cfg = &state.config;
        let n = batch.len();
        let nf = n as f64;
        let mut head = model.head.zeros_like();
        let mut g = state.zeros_like();
        let mut dh = vec![vec![0.0; state.dim()]; n];
        let mut d_hp = vec![vec![0.0; state.dim()]; n];

        // Contrastive: gradients w.r.t. the normalized projections.
        let mut du = vec![vec![0.0; cfg.projection_dim]; n];
        let mut dv = vec![vec![0.0; cfg.projection_dim]; n];
        if n >= 2 && cfg.lambda != 0.0 {
            for i in 0..n {
                let p = math::softmax(&self.similarities[i]);
                for j in 0..n {
                    let mut ds = cfg.lambda / nf * p[j];
                    if i == j {
                        ds -= cfg.lambda / nf;
                    }
                    let ds = ds / cfg.temperature;
                    math::axpy(ds, &self.v[j], &mut du[i]);
                    math::axpy(ds, &self.u[i], &mut dv[j]);
                }
            }
        }

        let sign = if reverse { -1.0 } else { 1.0 };
        for i in 0..n {
            let h = &batch.h[i];
            let hp = &self.h_perturbed[i];
            let extra = &batch.extra[i];

            // Classification and the clean side of the consistency term.
            let p = math::softmax(&self.clean_logits[i]);
            let q = math::softmax(&self.perturbed_logits[i]);
            let mut dc = p.clone();
            dc[batch.labels[i]] -= 1.0;
            dc.iter_mut().for_each(|v| *v /= nf);
            let mut dcp = vec![0.0; p.len()];
            if cfg.beta != 0.0 {
                let r: Vec<f64> = p.iter().zip(&q).map(|(a, b)| a.ln() - b.ln()).collect();
                let mean_r = math::dot(&p, &r);
                for k in 0..p.len() {
                    dc[k] += cfg.beta / nf * p[k] * (r[k] - mean_r);
                    dcp[k] = cfg.beta / nf * (q[k] - p[k]);
                }
            }
            math::add_assign(&mut dh[i], &model.backward_head(h, extra, &dc, &mut head));
            if cfg.beta != 0.0 {
                math::add_assign(&mut d_hp[i], &model.backward_head(hp, extra, &dcp, &mut head));
            }

            // Domain classifier sees h + δ.
            if cfg.alpha != 0.0 {
                let mut dd = math::softmax(&self.domain_logits[i]);
                dd[batch.domains[i]] -= 1.0;
                dd.iter_mut().for_each(|v| *v *= cfg.alpha / nf);
                g.domain_weight.add_outer(&dd, hp);
                math::add_assign(&mut g.domain_bias, &dd);
                math::axpy(sign, &state.domain_weight.matvec_t(&dd), &mut d_hp[i]);
            }

            // Projection of both views.
            if n >= 2 && cfg.lambda != 0.0 {
                let dz = normalize_backward(&self.u[i], self.u_norm[i], &du[i]);
                let dzp = normalize_backward(&self.v[i], self.v_norm[i], &dv[i]);
                g.projection.add_outer(&dz, h);
                g.projection.add_outer(&dzp, hp);
                math::add_assign(&mut g.projection_bias, &dz);
                math::add_assign(&mut g.projection_bias, &dzp);
                math::add_assign(&mut dh[i], &state.projection.matvec_t(&dz));
                math::add_assign(&mut d_hp[i], &state.projection.matvec_t(&dzp));
            }

            // h + δ: the gradient reaches h directly and through δ.
            math::add_assign(&mut dh[i], &d_hp[i]);
            let trace = &self.perturb[i];
            let d_raw = if trace.raw_norm > cfg.epsilon {
                let r_hat: Vec<f64> = trace.raw.iter().map(|v| v / trace.raw_norm).collect();
                let proj = math::dot(&r_hat, &d_hp[i]);
                let s = cfg.epsilon / trace.raw_norm;
                d_hp[i].iter().zip(&r_hat).map(|(g, r)| s * (g - r * proj)).collect()
            } else {
                d_hp[i].clone()
            };
            g.perturb_out.add_outer(&d_raw, &trace.act);
            math::add_assign(&mut g.perturb_out_bias, &d_raw);
            let d_act = state.perturb_out.matvec_t(&d_raw);
            let d_pre: Vec<f64> = d_act.iter().zip(&trace.act).map(|(g, a)| g * (1.0 - a * a)).collect();
            g.perturb_hidden.add_outer(&d_pre, h);
            math::add_assign(&mut g.perturb_hidden_bias, &d_pre);
            math::add_assign(&mut dh[i], &state.perturb_hidden.matvec_t(&d_pre));
        }
        DcclBackward { dh, head, dccl: g }
    }
}

/// Weighted sum of the four terms and the terms themselves.
pub fn total_loss(model: &EncoderModel, state: &DcclState, batch: &DcclBatch) -> Result<LossBreakdown, DcclError> {
    Ok(DcclForward::new(model, state, batch)?.losses)
}
