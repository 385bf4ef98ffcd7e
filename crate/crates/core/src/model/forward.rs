use rand::RngCore;

use super::{DomainParams, ModelBundle, ModelError, SharedParams};
use crate::tensor_core::{
    attention_pool, attention_pool_backward, avgpool2d, avgpool2d_backward, batchnorm_backward, batchnorm_stateless,
    conv2d, conv2d_backward_selective, dense, dense_backward, dropout_mask, pad_channels, pad_channels_backward, relu,
    relu_backward, update_running_stats, AttentionCache, AttentionParams, BatchNormCache, BatchStats, Mode, Padding,
    Real, Tensor,
};

/// Switches for an inference pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForwardOptions {
    /// When false the 1×1 adapter branches are skipped entirely, giving the
    /// shared-only network with this domain's batch norms and head.
    pub use_adapters: bool,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self { use_adapters: true }
    }
}

/// Which parameter groups receive gradients in [`ModelBundle::backward`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GradTargets {
    pub shared: bool,
    /// Adapters, backbone batch norms and a domain-owned attention layer.
    pub domain_backbone: bool,
    pub head: bool,
}

/// How one training step runs the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepPlan {
    pub backbone_mode: Mode,
    pub head_mode: Mode,
    pub dropout: bool,
    pub grads: GradTargets,
}

impl StepPlan {
    /// Everything trainable, batch statistics everywhere, dropout on.
    pub fn full() -> Self {
        Self {
            backbone_mode: Mode::Train,
            head_mode: Mode::Train,
            dropout: true,
            grads: GradTargets {
                shared: true,
                domain_backbone: true,
                head: true,
            },
        }
    }
}

#[derive(Debug)]
struct ConvUnit<T> {
    input: Tensor<T>,
    stride: usize,
    bn: BatchNormCache<T>,
}

#[derive(Debug)]
struct BlockTrace<T> {
    a: ConvUnit<T>,
    b: ConvUnit<T>,
    downsample: bool,
    in_channels: usize,
    in_shape: Vec<usize>,
    in_lengths: Vec<usize>,
    out: Tensor<T>,
}

/// Activations and caches of one forward pass, consumed by
/// [`ModelBundle::backward`].
#[derive(Debug)]
pub struct ForwardTrace<T> {
    domain: String,
    use_adapters: bool,
    stem: ConvUnit<T>,
    blocks: Vec<BlockTrace<T>>,
    final_bn: BatchNormCache<T>,
    features: Tensor<T>,
    attention: AttentionCache<T>,
    pooled: Tensor<T>,
    head_bn: BatchNormCache<T>,
    head_act: Tensor<T>,
    dropout: Option<Vec<T>>,
    head_out: Tensor<T>,
}

impl<T> ForwardTrace<T> {
    pub fn domain(&self) -> &str {
        &self.domain
    }
}

struct Pass<'a, T> {
    shared: &'a SharedParams<T>,
    dom: &'a DomainParams<T>,
    use_adapters: bool,
    backbone_mode: Mode,
    stats: Vec<(usize, BatchStats<T>)>,
}

fn add_assign<T: Real>(acc: &mut Tensor<T>, other: &Tensor<T>) {
    debug_assert_eq!(acc.shape(), other.shape());
    for (a, &b) in acc.data_mut().iter_mut().zip(other.data()) {
        *a += b;
    }
}

fn halve(lengths: &[usize]) -> Vec<usize> {
    lengths.iter().map(|l| l.div_ceil(2)).collect()
}

impl<T: Real> Pass<'_, T> {
    fn conv_unit(&mut self, idx: usize, x: Tensor<T>, stride: usize, lengths: &[usize]) -> Result<(Tensor<T>, ConvUnit<T>), ModelError> {
        let mut y = conv2d(&x, &self.shared.convs[idx], stride, Padding::Same)?;
        if self.use_adapters {
            add_assign(&mut y, &conv2d(&x, &self.dom.adapters[idx], stride, Padding::Same)?);
        }
        let (out, bn, stats) = batchnorm_stateless(&y, &self.dom.bns[idx], self.backbone_mode, Some(lengths))?;
        if let Some(s) = stats {
            self.stats.push((idx, s));
        }
        Ok((out, ConvUnit { input: x, stride, bn }))
    }
}

fn attention_of<'a, T>(shared: &'a SharedParams<T>, dom: &'a DomainParams<T>) -> &'a AttentionParams<T> {
    dom.attention
        .as_ref()
        .or(shared.attention.as_ref())
        .expect("attention is either shared or per domain")
}

fn check_batch<T: Real>(input: &Tensor<T>, lengths: &[usize]) -> Result<(), ModelError> {
    let (n, c, h, w) = input.dims4("forward")?;
    if c != 1 {
        return Err(ModelError::InvalidInput(format!("expected 1 input channel, got {c}")));
    }
    if n == 0 || h == 0 || w == 0 {
        return Err(ModelError::InvalidInput(format!("empty batch {:?}", input.shape())));
    }
    if lengths.len() != n {
        return Err(ModelError::InvalidInput(format!("{} lengths for {n} samples", lengths.len())));
    }
    if let Some(l) = lengths.iter().find(|&&l| l == 0 || l > w) {
        return Err(ModelError::InvalidInput(format!("length {l} outside 1..={w}")));
    }
    Ok(())
}

impl<T: Real> ModelBundle<T> {
    /// Eval-mode logits `[N, n_classes]` for a zero-padded batch
    /// `[N, 1, n_mels, W]` with per-sample valid frame counts.
    pub fn forward(&self, domain: &str, input: &Tensor<T>, lengths: &[usize]) -> Result<Tensor<T>, ModelError> {
        self.forward_with(domain, input, lengths, ForwardOptions::default())
    }

    pub fn forward_with(
        &self,
        domain: &str,
        input: &Tensor<T>,
        lengths: &[usize],
        options: ForwardOptions,
    ) -> Result<Tensor<T>, ModelError> {
        let (logits, _, _) = self.run(domain, input, lengths, Mode::Eval, Mode::Eval, options.use_adapters, None)?;
        Ok(logits)
    }

    /// Training-mode pass. Batch norms in train mode update their running
    /// statistics; the returned trace feeds [`backward`](Self::backward).
    pub fn forward_train<R: RngCore>(
        &mut self,
        domain: &str,
        input: &Tensor<T>,
        lengths: &[usize],
        plan: &StepPlan,
        rng: &mut R,
    ) -> Result<(Tensor<T>, ForwardTrace<T>), ModelError> {
        let dropout_rng = plan.dropout.then_some(rng as &mut dyn RngCore);
        let (logits, trace, stats) =
            self.run(domain, input, lengths, plan.backbone_mode, plan.head_mode, true, dropout_rng)?;
        let dom = self.domains.get_mut(domain).expect("checked by run");
        let last = dom.bns.len();
        for (idx, s) in &stats {
            let state = if *idx == last { &mut dom.head.bn } else { &mut dom.bns[*idx] };
            update_running_stats(state, s);
        }
        Ok((logits, trace))
    }

    #[allow(clippy::type_complexity, clippy::too_many_arguments)]
    fn run(
        &self,
        domain: &str,
        input: &Tensor<T>,
        lengths: &[usize],
        backbone_mode: Mode,
        head_mode: Mode,
        use_adapters: bool,
        dropout_rng: Option<&mut dyn RngCore>,
    ) -> Result<(Tensor<T>, ForwardTrace<T>, Vec<(usize, BatchStats<T>)>), ModelError> {
        let dom = self.domain(domain)?;
        check_batch(input, lengths)?;
        let mut pass = Pass {
            shared: &self.shared,
            dom,
            use_adapters,
            backbone_mode,
            stats: Vec::new(),
        };

        let mut cur_len = lengths.to_vec();
        let (h, stem) = pass.conv_unit(0, input.clone(), 1, &cur_len)?;
        let mut h = relu(&h);
        let mut blocks = Vec::new();
        let mut idx = 1;
        for &filters in &self.spec.stack_filters {
            for b in 0..self.spec.blocks_per_stack {
                let stride = if b == 0 { 2 } else { 1 };
                let out_len = if stride == 2 { halve(&cur_len) } else { cur_len.clone() };
                let in_channels = h.shape()[1];
                let in_shape = h.shape().to_vec();
                let shortcut = if stride == 2 {
                    pad_channels(&avgpool2d(&h, 2, 2, Some(&cur_len))?, filters)?
                } else {
                    h.clone()
                };
                let (u, a) = pass.conv_unit(idx, h, stride, &out_len)?;
                let (mut v, b_unit) = pass.conv_unit(idx + 1, relu(&u), 1, &out_len)?;
                add_assign(&mut v, &shortcut);
                let out = relu(&v);
                blocks.push(BlockTrace {
                    a,
                    b: b_unit,
                    downsample: stride == 2,
                    in_channels,
                    in_shape,
                    in_lengths: std::mem::replace(&mut cur_len, out_len),
                    out: out.clone(),
                });
                h = out;
                idx += 2;
            }
        }

        let (f, final_bn, stats) = batchnorm_stateless(&h, &dom.bns[idx], backbone_mode, Some(&cur_len))?;
        if let Some(s) = stats {
            pass.stats.push((idx, s));
        }
        let features = relu(&f);
        let (pooled, attention) = attention_pool(&features, &cur_len, attention_of(&self.shared, dom))?;

        let head = &dom.head;
        let n = pooled.shape()[0];
        let hidden = head.fc1_b.numel();
        let z = dense(&pooled, &head.fc1_w, &head.fc1_b)?.reshape(vec![n, hidden, 1, 1])?;
        let (z, head_bn, stats) = batchnorm_stateless(&z, &head.bn, head_mode, None)?;
        if let Some(s) = stats {
            pass.stats.push((idx + 1, s));
        }
        let head_act = relu(&z).reshape(vec![n, hidden])?;
        let rate = self.spec.head_dropout_rate;
        let mask = dropout_rng.filter(|_| rate > 0.0).map(|rng| dropout_mask::<T, _>(n * hidden, rate, rng));
        let head_out = match &mask {
            Some(m) => {
                let data = head_act.data().iter().zip(m).map(|(&a, &k)| a * k).collect();
                Tensor::new(vec![n, hidden], data)?
            }
            None => head_act.clone(),
        };
        let logits = dense(&head_out, &head.fc2_w, &head.fc2_b)?;
        let stats = pass.stats;
        Ok((
            logits,
            ForwardTrace {
                domain: domain.to_string(),
                use_adapters,
                stem,
                blocks,
                final_bn,
                features,
                attention,
                pooled,
                head_bn,
                head_act,
                dropout: mask,
                head_out,
            },
            stats,
        ))
    }

    /// Accumulates gradients of the loss (given `d loss / d logits`) into
    /// the `grad` buffers of the targeted parameters.
    pub fn backward(&mut self, trace: &ForwardTrace<T>, grad_logits: &Tensor<T>, targets: GradTargets) -> Result<(), ModelError> {
        let ModelBundle { shared, domains, .. } = self;
        let dom = domains
            .get_mut(&trace.domain)
            .ok_or_else(|| ModelError::UnknownDomain(trace.domain.clone()))?;
        let n = trace.pooled.shape()[0];
        let hidden = dom.head.fc1_b.numel();

        let head = &mut dom.head;
        let (d_out, dw2, db2) = dense_backward(grad_logits, &trace.head_out, &head.fc2_w, &head.fc2_b)?;
        let mut d_act = d_out;
        if let Some(mask) = &trace.dropout {
            for (d, &m) in d_act.data_mut().iter_mut().zip(mask) {
                *d *= m;
            }
        }
        let d_z = relu_backward(&d_act, &trace.head_act)?.reshape(vec![n, hidden, 1, 1])?;
        let (d_z, dg, db) = batchnorm_backward(&d_z, &trace.head_bn, &head.bn)?;
        let d_z = d_z.reshape(vec![n, hidden])?;
        let (d_pooled, dw1, db1) = dense_backward(&d_z, &trace.pooled, &head.fc1_w, &head.fc1_b)?;
        if targets.head {
            head.fc2_w.accumulate_grad(dw2.data());
            head.fc2_b.accumulate_grad(db2.data());
            head.bn.gamma.accumulate_grad(&dg);
            head.bn.beta.accumulate_grad(&db);
            head.fc1_w.accumulate_grad(dw1.data());
            head.fc1_b.accumulate_grad(db1.data());
        }
        if !(targets.shared || targets.domain_backbone) {
            return Ok(());
        }

        let ag = attention_pool_backward(&d_pooled, &trace.attention, attention_of(shared, dom))?;
        let att = match dom.attention.as_mut() {
            Some(a) => targets.domain_backbone.then_some(a),
            None => targets.shared.then(|| shared.attention.as_mut().expect("shared attention")),
        };
        if let Some(a) = att {
            a.proj_w.accumulate_grad(&ag.proj_w);
            a.proj_b.accumulate_grad(&ag.proj_b);
            a.score.accumulate_grad(&ag.score);
        }

        let d_f = relu_backward(&ag.features, &trace.features)?;
        let last = dom.bns.len() - 1;
        let (mut dh, dg, db) = batchnorm_backward(&d_f, &trace.final_bn, &dom.bns[last])?;
        if targets.domain_backbone {
            dom.bns[last].gamma.accumulate_grad(&dg);
            dom.bns[last].beta.accumulate_grad(&db);
        }

        let mut unit_backward = |unit: &ConvUnit<T>, dy: &Tensor<T>, idx: usize, want_input: bool| -> Result<Option<Tensor<T>>, ModelError> {
            let (dz, dg, db) = batchnorm_backward(dy, &unit.bn, &dom.bns[idx])?;
            if targets.domain_backbone {
                dom.bns[idx].gamma.accumulate_grad(&dg);
                dom.bns[idx].beta.accumulate_grad(&db);
            }
            let (mut dx, dk) = conv2d_backward_selective(
                &dz,
                &unit.input,
                &shared.convs[idx],
                unit.stride,
                Padding::Same,
                want_input,
                targets.shared,
            )?;
            if let Some(dk) = dk {
                shared.convs[idx].accumulate_grad(dk.data());
            }
            if trace.use_adapters {
                let (dxa, da) = conv2d_backward_selective(
                    &dz,
                    &unit.input,
                    &dom.adapters[idx],
                    unit.stride,
                    Padding::Same,
                    want_input,
                    targets.domain_backbone,
                )?;
                if let Some(da) = da {
                    dom.adapters[idx].accumulate_grad(da.data());
                }
                if let (Some(dx), Some(dxa)) = (dx.as_mut(), dxa) {
                    add_assign(dx, &dxa);
                }
            }
            Ok(dx)
        };

        let mut idx = 1 + 2 * trace.blocks.len();
        for block in trace.blocks.iter().rev() {
            idx -= 2;
            let d_pre = relu_backward(&dh, &block.out)?;
            let d_u = unit_backward(&block.b, &d_pre, idx + 1, true)?.expect("requested");
            let d_u = relu_backward(&d_u, &block.b.input)?;
            let mut d_in = unit_backward(&block.a, &d_u, idx, true)?.expect("requested");
            if block.downsample {
                let d_s = pad_channels_backward(&d_pre, block.in_channels)?;
                let d_s = avgpool2d_backward(&d_s, &block.in_shape, 2, 2, Some(&block.in_lengths))?;
                add_assign(&mut d_in, &d_s);
            } else {
                add_assign(&mut d_in, &d_pre);
            }
            dh = d_in;
        }
        // the stem's ReLU output is the first block's input
        let d_stem = relu_backward(&dh, &trace.blocks[0].a.input)?;
        unit_backward(&trace.stem, &d_stem, 0, false)?;
        Ok(())
    }
}

/// Owned copy of the running statistics, used by tests that must prove a
/// pass leaves them untouched.
#[cfg(test)]
pub(crate) fn running_stats<T: Real>(bundle: &ModelBundle<T>, domain: &str) -> Vec<Vec<T>> {
    let d = &bundle.domains[domain];
    d.bns
        .iter()
        .chain(std::iter::once(&d.head.bn))
        .flat_map(|b| [b.running_mean.clone(), b.running_var.clone()])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::{ArchitectureSpec, DomainDescriptor};
    use super::*;
    use crate::tensor_core::softmax;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny() -> ModelBundle<f64> {
        ModelBundle::build(ArchitectureSpec::tiny(), &[DomainDescriptor::new("d", 3)], 1).unwrap()
    }

    fn batch(n: usize, h: usize, w: usize, seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(vec![n, 1, h, w], |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn logits_shape_and_probabilities() {
        let m = tiny();
        let y = m.forward("d", &batch(2, 16, 12, 0), &[12, 7]).unwrap();
        assert_eq!(y.shape(), &[2, 3]);
        for row in softmax(&y).unwrap().data().chunks(3) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unknown_domain_and_bad_lengths_error() {
        let m = tiny();
        let x = batch(1, 8, 8, 0);
        assert!(matches!(m.forward("nope", &x, &[8]), Err(ModelError::UnknownDomain(_))));
        assert!(matches!(m.forward("d", &x, &[9]), Err(ModelError::InvalidInput(_))));
        assert!(matches!(m.forward("d", &x, &[0]), Err(ModelError::InvalidInput(_))));
    }

    #[test]
    fn trailing_padding_is_inert() {
        let mut m = tiny();
        // non-trivial running statistics and adapters
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        m.forward_train("d", &batch(4, 16, 13, 2), &[13, 13, 9, 5], &StepPlan::full(), &mut rng).unwrap();
        for a in m.domains["d"].adapters.clone().iter().enumerate() {
            let t = Tensor::from_fn(a.1.shape().to_vec(), |_| rng.random_range(-0.1..0.1));
            m.domains.get_mut("d").unwrap().adapters[a.0] = t;
        }
        let x = batch(1, 16, 11, 3);
        let mut wide = Tensor::<f64>::zeros(vec![1, 1, 16, 29]);
        for y in 0..16 {
            wide.data_mut()[y * 29..y * 29 + 11].copy_from_slice(&x.data()[y * 11..(y + 1) * 11]);
        }
        let a = m.forward("d", &x, &[11]).unwrap();
        let b = m.forward("d", &wide, &[11]).unwrap();
        for (p, q) in a.data().iter().zip(b.data()) {
            assert!((p - q).abs() < 1e-9, "{p} vs {q}");
        }
    }

    #[test]
    fn duplicated_sample_gives_identical_rows() {
        let m = tiny();
        let x = batch(1, 16, 10, 5);
        let mut two = x.data().to_vec();
        two.extend_from_slice(x.data());
        let y = m.forward("d", &Tensor::new(vec![2, 1, 16, 10], two).unwrap(), &[10, 10]).unwrap();
        assert_eq!(&y.data()[..3], &y.data()[3..]);
    }

    #[test]
    fn eval_forward_leaves_running_stats() {
        let m = tiny();
        let before = running_stats(&m, "d");
        m.forward("d", &batch(2, 16, 9, 1), &[9, 4]).unwrap();
        assert_eq!(running_stats(&m, "d"), before);
    }

    #[test]
    fn frozen_backbone_plan_keeps_backbone_stats() {
        let mut m = tiny();
        let plan = StepPlan {
            backbone_mode: Mode::Eval,
            head_mode: Mode::Train,
            dropout: true,
            grads: GradTargets {
                shared: false,
                domain_backbone: false,
                head: true,
            },
        };
        let before = running_stats(&m, "d");
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (y, trace) = m.forward_train("d", &batch(3, 16, 9, 1), &[9, 4, 6], &plan, &mut rng).unwrap();
        m.backward(&trace, &Tensor::full(y.shape().to_vec(), 0.1), plan.grads).unwrap();
        let after = running_stats(&m, "d");
        assert_eq!(&after[..28], &before[..28]);
        assert_ne!(&after[28..], &before[28..]);
        assert!(m.shared.convs.iter().all(|k| k.grad().is_none()));
        assert!(m.domains["d"].head.fc2_w.grad().is_some());
    }
}
