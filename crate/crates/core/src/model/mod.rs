//! Wide-ResNet backbone with parallel residual adapters.
//!
//! Shared state is limited to the 3×3 convolution kernels (and the
//! attention layer when it is configured as shared). Each registered domain
//! owns its 1×1 adapters, every batch-norm layer, optionally its attention
//! layer, and its classifier head.

mod checkpoint;
mod forward;
mod mask;
mod spec;

pub use checkpoint::{load, save, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use forward::{ForwardOptions, ForwardTrace, GradTargets, StepPlan};
pub use mask::{trainable_mask, Regime, TrainableMask};
pub use spec::{ArchitectureSpec, ConvLayer};

use indexmap::IndexMap;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::seed;
use crate::tensor_core::{AttentionParams, BatchNormState, Real, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid architecture: {0}")]
    InvalidSpec(String),
    #[error("duplicate domain id {0:?}")]
    DuplicateDomain(String),
    #[error("unknown domain {0:?}")]
    UnknownDomain(String),
    #[error("domain {id:?} needs at least 2 classes, got {n_classes}")]
    TooFewClasses { id: String, n_classes: usize },
    #[error("no domains given")]
    NoDomains,
    #[error("invalid input batch: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
}

/// A domain (corpus or task) registered in the bundle.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainDescriptor {
    pub id: String,
    pub n_classes: usize,
}

impl DomainDescriptor {
    pub fn new(id: impl Into<String>, n_classes: usize) -> Self {
        Self {
            id: id.into(),
            n_classes,
        }
    }
}

/// Dense → BN → ReLU → dropout → dense classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadParams<T> {
    pub fc1_w: Tensor<T>,
    pub fc1_b: Tensor<T>,
    pub bn: BatchNormState<T>,
    pub fc2_w: Tensor<T>,
    pub fc2_b: Tensor<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DomainParams<T> {
    pub n_classes: usize,
    /// `[C_out, C_in, 1, 1]`, one per backbone convolution.
    pub adapters: Vec<Tensor<T>>,
    /// One per backbone convolution, then the final batch norm.
    pub bns: Vec<BatchNormState<T>>,
    pub attention: Option<AttentionParams<T>>,
    pub head: HeadParams<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SharedParams<T> {
    /// `[C_out, C_in, 3, 3]` in forward order.
    pub convs: Vec<Tensor<T>>,
    pub attention: Option<AttentionParams<T>>,
}

/// Who owns a parameter.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Owner {
    Shared,
    Domain(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ParamGroup {
    SharedConv,
    Adapter,
    BatchNorm,
    Attention,
    Head,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamInfo {
    pub name: String,
    pub owner: Owner,
    pub group: ParamGroup,
}

/// Shared backbone plus per-domain parameter sets.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle<T> {
    pub spec: ArchitectureSpec,
    pub shared: SharedParams<T>,
    pub domains: IndexMap<String, DomainParams<T>>,
}

fn he_normal<T: Real, R: Rng + ?Sized>(shape: Vec<usize>, fan_in: usize, rng: &mut R) -> Tensor<T> {
    let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
    Tensor::from_fn(shape, |_| T::from_f64(normal.sample(rng)))
}

fn fresh_domain<T: Real>(spec: &ArchitectureSpec, n_classes: usize, seed: u64) -> DomainParams<T> {
    let mut rng = seed::rng_for(seed, "domain-init", 0);
    let c = spec.feature_channels();
    let h = spec.head_hidden_width;
    let adapters = spec
        .conv_layers()
        .iter()
        .map(|l| Tensor::zeros(vec![l.out_channels, l.in_channels, 1, 1]))
        .collect();
    let bns = spec.backbone_bn_channels().into_iter().map(BatchNormState::new).collect();
    let attention = (!spec.attention_shared).then(|| AttentionParams::init(c, &mut rng));
    let head = HeadParams {
        fc1_w: he_normal(vec![c, h], c, &mut rng),
        fc1_b: Tensor::zeros(vec![h]),
        bn: BatchNormState::new(h),
        fc2_w: he_normal(vec![h, n_classes], h, &mut rng),
        fc2_b: Tensor::zeros(vec![n_classes]),
    };
    DomainParams {
        n_classes,
        adapters,
        bns,
        attention,
        head,
    }
}

fn domain_seed(seed: u64, id: &str) -> u64 {
    seed::derive_seed(seed, &format!("domain:{id}"), 0)
}

impl<T: Real> ModelBundle<T> {
    /// Builds the network for the given domains. Convolutions and dense
    /// layers use He fan-in initialisation, adapters start at zero and batch
    /// norms at identity.
    pub fn build(spec: ArchitectureSpec, domains: &[DomainDescriptor], seed: u64) -> Result<Self, ModelError> {
        spec.validate()?;
        if domains.is_empty() {
            return Err(ModelError::NoDomains);
        }
        let mut rng = seed::rng_for(seed, "shared-init", 0);
        let convs = spec
            .conv_layers()
            .iter()
            .map(|l| {
                he_normal(
                    vec![l.out_channels, l.in_channels, spec.kernel, spec.kernel],
                    l.in_channels * spec.kernel * spec.kernel,
                    &mut rng,
                )
            })
            .collect();
        let attention = spec
            .attention_shared
            .then(|| AttentionParams::init(spec.feature_channels(), &mut rng));
        let mut bundle = Self {
            spec,
            shared: SharedParams { convs, attention },
            domains: IndexMap::new(),
        };
        for d in domains {
            if bundle.domains.contains_key(&d.id) {
                return Err(ModelError::DuplicateDomain(d.id.clone()));
            }
            bundle.add_domain(d, domain_seed(seed, &d.id))?;
        }
        Ok(bundle)
    }

    fn add_domain(&mut self, d: &DomainDescriptor, seed: u64) -> Result<(), ModelError> {
        if d.n_classes < 2 {
            return Err(ModelError::TooFewClasses {
                id: d.id.clone(),
                n_classes: d.n_classes,
            });
        }
        self.domains.insert(d.id.clone(), fresh_domain(&self.spec, d.n_classes, seed));
        Ok(())
    }

    /// Replaces (or registers) a domain with zero adapters and fresh batch
    /// norm, attention and head. Shared parameters are untouched.
    pub fn reinitialize_domain(&mut self, id: &str, n_classes: usize, seed: u64) -> Result<(), ModelError> {
        self.add_domain(&DomainDescriptor::new(id, n_classes), domain_seed(seed, id))
    }

    /// Registers `target` with a copy of `source`'s adapters, batch norms and
    /// attention, plus a fresh head.
    pub fn fork_domain(&mut self, source: &str, target: &str, n_classes: usize, seed: u64) -> Result<(), ModelError> {
        let src = self
            .domains
            .get(source)
            .ok_or_else(|| ModelError::UnknownDomain(source.to_string()))?
            .clone();
        self.reinitialize_domain(target, n_classes, seed)?;
        let dst = self.domains.get_mut(target).expect("just inserted");
        dst.adapters = src.adapters;
        dst.bns = src.bns;
        dst.attention = src.attention;
        Ok(())
    }

    pub fn domain(&self, id: &str) -> Result<&DomainParams<T>, ModelError> {
        self.domains.get(id).ok_or_else(|| ModelError::UnknownDomain(id.to_string()))
    }

    pub fn descriptors(&self) -> Vec<DomainDescriptor> {
        self.domains
            .iter()
            .map(|(id, d)| DomainDescriptor::new(id.clone(), d.n_classes))
            .collect()
    }

    /// Every trainable parameter with its metadata, in a fixed order.
    pub fn params(&self) -> Vec<(ParamInfo, &Tensor<T>)> {
        let mut out = Vec::new();
        let shared = |name: String, group| ParamInfo {
            name,
            owner: Owner::Shared,
            group,
        };
        for (i, k) in self.shared.convs.iter().enumerate() {
            out.push((shared(format!("shared.conv{i:02}.kernel"), ParamGroup::SharedConv), k));
        }
        if let Some(a) = &self.shared.attention {
            for (n, t) in [("proj_w", &a.proj_w), ("proj_b", &a.proj_b), ("score", &a.score)] {
                out.push((shared(format!("shared.attention.{n}"), ParamGroup::Attention), t));
            }
        }
        for (id, d) in &self.domains {
            let info = |name: String, group| ParamInfo {
                name: format!("domain.{id}.{name}"),
                owner: Owner::Domain(id.clone()),
                group,
            };
            for (i, a) in d.adapters.iter().enumerate() {
                out.push((info(format!("adapter{i:02}.kernel"), ParamGroup::Adapter), a));
            }
            for (i, bn) in d.bns.iter().enumerate() {
                out.push((info(format!("bn{i:02}.gamma"), ParamGroup::BatchNorm), &bn.gamma));
                out.push((info(format!("bn{i:02}.beta"), ParamGroup::BatchNorm), &bn.beta));
            }
            if let Some(a) = &d.attention {
                for (n, t) in [("proj_w", &a.proj_w), ("proj_b", &a.proj_b), ("score", &a.score)] {
                    out.push((info(format!("attention.{n}"), ParamGroup::Attention), t));
                }
            }
            let h = &d.head;
            for (n, t) in [
                ("head.fc1.w", &h.fc1_w),
                ("head.fc1.b", &h.fc1_b),
                ("head.bn.gamma", &h.bn.gamma),
                ("head.bn.beta", &h.bn.beta),
                ("head.fc2.w", &h.fc2_w),
                ("head.fc2.b", &h.fc2_b),
            ] {
                out.push((info(n.to_string(), ParamGroup::Head), t));
            }
        }
        out
    }

    /// Mutable counterpart of [`params`](Self::params), same order.
    pub fn params_mut(&mut self) -> Vec<(ParamInfo, &mut Tensor<T>)> {
        let infos: Vec<ParamInfo> = self.params().into_iter().map(|(i, _)| i).collect();
        let mut tensors: Vec<&mut Tensor<T>> = Vec::with_capacity(infos.len());
        tensors.extend(self.shared.convs.iter_mut());
        if let Some(a) = self.shared.attention.as_mut() {
            tensors.extend([&mut a.proj_w, &mut a.proj_b, &mut a.score]);
        }
        for d in self.domains.values_mut() {
            tensors.extend(d.adapters.iter_mut());
            for bn in d.bns.iter_mut() {
                tensors.push(&mut bn.gamma);
                tensors.push(&mut bn.beta);
            }
            if let Some(a) = d.attention.as_mut() {
                tensors.extend([&mut a.proj_w, &mut a.proj_b, &mut a.score]);
            }
            let h = &mut d.head;
            tensors.extend([
                &mut h.fc1_w,
                &mut h.fc1_b,
                &mut h.bn.gamma,
                &mut h.bn.beta,
                &mut h.fc2_w,
                &mut h.fc2_b,
            ]);
        }
        infos.into_iter().zip(tensors).collect()
    }

    /// Batch-norm running statistics, named like the parameters they belong to.
    pub fn buffers(&self) -> Vec<(String, Owner, &[T])> {
        let mut out = Vec::new();
        for (id, d) in &self.domains {
            let owner = Owner::Domain(id.clone());
            let named = d
                .bns
                .iter()
                .enumerate()
                .map(|(i, bn)| (format!("bn{i:02}"), bn))
                .chain(std::iter::once(("head.bn".to_string(), &d.head.bn)));
            for (prefix, bn) in named {
                out.push((format!("domain.{id}.{prefix}.running_mean"), owner.clone(), &bn.running_mean[..]));
                out.push((format!("domain.{id}.{prefix}.running_var"), owner.clone(), &bn.running_var[..]));
            }
        }
        out
    }

    pub(crate) fn buffers_mut(&mut self) -> Vec<&mut Vec<T>> {
        let mut out = Vec::new();
        for d in self.domains.values_mut() {
            for bn in d.bns.iter_mut().chain(std::iter::once(&mut d.head.bn)) {
                out.push(&mut bn.running_mean);
                out.push(&mut bn.running_var);
            }
        }
        out
    }

    pub fn count_params(&self, filter: impl Fn(&ParamInfo) -> bool) -> usize {
        self.params().iter().filter(|(i, _)| filter(i)).map(|(_, t)| t.numel()).sum()
    }

    pub fn shared_conv_param_count(&self) -> usize {
        self.count_params(|i| i.group == ParamGroup::SharedConv)
    }

    pub fn adapter_param_count(&self, domain: &str) -> usize {
        self.count_params(|i| i.group == ParamGroup::Adapter && i.owner == Owner::Domain(domain.to_string()))
    }

    pub fn total_param_count(&self) -> usize {
        self.count_params(|_| true)
    }

    /// SHA-256 over the names and values of the selected parameters and of
    /// the running statistics of the selected owners.
    pub fn checksum(&self, filter: impl Fn(&ParamInfo) -> bool, owners: impl Fn(&Owner) -> bool) -> String {
        let mut hasher = Sha256::new();
        for (info, t) in self.params() {
            if filter(&info) {
                hasher.update(info.name.as_bytes());
                for v in t.data() {
                    hasher.update(v.to_f64().to_le_bytes());
                }
            }
        }
        for (name, owner, values) in self.buffers() {
            if owners(&owner) {
                hasher.update(name.as_bytes());
                for v in values {
                    hasher.update(v.to_f64().to_le_bytes());
                }
            }
        }
        hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }

    pub fn checksum_shared(&self) -> String {
        self.checksum(|i| i.owner == Owner::Shared, |o| *o == Owner::Shared)
    }

    pub fn checksum_domain(&self, id: &str) -> String {
        let owner = Owner::Domain(id.to_string());
        self.checksum(|i| i.owner == owner, |o| *o == owner)
    }

    pub fn zero_grads(&mut self) {
        for (_, t) in self.params_mut() {
            t.clear_grad();
        }
    }

    pub fn convert<U: Real>(&self) -> ModelBundle<U> {
        fn bn<T: Real, U: Real>(b: &BatchNormState<T>) -> BatchNormState<U> {
            BatchNormState {
                gamma: b.gamma.convert(),
                beta: b.beta.convert(),
                running_mean: b.running_mean.iter().map(|v| U::from_f64(v.to_f64())).collect(),
                running_var: b.running_var.iter().map(|v| U::from_f64(v.to_f64())).collect(),
                epsilon: U::from_f64(b.epsilon.to_f64()),
                momentum_stats: U::from_f64(b.momentum_stats.to_f64()),
            }
        }
        fn att<T: Real, U: Real>(a: &AttentionParams<T>) -> AttentionParams<U> {
            AttentionParams {
                proj_w: a.proj_w.convert(),
                proj_b: a.proj_b.convert(),
                score: a.score.convert(),
            }
        }
        ModelBundle {
            spec: self.spec.clone(),
            shared: SharedParams {
                convs: self.shared.convs.iter().map(Tensor::convert).collect(),
                attention: self.shared.attention.as_ref().map(att),
            },
            domains: self
                .domains
                .iter()
                .map(|(id, d)| {
                    (
                        id.clone(),
                        DomainParams {
                            n_classes: d.n_classes,
                            adapters: d.adapters.iter().map(Tensor::convert).collect(),
                            bns: d.bns.iter().map(bn).collect(),
                            attention: d.attention.as_ref().map(att),
                            head: HeadParams {
                                fc1_w: d.head.fc1_w.convert(),
                                fc1_b: d.head.fc1_b.convert(),
                                bn: bn(&d.head.bn),
                                fc2_w: d.head.fc2_w.convert(),
                                fc2_b: d.head.fc2_b.convert(),
                            },
                        },
                    )
                })
                .collect(),
        }
    }
}
